#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "ebsched/prices.hpp"
#include "ebsched/schedule.hpp"

namespace ebsched {

using Rng = std::mt19937_64;

// Numerical slack for comparisons against battery bounds.
inline constexpr double kSocTolerance = 1e-9;

// Per-step traction power drawn while operating (kW, <= 0).
struct DischargeProfile {
  enum class Kind { TruncatedNormal, Discrete };
  Kind kind = Kind::TruncatedNormal;
  double mean_kw = -90.0;
  double std_kw = 9.0;
  double rush_multiplier = 1.0;
  std::vector<std::pair<double, double>> pmf;  // (kW, probability) for Kind::Discrete
};

struct EnvConfig {
  double dt_hours = 1.0 / 6.0;
  double e_min_kwh = 0.0;
  double e_max_kwh = 240.0;
  double c_max_kw = 120.0;
  double d_max_kw = 120.0;
  double c_end = 50.0;
  int w_p = 4;
  double initial_soc_kwh = 240.0;
  std::vector<double> action_levels_kw = {-120.0, -60.0, 0.0, 60.0, 120.0};
  bool clip_actions = true;
  std::vector<double> option_grid_kwh;  // empty -> 10 kWh steps over [e_min, e_max]
  HazardMode hazard_mode = HazardMode::ExactHazard;
  DischargeProfile discharge;
  bool floor_clip_discharge = false;

  void validate() const;
  const std::vector<double>& options() const;
  int num_actions() const { return static_cast<int>(action_levels_kw.size()); }
  int num_options() const { return static_cast<int>(options().size()); }
  // Largest |power| * dt * price over a step, for scaling penalties.
  double max_step_cost(double max_price) const;

 private:
  mutable std::vector<double> default_options_;
};

// {-d_max .. 0 .. c_max} with `levels` entries (odd, >= 3).
std::vector<double> make_action_grid(double d_max_kw, double c_max_kw, int levels);
std::vector<double> make_option_grid(double e_min_kwh, double e_max_kwh, double step_kwh);

struct EnvState {
  double soc = 0.0;                 // E_t, kWh
  int period_flag = 1;              // B_t: 1 charging, 0 operating
  int tau = 0;                      // steps to the next scheduled departure
  std::vector<double> price_window; // H_t, oldest first
  int period_index = 0;             // k_t
  std::int64_t step_index = 0;      // global price index of this step
  int episode_step = 0;             // steps since reset

  bool charging() const { return period_flag == 1; }
  bool terminal(double e_min_kwh) const { return soc < e_min_kwh - kSocTolerance; }
  double price() const { return price_window.back(); }
};

struct ActionChoice {
  int index = 0;       // slot in EnvConfig::action_levels_kw
  double power = 0.0;  // kW actually applied (may be capacity-clipped)
};

enum class PeriodBoundary { None, ChargingStarted, OperatingStarted };

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  bool terminal = false;          // soc fell below e_min
  bool episode_complete = false;  // last operating period ended normally
  PeriodBoundary boundary = PeriodBoundary::None;
  double power = 0.0;             // C_t applied over the step
  double price = 0.0;             // P_t
};

// Departure counter update: reset on departure, otherwise count down.
int advance_tau(int tau, int period_flag, int next_period_flag, int next_gap_steps);
int advance_tau(const EnvState& state, int next_period_flag, const Schedule& schedule);

// Elapsed trip steps including the current one: T^d - tau + 1.
int elapsed_operating_steps(const EnvState& state, const Schedule& schedule);

double termination_prob(const EnvState& state, const Schedule& schedule, HazardMode mode);

inline double apply_battery_dynamics(double soc, double power_kw, double dt_hours) {
  return soc + power_kw * dt_hours;
}

// Grid levels admissible in a charging state; with clip_actions the first level
// beyond each capacity bound is kept at the bound. Never empty.
std::vector<ActionChoice> feasible_actions(const EnvState& state, const EnvConfig& cfg);

// Option-grid indices inside [E - tau*D*dt, E + tau*C*dt] and the battery bounds.
std::vector<int> feasible_options(const EnvState& state, const EnvConfig& cfg);
std::vector<int> all_options(const EnvConfig& cfg);

double sample_operating_discharge(const EnvState& state, Rng& rng, const DischargeProfile& profile,
                                  const EnvConfig& cfg, bool rush);

// One simulator transition. `action` must be present iff the state is charging.
StepOutcome step(const EnvState& state, std::optional<ActionChoice> action, Rng& rng,
                 const PriceSeries& prices, const Schedule& schedule, const EnvConfig& cfg);

EnvState reset_state(int day, Rng& rng, const PriceSeries& prices, const Schedule& schedule,
                     const EnvConfig& cfg);

// Number of forced arrivals (exhausted travel support) seen so far, process-wide.
std::uint64_t forced_arrival_count();

// Owns the mutable episode state and RNG; configuration is shared read-only.
class BusChargingEnv {
 public:
  BusChargingEnv(std::shared_ptr<const EnvConfig> cfg, std::shared_ptr<const Schedule> schedule,
                 std::shared_ptr<const PriceSeries> prices);

  const EnvState& reset(int day, std::uint64_t seed);
  StepOutcome step(std::optional<ActionChoice> action);
  StepOutcome step_action(int action_index);  // charging only

  const EnvState& state() const { return state_; }
  bool done() const { return done_; }
  int day() const { return day_; }
  std::int64_t day_start() const { return day_start_; }
  const EnvConfig& config() const { return *cfg_; }
  const Schedule& schedule() const { return *schedule_; }
  const PriceSeries& prices() const { return *prices_; }
  int clock_minutes(const EnvState& s) const;

 private:
  std::shared_ptr<const EnvConfig> cfg_;
  std::shared_ptr<const Schedule> schedule_;
  std::shared_ptr<const PriceSeries> prices_;
  Rng rng_;
  EnvState state_;
  bool done_ = true;
  int day_ = 0;
  std::int64_t day_start_ = 0;
};

}  // namespace ebsched
