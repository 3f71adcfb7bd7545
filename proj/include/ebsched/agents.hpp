#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ebsched/env.hpp"
#include "ebsched/features.hpp"
#include "ebsched/qnet.hpp"

namespace ebsched {

enum class Mode { HddqnHer, Hddqn, DdqnOriginal, DdqnLow, DdqnHigh };

Mode parse_mode(const std::string& text);
std::string to_string(Mode mode);
const std::vector<Mode>& all_modes();

bool mode_has_high(Mode m);
bool mode_has_low(Mode m);
bool mode_has_flat(Mode m);

struct TrainConfig {
  int episodes = 3000;
  int phase_threshold = 750;  // episodes before this use counterfactual high rewards
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_anneal_fraction = 0.6;
  int batch_high = 128;
  int batch_low = 64;
  double lr_high = 1e-3;
  double lr_low = 1e-3;
  double lr_ddqn_low = 1e-3;
  std::vector<int> hidden = {64, 64};
  std::vector<int> hidden_ddqn_low = {64, 64};
  double kappa = 0.005;
  double kappa_prime = 0.0006;
  int sync_every = 200;
  std::size_t low_capacity = 100000;
  std::size_t high_capacity = 10000;
  int eval_every = 100;
  int eval_episodes = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

// Linear anneal from start to end over the first `fraction` of `episodes`.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double fraction = 0.6;
  int episodes = 1;
  double value(int episode) const;
};

// Learned components for one mode, plus what is needed to encode their inputs.
struct PolicyBundle {
  Mode mode = Mode::HddqnHer;
  std::optional<QNetwork> high;
  std::optional<QNetwork> low;
  std::optional<QNetwork> flat;
  FeatureBounds bounds;

  void check_consistent() const;
};

PolicyBundle make_policy_bundle(Mode mode, const TrainConfig& tc, const EnvConfig& ec, const FeatureBounds& bounds,
                                std::uint64_t seed);

// Uniform over `feasible` with probability epsilon, else the feasible argmax
// (ties to the lowest index).
int epsilon_greedy(const Eigen::VectorXd& values, const std::vector<int>& feasible, double epsilon, Rng& rng);

inline double charging_step_reward(double power_kw, double dt_hours, double price) {
  return -power_kw * dt_hours * price;
}

// Interior steps (achieved_end_soc empty) return the charging reward; at the
// low-level boundary returns -kappa * (option - end soc)^2.
double low_reward(double power_kw, double dt_hours, double price, double option_kwh,
                  std::optional<double> achieved_end_soc, double kappa);

double target_penalty(double option_kwh, double end_soc_kwh, double kappa);

// Fixed intra-option policy: the feasible power whose next soc lands closest to
// the target (ties to the smaller magnitude), so it runs at full power while far
// from the target and holds once within half a grid step.
ActionChoice pi_q(const EnvState& state, double option_kwh, const EnvConfig& cfg);

inline double high_reward_accumulate(double running, double step_reward) { return running + step_reward; }

// What the environment showed during one charging period and the following trip.
struct PeriodRecord {
  double start_soc = 0.0;
  std::vector<double> charging_prices;  // P_t for each charging step, in order
  double operating_reward = 0.0;        // 0, or -C_end when the trip ended terminal
  bool valid = false;
};

// Replays pi_q toward `target` over the recorded charging prices and adds the
// recorded operating outcome.
double counterfactual_high_reward(const PeriodRecord& record, double target_kwh, const EnvConfig& cfg);

// Phase-dependent high reward: counterfactual before the threshold, else the
// behaviour accumulation.
double phase_high_reward(int episode, int phase_threshold, const PeriodRecord& record, double target_kwh,
                         double behaviour_reward, const EnvConfig& cfg);

int nearest_option_index(const std::vector<double>& grid, double soc);

}  // namespace ebsched
