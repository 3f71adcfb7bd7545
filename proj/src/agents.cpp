#include "ebsched/agents.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ebsched/errors.hpp"

namespace ebsched {

Mode parse_mode(const std::string& text) {
  for (Mode m : all_modes()) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown mode '" + text + "' (expected hddqn_her, hddqn, ddqn_original, ddqn_low or ddqn_high)");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::HddqnHer: return "hddqn_her";
    case Mode::Hddqn: return "hddqn";
    case Mode::DdqnOriginal: return "ddqn_original";
    case Mode::DdqnLow: return "ddqn_low";
    case Mode::DdqnHigh: return "ddqn_high";
  }
  return "?";
}

const std::vector<Mode>& all_modes() {
  static const std::vector<Mode> kModes = {Mode::HddqnHer, Mode::Hddqn, Mode::DdqnHigh, Mode::DdqnOriginal,
                                           Mode::DdqnLow};
  return kModes;
}

bool mode_has_high(Mode m) { return m == Mode::HddqnHer || m == Mode::Hddqn || m == Mode::DdqnHigh; }
bool mode_has_low(Mode m) { return m == Mode::HddqnHer || m == Mode::Hddqn || m == Mode::DdqnLow; }
bool mode_has_flat(Mode m) { return m == Mode::DdqnOriginal; }

void TrainConfig::validate() const {
  if (episodes < 1) throw ConfigError("episodes must be at least 1");
  if (phase_threshold < 0 || phase_threshold > episodes) throw ConfigError("phase_threshold must lie in [0, episodes]");
  if (eps_start < 0.0 || eps_start > 1.0 || eps_end < 0.0 || eps_end > 1.0 || eps_end > eps_start) {
    throw ConfigError("epsilon schedule must satisfy 0 <= eps_end <= eps_start <= 1");
  }
  if (eps_anneal_fraction <= 0.0 || eps_anneal_fraction > 1.0) throw ConfigError("eps_anneal_fraction must be in (0, 1]");
  if (batch_high < 1 || batch_low < 1) throw ConfigError("batch sizes must be positive");
  if (!(lr_high > 0.0) || !(lr_low > 0.0) || !(lr_ddqn_low > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(kappa > 0.0) || !(kappa_prime > 0.0)) throw ConfigError("kappa and kappa_prime must be positive");
  if (sync_every < 1) throw ConfigError("sync_every must be positive");
  if (low_capacity < 1 || high_capacity < 1) throw ConfigError("replay capacities must be positive");
  if (eval_every < 1 || eval_episodes < 1) throw ConfigError("evaluation cadence must be positive");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
  for (int h : hidden_ddqn_low) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
}

double EpsilonSchedule::value(int episode) const {
  const double span = std::max(1.0, fraction * episodes);
  const double x = std::clamp(episode / span, 0.0, 1.0);
  return std::clamp(start + (end - start) * x, 0.0, 1.0);
}

void PolicyBundle::check_consistent() const {
  if (high.has_value() != mode_has_high(mode) || low.has_value() != mode_has_low(mode) ||
      flat.has_value() != mode_has_flat(mode)) {
    throw ContractViolation("policy networks do not match mode " + to_string(mode));
  }
}

namespace {

std::vector<int> layers(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

}  // namespace

PolicyBundle make_policy_bundle(Mode mode, const TrainConfig& tc, const EnvConfig& ec, const FeatureBounds& bounds,
                                std::uint64_t seed) {
  PolicyBundle b;
  b.mode = mode;
  b.bounds = bounds;
  std::seed_seq seq{seed, std::uint64_t{0x9e3779b97f4a7c15ULL}};
  std::vector<std::uint32_t> s(6);
  seq.generate(s.begin(), s.end());
  const auto net_seed = [&](int i) {
    return (static_cast<std::uint64_t>(s[2 * i]) << 32) | s[2 * i + 1];
  };
  if (mode_has_high(mode)) {
    b.high.emplace(layers(feature_size(bounds, false), tc.hidden, ec.num_options()), tc.lr_high, net_seed(0),
                   tc.sync_every);
  }
  if (mode == Mode::DdqnLow) {
    b.low.emplace(layers(feature_size(bounds, false), tc.hidden_ddqn_low, ec.num_actions()), tc.lr_ddqn_low,
                  net_seed(1), tc.sync_every);
  } else if (mode_has_low(mode)) {
    b.low.emplace(layers(feature_size(bounds, true), tc.hidden, ec.num_actions()), tc.lr_low, net_seed(1),
                  tc.sync_every);
  }
  if (mode_has_flat(mode)) {
    b.flat.emplace(layers(feature_size(bounds, false), tc.hidden, ec.num_actions()), tc.lr_high, net_seed(2),
                   tc.sync_every);
  }
  return b;
}

int epsilon_greedy(const Eigen::VectorXd& values, const std::vector<int>& feasible, double epsilon, Rng& rng) {
  if (feasible.empty()) throw ContractViolation("epsilon_greedy over an empty feasible set");
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < epsilon) {
      std::uniform_int_distribution<std::size_t> pick(0, feasible.size() - 1);
      return feasible[pick(rng)];
    }
  }
  return argmax_over(values, feasible);
}

double target_penalty(double option_kwh, double end_soc_kwh, double kappa) {
  const double d = option_kwh - end_soc_kwh;
  return kappa * d * d;
}

double low_reward(double power_kw, double dt_hours, double price, double option_kwh,
                  std::optional<double> achieved_end_soc, double kappa) {
  if (achieved_end_soc) return -target_penalty(option_kwh, *achieved_end_soc, kappa);
  return charging_step_reward(power_kw, dt_hours, price);
}

ActionChoice pi_q(const EnvState& state, double option_kwh, const EnvConfig& cfg) {
  const auto feas = feasible_actions(state, cfg);
  ActionChoice best = feas.front();
  double best_gap = std::abs(state.soc + best.power * cfg.dt_hours - option_kwh);
  for (const auto& c : feas) {
    const double gap = std::abs(state.soc + c.power * cfg.dt_hours - option_kwh);
    if (gap < best_gap - 1e-12 || (std::abs(gap - best_gap) <= 1e-12 && std::abs(c.power) < std::abs(best.power))) {
      best = c;
      best_gap = gap;
    }
  }
  return best;
}

double counterfactual_high_reward(const PeriodRecord& record, double target_kwh, const EnvConfig& cfg) {
  if (!record.valid) throw ContractViolation("counterfactual reward needs a recorded charging period");
  EnvState s;
  s.period_flag = 1;
  s.soc = record.start_soc;
  double total = 0.0;
  for (double price : record.charging_prices) {
    const ActionChoice a = pi_q(s, target_kwh, cfg);
    total += charging_step_reward(a.power, cfg.dt_hours, price);
    s.soc = apply_battery_dynamics(s.soc, a.power, cfg.dt_hours);
  }
  return total + record.operating_reward;
}

double phase_high_reward(int episode, int phase_threshold, const PeriodRecord& record, double target_kwh,
                         double behaviour_reward, const EnvConfig& cfg) {
  if (episode < phase_threshold) return counterfactual_high_reward(record, target_kwh, cfg);
  return behaviour_reward;
}

int nearest_option_index(const std::vector<double>& grid, double soc) {
  if (grid.empty()) throw ContractViolation("empty option grid");
  const auto it = std::lower_bound(grid.begin(), grid.end(), soc);
  if (it == grid.begin()) return 0;
  if (it == grid.end()) return static_cast<int>(grid.size()) - 1;
  const auto hi = static_cast<int>(it - grid.begin());
  return (soc - grid[static_cast<std::size_t>(hi - 1)] <= grid[static_cast<std::size_t>(hi)] - soc) ? hi - 1 : hi;
}

}  // namespace ebsched
