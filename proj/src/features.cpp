#include "ebsched/features.hpp"

#include <algorithm>

#include "ebsched/errors.hpp"

namespace ebsched {

double scale_to_unit(double x, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp(2.0 * (x - lo) / (hi - lo) - 1.0, -1.0, 1.0);
}

FeatureBounds make_feature_bounds(const EnvConfig& cfg, const Schedule& schedule, const PriceSeries& prices) {
  FeatureBounds b;
  b.soc_min = cfg.e_min_kwh;
  b.soc_max = cfg.e_max_kwh;
  b.tau_max = schedule.max_gap_steps();
  b.k_max = schedule.num_operating_periods() - 1;
  b.price_min = prices.min_price();
  b.price_max = prices.max_price();
  if (!(b.price_max > b.price_min)) b.price_max = b.price_min + 1.0;
  b.w_p = cfg.w_p;
  return b;
}

int feature_size(const FeatureBounds& b, bool with_goal) { return 4 + b.w_p + 1 + (with_goal ? 1 : 0); }

Eigen::VectorXd encode_state(const EnvState& state, std::optional<double> goal_kwh, const FeatureBounds& b) {
  if (static_cast<int>(state.price_window.size()) != b.w_p + 1) {
    throw ContractViolation("price window length does not match the feature layout");
  }
  Eigen::VectorXd f(feature_size(b, goal_kwh.has_value()));
  int i = 0;
  f(i++) = scale_to_unit(state.soc, b.soc_min, b.soc_max);
  f(i++) = state.period_flag == 1 ? 1.0 : -1.0;
  f(i++) = scale_to_unit(state.tau, 0.0, b.tau_max);
  f(i++) = scale_to_unit(state.period_index, 0.0, b.k_max);
  for (double p : state.price_window) f(i++) = scale_to_unit(p, b.price_min, b.price_max);
  if (goal_kwh) f(i++) = scale_to_unit(*goal_kwh, b.soc_min, b.soc_max);
  return f;
}

}  // namespace ebsched
