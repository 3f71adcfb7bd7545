#pragma once

#include <Eigen/Dense>
#include <optional>

#include "ebsched/env.hpp"

namespace ebsched {

// Ranges used for min-max scaling of each state component.
struct FeatureBounds {
  double soc_min = 0.0;
  double soc_max = 240.0;
  int tau_max = 8;
  int k_max = 11;
  double price_min = 0.0;
  double price_max = 0.05;
  int w_p = 4;
};

FeatureBounds make_feature_bounds(const EnvConfig& cfg, const Schedule& schedule, const PriceSeries& prices);

// [soc, B, tau, k, prices oldest..newest, goal?]
int feature_size(const FeatureBounds& b, bool with_goal);

// Each component scaled to [-1, 1]; out-of-range values are clamped.
Eigen::VectorXd encode_state(const EnvState& state, std::optional<double> goal_kwh, const FeatureBounds& b);

double scale_to_unit(double x, double lo, double hi);

}  // namespace ebsched
