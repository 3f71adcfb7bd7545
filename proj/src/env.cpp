#include "ebsched/env.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <string>

#include "ebsched/errors.hpp"

namespace ebsched {

namespace {

std::atomic<std::uint64_t> g_forced_arrivals{0};

bool close(double a, double b) { return std::abs(a - b) <= 1e-9; }

}  // namespace

void EnvConfig::validate() const {
  if (!(dt_hours > 0.0)) throw ConfigError("dt must be positive");
  if (!(e_max_kwh > e_min_kwh)) throw ConfigError("e_max_kwh must exceed e_min_kwh");
  if (c_max_kw < 0.0 || d_max_kw < 0.0) throw ConfigError("power limits must be non-negative");
  if (c_end < 0.0) throw ConfigError("c_end must be non-negative");
  if (w_p < 0) throw ConfigError("w_p must be non-negative");
  if (initial_soc_kwh < e_min_kwh || initial_soc_kwh > e_max_kwh) {
    throw ConfigError("initial soc outside battery bounds");
  }
  if (action_levels_kw.empty()) throw ConfigError("empty action grid");
  bool has_zero = false;
  for (std::size_t i = 0; i < action_levels_kw.size(); ++i) {
    const double a = action_levels_kw[i];
    if (a < -d_max_kw - 1e-9 || a > c_max_kw + 1e-9) throw ConfigError("action level outside [-d_max, c_max]");
    if (i > 0 && !(a > action_levels_kw[i - 1])) throw ConfigError("action levels must be strictly increasing");
    if (a == 0.0) has_zero = true;
  }
  if (!has_zero) throw ConfigError("action grid must contain 0 kW");
  const auto& opts = options();
  if (opts.empty()) throw ConfigError("empty option grid");
  for (std::size_t i = 0; i < opts.size(); ++i) {
    if (opts[i] < e_min_kwh - 1e-9 || opts[i] > e_max_kwh + 1e-9) throw ConfigError("option outside battery bounds");
    if (i > 0 && !(opts[i] > opts[i - 1])) throw ConfigError("option grid must be strictly increasing");
  }
  if (discharge.kind == DischargeProfile::Kind::Discrete) {
    if (discharge.pmf.empty()) throw ConfigError("empty discharge pmf");
    double sum = 0.0;
    for (const auto& [kw, p] : discharge.pmf) {
      if (kw > 0.0 || kw < -d_max_kw - 1e-9) throw ConfigError("discharge level outside [-d_max, 0]");
      if (p < 0.0) throw ConfigError("negative discharge probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("discharge probabilities must sum to 1");
  } else {
    if (discharge.std_kw < 0.0) throw ConfigError("discharge_std_kw must be non-negative");
    if (discharge.mean_kw > 0.0 || discharge.mean_kw < -d_max_kw) {
      throw ConfigError("discharge_mean_kw must lie in [-d_max, 0]");
    }
  }
}

const std::vector<double>& EnvConfig::options() const {
  if (!option_grid_kwh.empty()) return option_grid_kwh;
  if (default_options_.empty()) default_options_ = make_option_grid(e_min_kwh, e_max_kwh, 10.0);
  return default_options_;
}

double EnvConfig::max_step_cost(double max_price) const {
  double p = 0.0;
  for (double a : action_levels_kw) p = std::max(p, std::abs(a));
  return p * dt_hours * std::abs(max_price);
}

std::vector<double> make_action_grid(double d_max_kw, double c_max_kw, int levels) {
  if (levels < 3 || levels % 2 == 0) throw ConfigError("action_levels must be odd and at least 3");
  const int half = levels / 2;
  std::vector<double> out;
  for (int i = half; i >= 1; --i) out.push_back(-d_max_kw * i / half);
  out.push_back(0.0);
  for (int i = 1; i <= half; ++i) out.push_back(c_max_kw * i / half);
  return out;
}

std::vector<double> make_option_grid(double e_min_kwh, double e_max_kwh, double step_kwh) {
  if (!(step_kwh > 0.0)) throw ConfigError("option step must be positive");
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((e_max_kwh - e_min_kwh) / step_kwh + 1e-9));
  for (int i = 0; i <= n; ++i) out.push_back(e_min_kwh + i * step_kwh);
  if (e_max_kwh - out.back() > 1e-9) out.push_back(e_max_kwh);
  return out;
}

int advance_tau(int tau, int period_flag, int next_period_flag, int next_gap_steps) {
  const int out = (period_flag == 1 && next_period_flag == 0) ? next_gap_steps : tau - 1;
  if (out < 0) throw SimulatorFault("departure counter went negative (departure missed)");
  return out;
}

int advance_tau(const EnvState& state, int next_period_flag, const Schedule& schedule) {
  int next_gap = 0;
  if (state.period_flag == 1 && next_period_flag == 0) {
    const auto next = static_cast<std::size_t>(state.period_index + 1);
    if (next >= schedule.periods.size()) throw SimulatorFault("departure after the last scheduled trip");
    next_gap = schedule.periods[next].gap_steps;
  }
  return advance_tau(state.tau, state.period_flag, next_period_flag, next_gap);
}

int elapsed_operating_steps(const EnvState& state, const Schedule& schedule) {
  const auto& p = schedule.periods.at(static_cast<std::size_t>(state.period_index));
  return p.gap_steps - state.tau + 1;
}

double termination_prob(const EnvState& state, const Schedule& schedule, HazardMode mode) {
  if (state.period_flag == 1) return state.tau == 0 ? 1.0 : 0.0;
  const auto& p = schedule.periods.at(static_cast<std::size_t>(state.period_index));
  bool exhausted = false;
  const double h = operating_hazard(p.travel_pmf, elapsed_operating_steps(state, schedule), mode, &exhausted);
  if (exhausted) {
    if (g_forced_arrivals++ == 0) {
      std::cerr << "warning: travel-time support exhausted in period " << state.period_index
                << "; forcing arrival (reported once)\n";
    }
  }
  return h;
}

std::uint64_t forced_arrival_count() { return g_forced_arrivals.load(); }

std::vector<ActionChoice> feasible_actions(const EnvState& state, const EnvConfig& cfg) {
  if (state.period_flag != 1) throw ContractViolation("feasible_actions called outside a charging period");
  const double lo = (cfg.e_min_kwh - state.soc) / cfg.dt_hours;
  const double hi = (cfg.e_max_kwh - state.soc) / cfg.dt_hours;
  const auto& levels = cfg.action_levels_kw;
  const int n = cfg.num_actions();
  std::vector<ActionChoice> out;
  for (int i = 0; i < n; ++i) {
    const double a = levels[static_cast<std::size_t>(i)];
    if (a >= lo - 1e-9 && a <= hi + 1e-9) {
      out.push_back({i, a});
    } else if (cfg.clip_actions && a < lo && i + 1 < n) {
      // last level below the floor becomes the floor itself
      const double inner = levels[static_cast<std::size_t>(i + 1)];
      if (inner > lo + 1e-9) out.push_back({i, lo});
    } else if (cfg.clip_actions && a > hi && i > 0) {
      const double inner = levels[static_cast<std::size_t>(i - 1)];
      if (inner < hi - 1e-9) out.push_back({i, hi});
    }
  }
  if (out.empty()) throw ConfigError("no feasible action (action grid must contain 0 kW)");
  return out;
}

std::vector<int> feasible_options(const EnvState& state, const EnvConfig& cfg) {
  if (state.period_flag != 1) throw ContractViolation("options are only prescribed in charging periods");
  const double lo = std::max(cfg.e_min_kwh, state.soc - state.tau * cfg.d_max_kw * cfg.dt_hours);
  const double hi = std::min(cfg.e_max_kwh, state.soc + state.tau * cfg.c_max_kw * cfg.dt_hours);
  const auto& grid = cfg.options();
  std::vector<int> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] >= lo - 1e-9 && grid[i] <= hi + 1e-9) out.push_back(static_cast<int>(i));
  }
  if (out.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (std::abs(grid[i] - state.soc) < std::abs(grid[best] - state.soc)) best = i;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

std::vector<int> all_options(const EnvConfig& cfg) {
  std::vector<int> out(cfg.options().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i);
  return out;
}

double sample_operating_discharge(const EnvState& state, Rng& rng, const DischargeProfile& profile,
                                  const EnvConfig& cfg, bool rush) {
  if (state.period_flag != 0) throw ContractViolation("discharge sampled outside an operating period");
  double kw = 0.0;
  if (profile.kind == DischargeProfile::Kind::Discrete) {
    std::vector<double> w;
    w.reserve(profile.pmf.size());
    for (const auto& e : profile.pmf) w.push_back(e.second);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    kw = profile.pmf[pick(rng)].first;
  } else {
    const double mean = profile.mean_kw * (rush ? profile.rush_multiplier : 1.0);
    if (profile.std_kw == 0.0) {
      kw = mean;
    } else {
      std::normal_distribution<double> n(mean, profile.std_kw);
      kw = n(rng);
      for (int tries = 0; (kw < -cfg.d_max_kw || kw > 0.0) && tries < 1000; ++tries) kw = n(rng);
    }
  }
  kw = std::clamp(kw, -cfg.d_max_kw, 0.0);
  if (cfg.floor_clip_discharge) kw = std::max(kw, std::min(0.0, (cfg.e_min_kwh - state.soc) / cfg.dt_hours));
  return kw;
}

StepOutcome step(const EnvState& state, std::optional<ActionChoice> action, Rng& rng,
                 const PriceSeries& prices, const Schedule& schedule, const EnvConfig& cfg) {
  if (state.terminal(cfg.e_min_kwh)) throw ContractViolation("step called on a terminal state");
  const auto& period = schedule.periods.at(static_cast<std::size_t>(state.period_index));
  StepOutcome out;
  out.price = state.price();
  EnvState& next = out.next_state;
  next = state;
  next.step_index = state.step_index + 1;
  next.episode_step = state.episode_step + 1;
  next.price_window = prices.window(next.step_index, cfg.w_p);

  if (state.period_flag == 1) {
    if (!action) throw ContractViolation("charging step requires an action");
    const auto feas = feasible_actions(state, cfg);
    const bool ok = std::any_of(feas.begin(), feas.end(), [&](const ActionChoice& c) {
      return c.index == action->index && close(c.power, action->power);
    });
    if (!ok) {
      throw FeasibilityError("action " + std::to_string(action->power) + " kW is infeasible at soc " +
                             std::to_string(state.soc));
    }
    out.power = action->power;
    out.reward = -out.power * cfg.dt_hours * out.price;
    next.soc = apply_battery_dynamics(state.soc, out.power, cfg.dt_hours);
    const bool depart = termination_prob(state, schedule, cfg.hazard_mode) >= 1.0;
    next.period_flag = depart ? 0 : 1;
    next.tau = advance_tau(state, next.period_flag, schedule);
    if (depart) {
      next.period_index = state.period_index + 1;
      out.boundary = PeriodBoundary::OperatingStarted;
    }
  } else {
    if (action) throw ContractViolation("operating step takes no action");
    out.power = sample_operating_discharge(state, rng, cfg.discharge, cfg, period.rush);
    out.reward = 0.0;
    next.soc = apply_battery_dynamics(state.soc, out.power, cfg.dt_hours);
    const double h = termination_prob(state, schedule, cfg.hazard_mode);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool arrive = h >= 1.0 || (h > 0.0 && u(rng) < h);
    next.period_flag = arrive ? 1 : 0;
    next.tau = advance_tau(state, next.period_flag, schedule);
    if (arrive) {
      out.boundary = PeriodBoundary::ChargingStarted;
      if (state.period_index + 1 >= schedule.num_operating_periods()) out.episode_complete = true;
    }
  }
  if (next.terminal(cfg.e_min_kwh)) {
    out.terminal = true;
    out.episode_complete = false;
    out.reward = -cfg.c_end;
  }
  return out;
}

EnvState reset_state(int day, Rng& rng, const PriceSeries& prices, const Schedule& schedule,
                     const EnvConfig& cfg) {
  if (day < 0 || day >= prices.num_days()) {
    throw DataError("price trace has no day " + std::to_string(day) + " (covers " +
                    std::to_string(prices.num_days()) + " days)");
  }
  const auto& first = schedule.periods.at(0);
  std::discrete_distribution<int> travel(first.travel_pmf.begin(), first.travel_pmf.end());
  const int travel_steps = travel(rng);
  EnvState s;
  s.soc = cfg.initial_soc_kwh;
  s.period_flag = 1;
  s.period_index = 0;
  s.tau = first.gap_steps - travel_steps;
  s.step_index = static_cast<std::int64_t>(day) * prices.steps_per_day() + first.departure_step + travel_steps;
  s.episode_step = 0;
  s.price_window = prices.window(s.step_index, cfg.w_p);
  return s;
}

BusChargingEnv::BusChargingEnv(std::shared_ptr<const EnvConfig> cfg, std::shared_ptr<const Schedule> schedule,
                               std::shared_ptr<const PriceSeries> prices)
    : cfg_(std::move(cfg)), schedule_(std::move(schedule)), prices_(std::move(prices)) {
  if (!cfg_ || !schedule_ || !prices_) throw ContractViolation("environment needs config, schedule and prices");
  cfg_->validate();
  schedule_->validate();
  if (prices_->empty()) throw DataError("empty price trace");
}

const EnvState& BusChargingEnv::reset(int day, std::uint64_t seed) {
  rng_.seed(seed);
  day_ = day;
  day_start_ = static_cast<std::int64_t>(day) * prices_->steps_per_day();
  state_ = reset_state(day, rng_, *prices_, *schedule_, *cfg_);
  done_ = false;
  return state_;
}

StepOutcome BusChargingEnv::step(std::optional<ActionChoice> action) {
  if (done_) throw ContractViolation("step called after the episode ended");
  StepOutcome out = ebsched::step(state_, action, rng_, *prices_, *schedule_, *cfg_);
  state_ = out.next_state;
  done_ = out.terminal || out.episode_complete;
  return out;
}

StepOutcome BusChargingEnv::step_action(int action_index) {
  for (const auto& c : feasible_actions(state_, *cfg_)) {
    if (c.index == action_index) return step(c);
  }
  throw FeasibilityError("action index " + std::to_string(action_index) + " is infeasible");
}

int BusChargingEnv::clock_minutes(const EnvState& s) const {
  const int step_minutes = 60 / prices_->steps_per_hour();
  return static_cast<int>((s.step_index - day_start_) * step_minutes);
}

}  // namespace ebsched
