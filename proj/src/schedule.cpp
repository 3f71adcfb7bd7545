#include "ebsched/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ebsched/errors.hpp"

namespace ebsched {

HazardMode parse_hazard_mode(const std::string& text) {
  if (text == "exact_hazard") return HazardMode::ExactHazard;
  if (text == "paper_formula") return HazardMode::PaperFormula;
  throw ConfigError("hazard_mode must be exact_hazard or paper_formula, got '" + text + "'");
}

std::string to_string(HazardMode mode) {
  return mode == HazardMode::ExactHazard ? "exact_hazard" : "paper_formula";
}

int Schedule::max_gap_steps() const {
  int m = 0;
  for (const auto& p : periods) m = std::max(m, p.gap_steps);
  return m;
}

int Schedule::max_episode_steps() const {
  int total = 0;
  for (const auto& p : periods) total += p.gap_steps + 1;
  return total;
}

void Schedule::validate() const {
  if (periods.size() < 2) throw ConfigError("schedule needs at least 2 operating periods");
  for (std::size_t k = 0; k < periods.size(); ++k) {
    const auto& p = periods[k];
    if (p.gap_steps < 2) throw ConfigError("departure gap must be at least 2 steps");
    if (p.travel_pmf.empty()) throw ConfigError("empty travel-time distribution");
    if (static_cast<int>(p.travel_pmf.size()) > p.gap_steps) {
      throw ConfigError("travel-time support must lie within {1.." + std::to_string(p.gap_steps - 1) + "}");
    }
    double sum = 0.0;
    for (std::size_t x = 0; x < p.travel_pmf.size(); ++x) {
      if (p.travel_pmf[x] < 0.0) throw ConfigError("negative travel-time probability");
      if (x == 0 && p.travel_pmf[x] > 0.0) throw ConfigError("travel time of 0 steps is not allowed");
      sum += p.travel_pmf[x];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("travel-time probabilities must sum to 1");
  }
}

std::vector<double> discretize_travel_time(double mean_minutes, double std_minutes, int dt_minutes,
                                           int max_steps) {
  if (max_steps < 1) throw ConfigError("travel-time support is empty");
  if (std_minutes <= 0.0) throw ConfigError("travel_std must be positive");
  const auto cdf = [&](double minutes) {
    return 0.5 * std::erfc(-(minutes - mean_minutes) / (std_minutes * std::sqrt(2.0)));
  };
  std::vector<double> pmf(static_cast<std::size_t>(max_steps) + 1, 0.0);
  for (int x = 1; x <= max_steps; ++x) {
    pmf[static_cast<std::size_t>(x)] = cdf((x + 0.5) * dt_minutes) - cdf((x - 0.5) * dt_minutes);
  }
  const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  if (total <= 0.0) throw ConfigError("travel-time distribution has no mass inside the support");
  for (double& p : pmf) p /= total;
  while (pmf.size() > 1 && pmf.back() == 0.0) pmf.pop_back();
  return pmf;
}

double operating_hazard(const std::vector<double>& pmf, int elapsed, HazardMode mode,
                        bool* support_exhausted) {
  if (support_exhausted) *support_exhausted = false;
  const auto mass = [&](int x) {
    return (x >= 0 && x < static_cast<int>(pmf.size())) ? pmf[static_cast<std::size_t>(x)] : 0.0;
  };
  double survival = 0.0;
  for (int x = std::max(elapsed, 0); x < static_cast<int>(pmf.size()); ++x) survival += mass(x);
  if (survival <= 0.0) {
    if (support_exhausted) *support_exhausted = true;
    return 1.0;
  }
  double h = 0.0;
  if (mode == HazardMode::ExactHazard) {
    h = mass(elapsed) / survival;
  } else {
    double denom = 1.0;
    for (int x = 0; x < elapsed; ++x) denom *= 1.0 - mass(x);
    h = denom > 0.0 ? mass(elapsed) / denom : 1.0;
  }
  return std::clamp(h, 0.0, 1.0);
}

int parse_clock(const std::string& text) {
  int h = 0, m = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d:%d%c", &h, &m, &tail) != 2 || h < 0 || h > 24 || m < 0 || m > 59 ||
      (h == 24 && m != 0)) {
    throw ConfigError("bad clock time '" + text + "' (expected HH:MM)");
  }
  return h * 60 + m;
}

std::string format_clock(int minutes) {
  char buf[16];
  const int day_min = ((minutes % 1440) + 1440) % 1440;
  std::snprintf(buf, sizeof buf, "%02d:%02d", day_min / 60, day_min % 60);
  return buf;
}

Schedule build_schedule(const ScheduleConfig& cfg) {
  if (cfg.dt_minutes <= 0 || 60 % cfg.dt_minutes != 0) throw ConfigError("dt_minutes must divide 60");
  if (cfg.headway_minutes % cfg.dt_minutes != 0) throw ConfigError("headway_minutes must be a multiple of dt_minutes");
  const int first = cfg.first_departure_min + cfg.bus_offset_minutes;
  if (first % cfg.dt_minutes != 0) throw ConfigError("departure times must align with dt_minutes");
  const int headway_steps = cfg.headway_minutes / cfg.dt_minutes;
  Schedule s;
  for (int dep = first; dep <= cfg.last_departure_min; dep += cfg.headway_minutes) {
    OperatingPeriod p;
    p.departure_step = dep / cfg.dt_minutes;
    p.gap_steps = headway_steps - 1;
    const int clock = dep % 1440;
    p.rush = std::any_of(cfg.rush_windows.begin(), cfg.rush_windows.end(),
                         [&](const auto& w) { return clock >= w.first && clock < w.second; });
    p.travel_pmf = discretize_travel_time(p.rush ? cfg.travel_mean_rush : cfg.travel_mean_offpeak,
                                          cfg.travel_std, cfg.dt_minutes, p.gap_steps - 1);
    s.periods.push_back(std::move(p));
  }
  s.validate();
  return s;
}

}  // namespace ebsched
