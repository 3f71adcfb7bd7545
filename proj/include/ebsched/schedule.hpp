#pragma once

#include <string>
#include <utility>
#include <vector>

namespace ebsched {

enum class HazardMode { ExactHazard, PaperFormula };

HazardMode parse_hazard_mode(const std::string& text);
std::string to_string(HazardMode mode);

// One scheduled trip. `gap_steps` is the departure counter reset value T^d:
// tau runs gap_steps..0 over one operating+charging cycle, so consecutive
// departures are gap_steps + 1 steps apart.
struct OperatingPeriod {
  int departure_step = 0;          // steps from the day origin
  int gap_steps = 0;               // T^d
  bool rush = false;
  std::vector<double> travel_pmf;  // travel_pmf[x] = Pr(T^o = x steps)
};

// K operating periods; charging period k sits between operating periods k and k+1.
struct Schedule {
  std::vector<OperatingPeriod> periods;

  int num_operating_periods() const { return static_cast<int>(periods.size()); }
  int max_gap_steps() const;
  // Upper bound on in-episode steps from first arrival to last arrival.
  int max_episode_steps() const;
  void validate() const;
};

// Clock-based timetable as written in configuration files.
struct ScheduleConfig {
  int dt_minutes = 10;
  int first_departure_min = 6 * 60 + 30;
  int last_departure_min = 24 * 60;
  int headway_minutes = 90;
  int bus_offset_minutes = 0;
  std::vector<std::pair<int, int>> rush_windows = {{7 * 60, 9 * 60}, {17 * 60, 19 * 60}};
  double travel_mean_rush = 50.0;
  double travel_mean_offpeak = 40.0;
  double travel_std = 8.0;
};

Schedule build_schedule(const ScheduleConfig& cfg);

// Normal(mean, std) minutes rounded to whole steps, truncated to {1..max_steps}
// and renormalized. Index 0 carries zero mass.
std::vector<double> discretize_travel_time(double mean_minutes, double std_minutes, int dt_minutes,
                                           int max_steps);

// Pr(T = e) / Pr(T >= e) in exact mode; Pr(T = e) / prod_{x<e}(1 - Pr(T = x)) in
// paper mode. Clamped to [0, 1]. Returns 1 when the support is exhausted.
double operating_hazard(const std::vector<double>& pmf, int elapsed, HazardMode mode,
                        bool* support_exhausted = nullptr);

// "HH:MM" -> minutes after midnight (24:00 allowed).
int parse_clock(const std::string& text);
std::string format_clock(int minutes);

}  // namespace ebsched
