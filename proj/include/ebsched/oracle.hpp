#pragma once

#include <compare>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ebsched/env.hpp"

namespace ebsched {

// Discrete state of a tabular instance. `g` is the global step (price index).
struct OracleState {
  int g = 0;
  int soc_idx = 0;
  int B = 1;
  int tau = 0;
  int k = 0;
  auto operator<=>(const OracleState&) const = default;
};

// A miniature, fully enumerable version of the charging problem. All
// stochastic elements have finite support; socs stay on `soc_grid`.
struct TabularInstance {
  std::string name;
  EnvConfig env;                  // discharge must be Kind::Discrete
  Schedule schedule;
  std::vector<double> prices;     // per global step; later steps hold the last value
  std::vector<double> soc_grid;   // kWh, increasing, from e_min to e_max
  std::vector<double> start_socs; // initial socs checked by the theorem report
  double kappa = 0.0;             // boundary penalty for the hierarchical DP

  double soc(int idx) const { return soc_grid[static_cast<std::size_t>(idx)]; }
  // Grid index of `kwh`; -1 when below e_min (terminal). Throws DataError off grid.
  int soc_index(double kwh) const;
  double price_at(int g) const;
  PriceSeries price_series() const;
  EnvState to_env_state(const OracleState& s) const;
  // Period-0 charging-start states for one initial soc, with their probabilities.
  std::vector<std::pair<OracleState, double>> start_distribution(double soc_kwh) const;
  std::vector<OracleState> start_states() const;
  double max_step_cost() const;
  void validate() const;
};

TabularInstance parse_instance(const std::filesystem::path& path);
TabularInstance parse_instance_string(const std::string& text, const std::string& source = "<instance>");

struct FlatOptions {
  // When set, every departure must leave with exactly this soc (others are excluded).
  std::optional<double> required_departure_soc;
};

struct FlatSolution {
  std::map<OracleState, double> value;
  std::map<OracleState, int> policy;  // action index at charging states
  double at(const OracleState& s) const;
};

// One successor of an operating step, already weighted by its probability.
struct OperatingBranch {
  double prob = 0.0;
  double reward = 0.0;  // 0, or -C_end on terminal entry
  bool terminal = false;
  bool complete = false;  // last trip ended: no continuation value
  OracleState next;
};

std::vector<OperatingBranch> operating_branches(const TabularInstance& inst, const OracleState& s);
// Reward and successor of a charging step under action `action_index`.
std::pair<double, OracleState> charging_transition(const TabularInstance& inst, const OracleState& s,
                                                   const ActionChoice& a);
std::vector<ActionChoice> oracle_actions(const TabularInstance& inst, const OracleState& s);

FlatSolution dp_flat_optimal(const TabularInstance& inst, const FlatOptions& opts = {});
// Q*(s, a) for every feasible action at a charging state, read from a solved table.
std::vector<std::pair<ActionChoice, double>> flat_q_values(const TabularInstance& inst, const FlatSolution& sol,
                                                           const OracleState& s);

struct LowPlan {
  std::vector<int> actions;   // action indices, one per charging step
  double end_soc = 0.0;
  double charging_reward = 0.0;  // sum of env rewards over the charging steps
  double low_value = 0.0;        // charging_reward minus the boundary penalty
};

struct HierSolution {
  std::map<OracleState, double> value;  // V^H at charging-start states
  std::map<OracleState, int> option;    // mu*: option-grid index
  std::map<std::pair<OracleState, int>, LowPlan> low;  // optimal intra-option plans
  std::map<std::pair<OracleState, int>, double> q;     // Q^H(s, option)
  double at(const OracleState& s) const;
};

// Options range over `option_grid` (the instance's option grid when empty).
// `windowed` further limits each prescription to feasible_options of its state.
HierSolution dp_hier_optimal(const TabularInstance& inst, double kappa,
                             const std::vector<double>& option_grid = {}, bool windowed = false);

enum class Verdict { Pass, Fail, Inconclusive };
std::string to_string(Verdict v);

struct StartReport {
  OracleState state;
  double v_flat = 0.0;
  double v_hier = 0.0;
  double discrepancy = 0.0;
  int best_option = -1;
};

struct Theorem1Report {
  Verdict verdict = Verdict::Pass;
  double max_discrepancy = 0.0;
  double kappa = 0.0;
  double tolerance = 1e-9;
  std::vector<StartReport> rows;
  std::string detail;
};

// Compares flat and hierarchical optima at every start state. Inconclusive when
// some flat-optimal departure soc is missing from the option grid.
Theorem1Report check_theorem1(const TabularInstance& inst, std::optional<double> kappa = std::nullopt,
                              double tolerance = 1e-9);
void write_theorem1_report(const std::filesystem::path& path, const TabularInstance& inst,
                           const Theorem1Report& report);

// Exact expected return of a fixed policy. `choose_option` is called at each
// charging-period start (may return NaN for flat policies); `choose_action`
// returns an action index feasible at the state.
using OptionChooser = std::function<double(const OracleState&)>;
using ActionChooser = std::function<int(const OracleState&, double option_kwh)>;
double evaluate_policy(const TabularInstance& inst, const OracleState& start, const OptionChooser& choose_option,
                       const ActionChooser& choose_action);
// Expectation over the reset distribution from `initial_soc`.
double expected_start_value(const TabularInstance& inst, double initial_soc,
                            const std::function<double(const OracleState&)>& value_of);

}  // namespace ebsched
