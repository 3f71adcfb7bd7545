#include "ebsched/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ebsched/agents.hpp"
#include "ebsched/errors.hpp"
#include "ebsched/kv_config.hpp"

namespace ebsched {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// "x:p,x:p" -> pairs
std::vector<std::pair<double, double>> parse_pmf(const std::string& text, const std::string& where) {
  std::vector<std::pair<double, double>> out;
  for (const auto& item : split_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw DataError(where + ": expected value:probability, got '" + item + "'");
    try {
      out.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw DataError(where + ": bad pmf entry '" + item + "'");
    }
  }
  if (out.empty()) throw DataError(where + ": empty pmf");
  return out;
}

std::vector<double> travel_vector(const std::vector<std::pair<double, double>>& pmf, const std::string& where) {
  std::vector<double> v;
  for (const auto& [x, p] : pmf) {
    const int steps = static_cast<int>(std::lround(x));
    if (steps < 1 || std::abs(steps - x) > 1e-9) throw DataError(where + ": travel times must be whole steps >= 1");
    if (static_cast<int>(v.size()) <= steps) v.resize(static_cast<std::size_t>(steps) + 1, 0.0);
    v[static_cast<std::size_t>(steps)] += p;
  }
  return v;
}

}  // namespace

int TabularInstance::soc_index(double kwh) const {
  if (kwh < env.e_min_kwh - kSocTolerance) return -1;
  const auto it = std::lower_bound(soc_grid.begin(), soc_grid.end(), kwh - 1e-7);
  if (it != soc_grid.end() && std::abs(*it - kwh) <= 1e-7) return static_cast<int>(it - soc_grid.begin());
  throw DataError(name + ": soc " + std::to_string(kwh) + " kWh is not on the soc grid (unreachable grid transition)");
}

double TabularInstance::price_at(int g) const {
  if (prices.empty()) throw DataError(name + ": no prices");
  if (g < 0) throw ContractViolation("negative step index");
  return prices[static_cast<std::size_t>(std::min<int>(g, static_cast<int>(prices.size()) - 1))];
}

PriceSeries TabularInstance::price_series() const {
  const int per_hour = static_cast<int>(std::lround(1.0 / env.dt_hours));
  return PriceSeries(prices, std::max(1, per_hour), name, static_cast<int>(prices.size()));
}

EnvState TabularInstance::to_env_state(const OracleState& s) const {
  EnvState e;
  e.soc = soc(s.soc_idx);
  e.period_flag = s.B;
  e.tau = s.tau;
  e.period_index = s.k;
  e.step_index = s.g;
  for (int i = s.g - env.w_p; i <= s.g; ++i) e.price_window.push_back(price_at(std::max(i, 0)));
  return e;
}

std::vector<std::pair<OracleState, double>> TabularInstance::start_distribution(double soc_kwh) const {
  const auto& p0 = schedule.periods.at(0);
  std::vector<std::pair<OracleState, double>> out;
  for (std::size_t x = 1; x < p0.travel_pmf.size(); ++x) {
    if (p0.travel_pmf[x] <= 0.0) continue;
    OracleState s;
    s.g = p0.departure_step + static_cast<int>(x);
    s.soc_idx = soc_index(soc_kwh);
    s.B = 1;
    s.tau = p0.gap_steps - static_cast<int>(x);
    s.k = 0;
    out.emplace_back(s, p0.travel_pmf[x]);
  }
  return out;
}

std::vector<OracleState> TabularInstance::start_states() const {
  std::vector<OracleState> out;
  for (double e : start_socs) {
    for (const auto& [s, p] : start_distribution(e)) out.push_back(s);
  }
  return out;
}

double TabularInstance::max_step_cost() const {
  double p = 0.0;
  for (double x : prices) p = std::max(p, std::abs(x));
  return env.max_step_cost(p);
}

void TabularInstance::validate() const {
  env.validate();
  schedule.validate();
  if (env.discharge.kind != DischargeProfile::Kind::Discrete) throw DataError(name + ": discharge must be a finite pmf");
  if (soc_grid.size() < 2) throw DataError(name + ": soc grid needs at least two levels");
  if (start_socs.empty()) throw DataError(name + ": no start socs");
  for (double s : start_socs) soc_index(s);
  for (double o : env.options()) soc_index(o);
}

TabularInstance parse_instance_string(const std::string& text, const std::string& source) {
  try {
    const KeyValueFile kv = KeyValueFile::parse_string(text, source);
    TabularInstance inst;
    inst.name = kv.get_string("name", std::filesystem::path(source).stem().string());
    const int dt_minutes = kv.get_int("dt_minutes", 10);
    if (dt_minutes <= 0) throw DataError(kv.where("dt_minutes") + ": dt_minutes must be positive");
    EnvConfig& env = inst.env;
    env.dt_hours = dt_minutes / 60.0;
    env.e_min_kwh = kv.get_double("e_min_kwh", 0.0);
    env.e_max_kwh = kv.require_double("e_max_kwh");
    env.c_max_kw = kv.require_double("c_max_kw");
    env.d_max_kw = kv.require_double("d_max_kw");
    env.c_end = kv.get_double("c_end", 50.0);
    env.w_p = kv.get_int("w_p", 2);
    env.action_levels_kw = kv.get_doubles("action_levels_kw", {});
    if (env.action_levels_kw.empty()) throw DataError(kv.where("action_levels_kw") + ": action_levels_kw is required");
    env.clip_actions = kv.get_bool("clip_actions", true);
    env.hazard_mode = parse_hazard_mode(kv.get_string("hazard_mode", "exact_hazard"));
    const double soc_step = kv.require_double("soc_step_kwh");
    inst.soc_grid = make_option_grid(env.e_min_kwh, env.e_max_kwh, soc_step);
    if (kv.has("option_grid_kwh")) {
      env.option_grid_kwh = kv.get_doubles("option_grid_kwh", {});
    } else {
      env.option_grid_kwh = make_option_grid(env.e_min_kwh, env.e_max_kwh, kv.get_double("option_step_kwh", soc_step));
    }
    env.discharge.kind = DischargeProfile::Kind::Discrete;
    env.discharge.pmf = parse_pmf(kv.require_string("discharge_pmf_kw"), kv.where("discharge_pmf_kw"));
    inst.start_socs = kv.get_doubles("start_socs", {});
    env.initial_soc_kwh = kv.get_double("initial_soc_kwh", inst.start_socs.empty() ? env.e_max_kwh : inst.start_socs.front());
    if (inst.start_socs.empty()) inst.start_socs = {env.initial_soc_kwh};

    const int periods = kv.require_int("num_operating_periods");
    const int gap = kv.require_int("departure_gap_steps");
    const int first = kv.get_int("first_departure_step", 0);
    if (periods < 2) throw DataError(kv.where("num_operating_periods") + ": need at least 2 operating periods");
    const auto default_travel = travel_vector(parse_pmf(kv.require_string("travel_pmf"), kv.where("travel_pmf")),
                                              kv.where("travel_pmf"));
    for (int k = 0; k < periods; ++k) {
      OperatingPeriod p;
      p.departure_step = first + k * (gap + 1);
      p.gap_steps = gap;
      const std::string key = "travel_pmf_" + std::to_string(k);
      p.travel_pmf = kv.has(key) ? travel_vector(parse_pmf(kv.get_string(key, ""), kv.where(key)), kv.where(key))
                                 : default_travel;
      inst.schedule.periods.push_back(std::move(p));
    }
    inst.prices = kv.get_doubles("prices", {});
    if (inst.prices.empty()) throw DataError(kv.where("prices") + ": prices are required");
    inst.kappa = kv.get_double("kappa", 0.0);
    kv.reject_unused();
    if (!(inst.kappa > 0.0)) inst.kappa = 1e3 * inst.max_step_cost();
    inst.validate();
    return inst;
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
}

TabularInstance parse_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open instance file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_instance_string(buf.str(), path.string());
}

std::vector<ActionChoice> oracle_actions(const TabularInstance& inst, const OracleState& s) {
  EnvState e;
  e.soc = inst.soc(s.soc_idx);
  e.period_flag = 1;
  return feasible_actions(e, inst.env);
}

std::pair<double, OracleState> charging_transition(const TabularInstance& inst, const OracleState& s,
                                                   const ActionChoice& a) {
  if (s.B != 1) throw ContractViolation("charging transition from an operating state");
  const double reward = charging_step_reward(a.power, inst.env.dt_hours, inst.price_at(s.g));
  OracleState n = s;
  n.g = s.g + 1;
  n.soc_idx = inst.soc_index(apply_battery_dynamics(inst.soc(s.soc_idx), a.power, inst.env.dt_hours));
  if (n.soc_idx < 0) throw SimulatorFault("feasible charging action left the battery range");
  if (s.tau == 0) {
    n.B = 0;
    n.k = s.k + 1;
    if (n.k >= inst.schedule.num_operating_periods()) throw SimulatorFault("departure after the last trip");
    n.tau = inst.schedule.periods[static_cast<std::size_t>(n.k)].gap_steps;
  } else {
    n.tau = s.tau - 1;
  }
  return {reward, n};
}

std::vector<OperatingBranch> operating_branches(const TabularInstance& inst, const OracleState& s) {
  if (s.B != 0) throw ContractViolation("operating branches from a charging state");
  EnvState e = inst.to_env_state(s);
  const double h = termination_prob(e, inst.schedule, inst.env.hazard_mode);
  const bool last = s.k + 1 >= inst.schedule.num_operating_periods();
  std::vector<OperatingBranch> out;
  for (const auto& [kw, pd] : inst.env.discharge.pmf) {
    if (pd <= 0.0) continue;
    const double next_soc = apply_battery_dynamics(inst.soc(s.soc_idx), kw, inst.env.dt_hours);
    const int idx = inst.soc_index(next_soc);
    if (idx < 0) {
      OperatingBranch b;
      b.prob = pd;
      b.reward = -inst.env.c_end;
      b.terminal = true;
      out.push_back(b);
      continue;
    }
    if (s.tau - 1 < 0) throw SimulatorFault("departure counter went negative in an operating period");
    OracleState n = s;
    n.g = s.g + 1;
    n.soc_idx = idx;
    n.tau = s.tau - 1;
    if (h > 0.0) {
      OperatingBranch b;
      b.prob = pd * h;
      b.next = n;
      b.next.B = 1;
      b.complete = last;
      out.push_back(b);
    }
    if (h < 1.0) {
      OperatingBranch b;
      b.prob = pd * (1.0 - h);
      b.next = n;
      b.next.B = 0;
      out.push_back(b);
    }
  }
  return out;
}

namespace {

bool departs(const OracleState& from, const OracleState& to) { return from.B == 1 && to.B == 0; }

class FlatSolver {
 public:
  FlatSolver(const TabularInstance& inst, const FlatOptions& opts) : inst_(inst), opts_(opts) {}

  double value(const OracleState& s) {
    if (auto it = sol_.value.find(s); it != sol_.value.end()) return it->second;
    double v = 0.0;
    if (s.B == 1) {
      v = kNegInf;
      int best = -1;
      for (const auto& a : oracle_actions(inst_, s)) {
        const auto [r, n] = charging_transition(inst_, s, a);
        if (opts_.required_departure_soc && departs(s, n) &&
            std::abs(inst_.soc(n.soc_idx) - *opts_.required_departure_soc) > 1e-9) {
          continue;
        }
        const double q = r + value(n);
        if (q > v) {
          v = q;
          best = a.index;
        }
      }
      sol_.policy[s] = best;
    } else {
      for (const auto& b : operating_branches(inst_, s)) {
        const double cont = (b.terminal || b.complete) ? 0.0 : value(b.next);
        v += b.prob * (b.reward + cont);
      }
    }
    sol_.value[s] = v;
    return v;
  }

  FlatSolution take() { return std::move(sol_); }

 private:
  const TabularInstance& inst_;
  FlatOptions opts_;
  FlatSolution sol_;
};

class HierSolver {
 public:
  HierSolver(const TabularInstance& inst, double kappa, std::vector<double> options, bool windowed)
      : inst_(inst), kappa_(kappa), options_(std::move(options)), windowed_(windowed) {}

  double high_value(const OracleState& s) {
    if (auto it = sol_.value.find(s); it != sol_.value.end()) return it->second;
    double best = kNegInf;
    int best_o = -1;
    std::vector<double> window;
    if (windowed_) {
      for (int i : feasible_options(inst_.to_env_state(s), inst_.env)) {
        window.push_back(inst_.env.options()[static_cast<std::size_t>(i)]);
      }
    }
    for (int o = 0; o < static_cast<int>(options_.size()); ++o) {
      if (windowed_ && std::none_of(window.begin(), window.end(), [&](double w) {
            return std::abs(w - options_[static_cast<std::size_t>(o)]) <= 1e-9;
          })) {
        continue;
      }
      const LowPlan& plan = low_plan(s, o);
      OracleState d = s;
      d.g = s.g + s.tau + 1;
      d.soc_idx = inst_.soc_index(plan.end_soc);
      d.B = 0;
      d.k = s.k + 1;
      d.tau = inst_.schedule.periods.at(static_cast<std::size_t>(d.k)).gap_steps;
      const double q = plan.charging_reward + operating_value(d);
      sol_.q[{s, o}] = q;
      if (q > best) {
        best = q;
        best_o = o;
      }
    }
    sol_.value[s] = best;
    sol_.option[s] = best_o;
    return best;
  }

  HierSolution take() { return std::move(sol_); }

 private:
  double operating_value(const OracleState& s) {
    if (auto it = op_memo_.find(s); it != op_memo_.end()) return it->second;
    double v = 0.0;
    for (const auto& b : operating_branches(inst_, s)) {
      double cont = 0.0;
      if (!b.terminal && !b.complete) cont = b.next.B == 1 ? high_value(b.next) : operating_value(b.next);
      v += b.prob * (b.reward + cont);
    }
    op_memo_[s] = v;
    return v;
  }

  // Backward induction over the charging steps of one period for target option o.
  const LowPlan& low_plan(const OracleState& start, int o) {
    const auto key = std::make_pair(start, o);
    if (auto it = sol_.low.find(key); it != sol_.low.end()) return it->second;
    const double target = options_[static_cast<std::size_t>(o)];
    const int steps = start.tau + 1;
    const int n = static_cast<int>(inst_.soc_grid.size());
    // w[j][i]: best low value from charging step j at soc index i
    std::vector<std::vector<double>> w(static_cast<std::size_t>(steps) + 1, std::vector<double>(n, kNegInf));
    std::vector<std::vector<int>> pick(static_cast<std::size_t>(steps), std::vector<int>(n, -1));
    for (int i = 0; i < n; ++i) {
      const double d = target - inst_.soc(i);
      w[static_cast<std::size_t>(steps)][static_cast<std::size_t>(i)] = -kappa_ * d * d;
    }
    for (int j = steps - 1; j >= 0; --j) {
      for (int i = 0; i < n; ++i) {
        OracleState s = start;
        s.g = start.g + j;
        s.tau = start.tau - j;
        s.soc_idx = i;
        double best = kNegInf;
        int best_a = -1;
        for (const auto& a : oracle_actions(inst_, s)) {
          const auto [r, nx] = charging_transition(inst_, s, a);
          const double q = r + w[static_cast<std::size_t>(j + 1)][static_cast<std::size_t>(nx.soc_idx)];
          if (q > best) {
            best = q;
            best_a = a.index;
          }
        }
        w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = best;
        pick[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = best_a;
      }
    }
    LowPlan plan;
    OracleState s = start;
    for (int j = 0; j < steps; ++j) {
      const int a_idx = pick[static_cast<std::size_t>(j)][static_cast<std::size_t>(s.soc_idx)];
      ActionChoice chosen;
      for (const auto& a : oracle_actions(inst_, s)) {
        if (a.index == a_idx) chosen = a;
      }
      plan.actions.push_back(a_idx);
      const auto [r, nx] = charging_transition(inst_, s, chosen);
      plan.charging_reward += r;
      s = nx;
    }
    plan.end_soc = inst_.soc(s.soc_idx);
    plan.low_value = w[0][static_cast<std::size_t>(start.soc_idx)];
    return sol_.low.emplace(key, plan).first->second;
  }

  const TabularInstance& inst_;
  double kappa_;
  std::vector<double> options_;
  bool windowed_;
  HierSolution sol_;
  std::map<OracleState, double> op_memo_;
};

}  // namespace

double FlatSolution::at(const OracleState& s) const {
  const auto it = value.find(s);
  if (it == value.end()) throw ContractViolation("state not in the flat value table");
  return it->second;
}

double HierSolution::at(const OracleState& s) const {
  const auto it = value.find(s);
  if (it == value.end()) throw ContractViolation("state not in the hierarchical value table");
  return it->second;
}

FlatSolution dp_flat_optimal(const TabularInstance& inst, const FlatOptions& opts) {
  FlatSolver solver(inst, opts);
  for (const auto& s : inst.start_states()) solver.value(s);
  return solver.take();
}

std::vector<std::pair<ActionChoice, double>> flat_q_values(const TabularInstance& inst, const FlatSolution& sol,
                                                           const OracleState& s) {
  std::vector<std::pair<ActionChoice, double>> out;
  for (const auto& a : oracle_actions(inst, s)) {
    const auto [r, n] = charging_transition(inst, s, a);
    out.emplace_back(a, r + sol.at(n));
  }
  return out;
}

HierSolution dp_hier_optimal(const TabularInstance& inst, double kappa, const std::vector<double>& option_grid,
                             bool windowed) {
  HierSolver solver(inst, kappa, option_grid.empty() ? inst.env.options() : option_grid, windowed);
  for (const auto& s : inst.start_states()) solver.high_value(s);
  return solver.take();
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

Theorem1Report check_theorem1(const TabularInstance& inst, std::optional<double> kappa, double tolerance) {
  Theorem1Report rep;
  rep.kappa = kappa.value_or(inst.kappa > 0.0 ? inst.kappa : 1e3 * inst.max_step_cost());
  rep.tolerance = tolerance;
  const FlatSolution flat = dp_flat_optimal(inst);
  const HierSolution hier = dp_hier_optimal(inst, rep.kappa);
  const auto& grid = inst.env.options();

  // Precondition: each flat-optimal departure soc must be a representable target.
  for (const auto& [start, v] : hier.value) {
    if (!flat.value.count(start)) continue;
    OracleState s = start;
    while (s.B == 1) {
      const int a_idx = flat.policy.at(s);
      ActionChoice chosen;
      for (const auto& a : oracle_actions(inst, s)) {
        if (a.index == a_idx) chosen = a;
      }
      s = charging_transition(inst, s, chosen).second;
    }
    const double end = inst.soc(s.soc_idx);
    const bool representable =
        std::any_of(grid.begin(), grid.end(), [&](double o) { return std::abs(o - end) <= 1e-9; });
    if (!representable) {
      std::ostringstream msg;
      msg << "option grid cannot represent flat-optimal departure soc " << end << " kWh from state (g=" << start.g
          << ", soc=" << inst.soc(start.soc_idx) << ", tau=" << start.tau << ", k=" << start.k << ")";
      rep.verdict = Verdict::Inconclusive;
      rep.detail = msg.str();
      break;
    }
  }

  double worst = -1.0;
  for (const auto& s : inst.start_states()) {
    StartReport row;
    row.state = s;
    row.v_flat = flat.at(s);
    row.v_hier = hier.at(s);
    row.discrepancy = std::abs(row.v_flat - row.v_hier);
    row.best_option = hier.option.at(s);
    if (row.discrepancy > worst) {
      worst = row.discrepancy;
      if (rep.verdict != Verdict::Inconclusive) {
        std::ostringstream msg;
        msg << "largest gap at (g=" << s.g << ", soc=" << inst.soc(s.soc_idx) << ", tau=" << s.tau
            << ", k=" << s.k << ") with option " << grid[static_cast<std::size_t>(row.best_option)] << " kWh";
        rep.detail = msg.str();
      }
    }
    rep.max_discrepancy = std::max(rep.max_discrepancy, row.discrepancy);
    rep.rows.push_back(row);
  }
  if (rep.verdict != Verdict::Inconclusive) {
    rep.verdict = rep.max_discrepancy <= tolerance ? Verdict::Pass : Verdict::Fail;
  }
  return rep;
}

void write_theorem1_report(const std::filesystem::path& path, const TabularInstance& inst,
                           const Theorem1Report& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "# instance " << inst.name << "\n# verdict " << to_string(report.verdict) << "\n# max_discrepancy "
      << report.max_discrepancy << "\n# kappa " << report.kappa << "\n# tolerance " << report.tolerance << "\n";
  if (!report.detail.empty()) out << "# " << report.detail << "\n";
  out << "g,soc,tau,k,v_flat,v_hier,discrepancy,best_option\n";
  const auto& grid = inst.env.options();
  for (const auto& r : report.rows) {
    out << r.state.g << ',' << inst.soc(r.state.soc_idx) << ',' << r.state.tau << ',' << r.state.k << ','
        << r.v_flat << ',' << r.v_hier << ',' << r.discrepancy << ','
        << (r.best_option >= 0 ? grid[static_cast<std::size_t>(r.best_option)] : -1.0) << '\n';
  }
}

double evaluate_policy(const TabularInstance& inst, const OracleState& start, const OptionChooser& choose_option,
                       const ActionChooser& choose_action) {
  std::map<std::pair<OracleState, double>, double> memo;
  std::function<double(const OracleState&, double)> value = [&](const OracleState& s, double option) -> double {
    const double key_opt = std::isnan(option) ? -1e300 : option;
    const auto key = std::make_pair(s, key_opt);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    double v = 0.0;
    if (s.B == 1) {
      const int a_idx = choose_action(s, option);
      std::optional<ActionChoice> chosen;
      for (const auto& a : oracle_actions(inst, s)) {
        if (a.index == a_idx) chosen = a;
      }
      if (!chosen) throw FeasibilityError("policy chose an infeasible action");
      const auto [r, n] = charging_transition(inst, s, *chosen);
      v = r + value(n, option);
    } else {
      for (const auto& b : operating_branches(inst, s)) {
        double cont = 0.0;
        if (!b.terminal && !b.complete) cont = b.next.B == 1 ? value(b.next, choose_option(b.next)) : value(b.next, option);
        v += b.prob * (b.reward + cont);
      }
    }
    memo[key] = v;
    return v;
  };
  return value(start, choose_option(start));
}

double expected_start_value(const TabularInstance& inst, double initial_soc,
                            const std::function<double(const OracleState&)>& value_of) {
  double total = 0.0;
  for (const auto& [s, p] : inst.start_distribution(initial_soc)) total += p * value_of(s);
  return total;
}

}  // namespace ebsched
