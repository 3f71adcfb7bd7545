// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (all when none given)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ebsched/agents.hpp"
#include "ebsched/env.hpp"
#include "ebsched/errors.hpp"
#include "ebsched/features.hpp"
#include "ebsched/oracle.hpp"
#include "ebsched/qnet.hpp"
#include "ebsched/replay.hpp"
#include "ebsched/run_config.hpp"
#include "ebsched/trainer.hpp"

using namespace ebsched;

namespace {

const std::filesystem::path kSource = EBSCHED_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const std::vector<std::string> kInstances = {"tiny.inst", "wide.inst", "quarter.inst"};

TabularInstance load_instance(const std::string& name) { return parse_instance(kSource / "data/instances" / name); }

// ---------------------------------------------------------------------------
// 1. flat and hierarchical optima agree

Outcome flat_vs_hier() {
  Outcome o{true, ""};
  int checked = 0;
  for (const auto& name : kInstances) {
    const auto t0 = std::chrono::steady_clock::now();
    const TabularInstance inst = load_instance(name);
    int horizon = 0;
    for (const auto& p : inst.schedule.periods) {
      horizon = std::max(horizon, p.departure_step + static_cast<int>(p.travel_pmf.size()) + p.gap_steps + 1);
    }
    const bool small = inst.soc_grid.size() <= 13 && inst.schedule.num_operating_periods() <= 3 && horizon <= 30;
    const Theorem1Report rep = check_theorem1(inst, std::nullopt, 1e-9);
    const double secs = seconds_since(t0);
    const bool ok = small && rep.verdict == Verdict::Pass && rep.max_discrepancy <= 1e-9 && secs < 60.0;
    o.pass = o.pass && ok;
    ++checked;
    o.detail += inst.name + ": " + to_string(rep.verdict) + " max|dV|=" + fmt("%.2e", rep.max_discrepancy) +
                " levels=" + std::to_string(inst.soc_grid.size()) + " horizon<=" + std::to_string(horizon) +
                " " + fmt("%.2fs", secs) + "; ";
  }
  o.pass = o.pass && checked >= 3;
  return o;
}

// ---------------------------------------------------------------------------
// 2. the learner reaches the tabular optimum

Problem problem_from_instance(const TabularInstance& inst) {
  Problem p;
  p.env = std::make_shared<const EnvConfig>(inst.env);
  p.schedule = std::make_shared<const Schedule>(inst.schedule);
  const auto prices = std::make_shared<const PriceSeries>(inst.price_series());
  p.train = prices;
  p.test = prices;
  return p;
}

double greedy_value(const TabularInstance& inst, const PolicyBundle& policy) {
  const OptionChooser high = [&](const OracleState& s) {
    return option_value_kwh(policy, greedy_option(policy, inst.to_env_state(s), inst.env), inst.env);
  };
  const ActionChooser low = [&](const OracleState& s, double option) {
    return greedy_action(policy, inst.to_env_state(s), option, inst.env).index;
  };
  return expected_start_value(inst, inst.env.initial_soc_kwh,
                              [&](const OracleState& s) { return evaluate_policy(inst, s, high, low); });
}

Outcome learner_vs_oracle() {
  Outcome o{true, ""};
  int eligible = 0;
  for (const auto& name : kInstances) {
    const TabularInstance inst = load_instance(name);
    const FlatSolution flat = dp_flat_optimal(inst);
    const HierSolution windowed = dp_hier_optimal(inst, inst.kappa, {}, true);
    const double e0 = inst.env.initial_soc_kwh;
    const double v_star = expected_start_value(inst, e0, [&](const OracleState& s) { return flat.at(s); });
    const double ceiling = expected_start_value(inst, e0, [&](const OracleState& s) { return windowed.at(s); });
    // the learner prescribes only targets inside its option window; instances where
    // that window excludes the optimum cannot be matched by any policy it can express
    if (std::abs(ceiling - v_star) > 1e-9) {
      o.detail += inst.name + ": skipped, window ceiling " + fmt("%.4f", ceiling) + " vs V* " +
                  fmt("%.4f", v_star) + "; ";
      continue;
    }
    ++eligible;
    const auto t0 = std::chrono::steady_clock::now();
    const Problem problem = problem_from_instance(inst);
    TrainConfig tc;
    tc.episodes = 2000;
    tc.phase_threshold = 500;
    tc.hidden = {32, 32};
    tc.batch_high = 32;
    tc.batch_low = 32;
    tc.sync_every = 100;
    tc.eval_every = tc.episodes;
    tc.eval_episodes = 2;
    int within = 0;
    std::string gaps;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      tc.seed = seed;
      const TrainResult r = train(Mode::HddqnHer, tc, problem);
      const double v = greedy_value(inst, r.policy);
      const double gap = std::abs(v - v_star) / std::abs(v_star);
      within += gap <= 0.05 ? 1 : 0;
      gaps += fmt("%.2f%% ", 100 * gap);
    }
    const double secs = seconds_since(t0);
    const bool ok = within >= 2 && secs < 600.0;
    o.pass = o.pass && ok;
    o.detail += inst.name + ": V*=" + fmt("%.4f", v_star) + " gaps " + gaps + std::to_string(within) +
                "/3 within 5% " + fmt("%.0fs", secs) + "; ";
  }
  o.pass = o.pass && eligible > 0;
  return o;
}

// ---------------------------------------------------------------------------
// 3, 4, 5, 10. desk-scale runs

struct DeskRun {
  Mode mode;
  std::uint64_t seed;
  double mean = 0.0;
  int terminal = 0;
  std::vector<LogRow> log;
};

struct DeskResults {
  std::vector<DeskRun> runs;
  double seconds = 0.0;
  bool ready = false;
};

DeskResults& desk() {
  static DeskResults d;
  if (d.ready) return d;
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_run_config(kSource / "configs/desk.cfg");
  const Problem problem = build_problem(rc);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (Mode m : all_modes()) {
      TrainConfig tc = rc.train;
      tc.seed = seed;
      TrainResult r = train(m, tc, problem);
      const EvalSummary ev = evaluate(r.policy, problem, tc, rc.test_episodes, derive_seed(seed, 7), false);
      d.runs.push_back({m, seed, ev.mean, ev.terminal_count, std::move(r.log)});
      std::fprintf(stderr, "  desk %s seed %llu: mean %.4f terminal %d\n", to_string(m).c_str(),
                   static_cast<unsigned long long>(seed), ev.mean, ev.terminal_count);
    }
  }
  d.seconds = seconds_since(t0);
  d.ready = true;
  return d;
}

std::vector<const DeskRun*> runs_of(Mode m) {
  std::vector<const DeskRun*> out;
  for (const auto& r : desk().runs) {
    if (r.mode == m) out.push_back(&r);
  }
  return out;
}

double median_mean(Mode m) {
  std::vector<double> v;
  for (const auto* r : runs_of(m)) v.push_back(r->mean);
  return median(v);
}

Outcome desk_ranking() {
  const double her = median_mean(Mode::HddqnHer), hddqn = median_mean(Mode::Hddqn),
               high = median_mean(Mode::DdqnHigh), orig = median_mean(Mode::DdqnOriginal),
               low = median_mean(Mode::DdqnLow);
  Outcome o;
  o.pass = her > high && high > orig && orig > low && her >= hddqn - 0.01 * std::abs(hddqn) &&
           desk().seconds < 7200.0;
  o.detail = "median test return hddqn_her " + fmt("%.4f", her) + ", hddqn " + fmt("%.4f", hddqn) + ", ddqn_high " +
             fmt("%.4f", high) + ", ddqn_original " + fmt("%.4f", orig) + ", ddqn_low " + fmt("%.4f", low) +
             "; runtime " + fmt("%.0fs", desk().seconds);
  return o;
}

Outcome relative_gaps() {
  const double her = median_mean(Mode::HddqnHer), orig = median_mean(Mode::DdqnOriginal),
               low = median_mean(Mode::DdqnLow);
  const double vs_low = (her - low) / std::abs(low);
  const double vs_orig = (her - orig) / std::abs(orig);
  Outcome o;
  o.pass = vs_low >= 0.15 && vs_orig >= 0.05;
  o.detail = "improvement over ddqn_low " + fmt("%.1f%%", 100 * vs_low) + " (need 15%), over ddqn_original " +
             fmt("%.1f%%", 100 * vs_orig) + " (need 5%)";
  return o;
}

// First logged episode whose smoothed evaluation covers 95% of the distance from
// the first evaluation to the final level (mean of the last three).
int episodes_to_95(const std::vector<LogRow>& log) {
  if (log.size() < 4) return log.empty() ? 0 : log.back().episode;
  std::vector<double> smooth(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += log[j].eval_mean;
    smooth[i] = s / static_cast<double>(i - lo + 1);
  }
  const std::size_t n = log.size();
  const double start = log.front().eval_mean;
  const double final_level = (log[n - 1].eval_mean + log[n - 2].eval_mean + log[n - 3].eval_mean) / 3.0;
  const double target = start + 0.95 * (final_level - start);
  for (std::size_t i = 0; i < n; ++i) {
    if (final_level >= start ? smooth[i] >= target : smooth[i] <= target) return log[i].episode;
  }
  return log.back().episode;
}

Outcome convergence_order() {
  std::vector<double> her, plain;
  std::string per_seed;
  for (const auto* r : runs_of(Mode::HddqnHer)) her.push_back(episodes_to_95(r->log));
  for (const auto* r : runs_of(Mode::Hddqn)) plain.push_back(episodes_to_95(r->log));
  for (std::size_t i = 0; i < her.size(); ++i) {
    per_seed += " seed" + std::to_string(i + 1) + " " + std::to_string(static_cast<int>(her[i])) + "/" +
                std::to_string(static_cast<int>(plain[i]));
  }
  Outcome o;
  o.pass = median(her) < median(plain);
  o.detail = "median episodes to 95% hddqn_her " + std::to_string(static_cast<int>(median(her))) + " vs hddqn " +
             std::to_string(static_cast<int>(median(plain))) + " (her/hddqn:" + per_seed + ")";
  return o;
}

Outcome no_depletion() {
  auto runs = runs_of(Mode::HddqnHer);
  std::sort(runs.begin(), runs.end(), [](const DeskRun* a, const DeskRun* b) { return a->mean < b->mean; });
  const DeskRun* mid = runs[runs.size() / 2];
  std::string per_seed;
  for (const auto* r : runs_of(Mode::HddqnHer)) {
    per_seed += " seed" + std::to_string(r->seed) + "=" + std::to_string(r->terminal);
  }
  Outcome o;
  o.pass = mid->terminal == 0;
  o.detail = "median-return seed " + std::to_string(mid->seed) + ": " + std::to_string(mid->terminal) +
             " terminal of 100 (all seeds:" + per_seed + ")";
  return o;
}

// ---------------------------------------------------------------------------
// 6. hindsight guarantee

Outcome her_guarantee() {
  const RunConfig rc = load_run_config(kSource / "configs/desk.cfg");
  const Problem problem = build_problem(rc);
  TrainConfig tc = rc.train;
  tc.episodes = 200;
  tc.phase_threshold = 50;
  tc.eps_start = 1.0;
  tc.eps_end = 1.0;
  tc.eval_every = tc.episodes;
  tc.eval_episodes = 1;
  tc.hidden = {32, 32};
  int periods = 0, violations = 0;
  TrainHooks hooks;
  hooks.on_charging_end = [&](const ReplayBuffer<LowTransition>& buf, std::int64_t ep, std::int64_t inst,
                              double achieved, double) {
    ++periods;
    bool found = false;
    for (const auto& t : buf.records()) {
      if (t.episode_id == ep && t.option_instance_id == inst && t.done && t.target_penalty == 0.0 &&
          std::abs(t.option - achieved) <= kSocTolerance) {
        found = true;
        break;
      }
    }
    if (!found) ++violations;
  };
  const TrainResult r = train(Mode::HddqnHer, tc, problem, &hooks);
  Outcome o;
  o.pass = violations == 0 && periods > 0;
  o.detail = std::to_string(periods) + " charging periods over 200 episodes, " + std::to_string(violations) +
             " violations, " + std::to_string(r.stats.hindsight_records) + " hindsight records";
  return o;
}

// ---------------------------------------------------------------------------
// 7. environment invariants under a random policy

Outcome env_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_run_config(kSource / "configs/desk.cfg");
  const Problem problem = build_problem(rc);
  const EnvConfig& cfg = *problem.env;
  const Schedule& sched = *problem.schedule;
  const int K = sched.num_operating_periods();
  BusChargingEnv env(problem.env, problem.schedule, problem.train);
  Rng pick(2024);
  std::map<std::string, int> bad;
  std::int64_t steps = 0;
  int episodes = 0, full = 0, prescriptions = 0;
  while (steps < 100000) {
    EnvState s = env.reset(episodes % problem.train->num_days(), derive_seed(77, static_cast<std::uint64_t>(episodes)));
    ++episodes;
    int operating = 0, charging = 1;
    double option = cfg.e_max_kwh;
    auto prescribe = [&](const EnvState& at) {
      const auto feas = feasible_options(at, cfg);
      std::uniform_int_distribution<std::size_t> u(0, feas.size() - 1);
      std::bernoulli_distribution top(0.6);
      option = cfg.options()[static_cast<std::size_t>(top(pick) ? feas.back() : feas[u(pick)])];
      ++prescriptions;
      const double lo = std::max(cfg.e_min_kwh, at.soc - at.tau * cfg.d_max_kw * cfg.dt_hours);
      const double hi = std::min(cfg.e_max_kwh, at.soc + at.tau * cfg.c_max_kw * cfg.dt_hours);
      const bool inside = option >= lo - 1e-9 && option <= hi + 1e-9;
      if (!inside && feas.size() != 1) ++bad["option window"];
    };
    prescribe(s);
    bool terminal = false;
    while (!env.done()) {
      StepOutcome out;
      if (s.charging()) {
        std::bernoulli_distribution follow(0.9);
        const auto feas = feasible_actions(s, cfg);
        std::uniform_int_distribution<std::size_t> u(0, feas.size() - 1);
        out = env.step(follow(pick) ? pi_q(s, option, cfg) : feas[u(pick)]);
      } else {
        out = env.step(std::nullopt);
        if (!out.terminal && out.reward != 0.0) ++bad["operating reward"];
      }
      ++steps;
      const EnvState& n = out.next_state;
      if (out.terminal) {
        terminal = true;
        if (out.reward != -cfg.c_end) ++bad["terminal reward"];
        if (!(n.soc < cfg.e_min_kwh)) ++bad["terminal soc"];
      } else if (n.soc < cfg.e_min_kwh - 1e-9 || n.soc > cfg.e_max_kwh + 1e-9) {
        ++bad["battery bounds"];
      }
      if (s.charging() && n.period_flag == 0) {
        if (s.tau != 0 || n.tau != sched.periods[static_cast<std::size_t>(s.period_index + 1)].gap_steps) {
          ++bad["tau reset"];
        }
        if (n.period_index != s.period_index + 1) ++bad["period index"];
        ++operating;
      } else {
        if (n.tau != s.tau - 1) ++bad["tau decrement"];
        if (n.period_index != s.period_index) ++bad["period index"];
      }
      if (!s.charging() && n.period_flag == 1 && !out.terminal && !out.episode_complete) {
        ++charging;
        prescribe(n);
      }
      s = n;
    }
    if (!terminal) {
      ++full;
      // the trip before the first arrival is not simulated
      if (operating + 1 != K || charging != K - 1) ++bad["period counts"];
    }
  }
  int total = 0;
  std::string which;
  for (const auto& [k, v] : bad) {
    total += v;
    which += " " + k + "=" + std::to_string(v);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = total == 0 && full > 0 && secs < 60.0;
  o.detail = std::to_string(steps) + " steps, " + std::to_string(episodes) + " episodes (" + std::to_string(full) +
             " full), " + std::to_string(prescriptions) + " prescriptions, " + std::to_string(total) +
             " violations" + which + ", " + fmt("%.1fs", secs);
  return o;
}

// ---------------------------------------------------------------------------
// 8. numerics

TdBatch random_batch(int features, int outputs, int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> act(0, outputs - 1);
  TdBatch b;
  b.states.resize(features, n);
  b.next_states.resize(features, n);
  b.rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < features; ++f) {
      b.states(f, i) = g(rng);
      b.next_states(f, i) = g(rng);
    }
    b.actions.push_back(act(rng));
    b.rewards(i) = g(rng);
    b.done.push_back(1);
  }
  return b;
}

Outcome numerics() {
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> width(2, 6);
    const int in = width(rng), hid = width(rng), out = width(rng);
    Mlp net({in, hid, out}, 1000 + static_cast<std::uint64_t>(trial));
    const TdBatch b = random_batch(in, out, 5, rng);
    Eigen::VectorXd grad;
    net.mse_loss(b.states, b.actions, b.rewards, &grad);
    const Eigen::VectorXd p = net.flat_params();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double h = 1e-6;
      Eigen::VectorXd q = p;
      q(i) = p(i) + h;
      net.set_flat_params(q);
      const double up = net.mse_loss(b.states, b.actions, b.rewards, nullptr);
      q(i) = p(i) - h;
      net.set_flat_params(q);
      const double down = net.mse_loss(b.states, b.actions, b.rewards, nullptr);
      net.set_flat_params(p);
      const double fd = (up - down) / (2 * h);
      const double denom = std::max(1e-6, std::abs(fd) + std::abs(grad(i)));
      worst = std::max(worst, std::abs(fd - grad(i)) / denom);
    }
  }

  // online net prefers action 0, target net values action 1 higher
  Mlp online({1, 2}, 1), target({1, 2}, 1);
  online.weights()[0].setZero();
  online.biases()[0] << 1.0, 0.0;
  target.weights()[0].setZero();
  target.biases()[0] << -7.0, -2.0;
  TdBatch one;
  one.states = Eigen::MatrixXd::Zero(1, 1);
  one.next_states = Eigen::MatrixXd::Zero(1, 1);
  one.actions = {0};
  one.rewards = Eigen::VectorXd::Constant(1, -0.5);
  one.done = {0};
  const double y = double_q_targets(online, target, one)(0);
  const bool split = std::abs(y - (-7.5)) < 1e-12;

  QNetwork q({4, 32, 32, 3}, 1e-3, 17, 1000000);
  const TdBatch fixed = random_batch(4, 3, 10, rng);
  for (int i = 0; i < 20000; ++i) {
    if (q.update(fixed) < 1e-7) break;
  }
  const double loss = q.online.mse_loss(fixed.states, fixed.actions, double_q_targets(q.online, q.target, fixed),
                                        nullptr);
  Outcome o;
  o.pass = worst < 1e-4 && split && loss < 1e-6;
  o.detail = "max gradient rel. error " + fmt("%.2e", worst) + " over 100 nets; double-Q target " + fmt("%.4f", y) +
             " (expect -7.5000); overfit loss " + fmt("%.2e", loss);
  return o;
}

// ---------------------------------------------------------------------------
// 9. hazards

Outcome hazards() {
  std::vector<double> pmf(6, 0.0);
  for (int x : {3, 4, 5}) pmf[static_cast<std::size_t>(x)] = 1.0 / 3;
  const std::vector<double> exact = {1.0 / 3, 0.5, 1.0}, verbatim = {1.0 / 3, 0.5, 0.75};
  double err = 0.0;
  for (int i = 0; i < 3; ++i) {
    err = std::max(err, std::abs(operating_hazard(pmf, 3 + i, HazardMode::ExactHazard) - exact[static_cast<std::size_t>(i)]));
    err = std::max(err,
                   std::abs(operating_hazard(pmf, 3 + i, HazardMode::PaperFormula) - verbatim[static_cast<std::size_t>(i)]));
  }

  Schedule sched;
  for (int k = 0; k < 2; ++k) {
    OperatingPeriod p;
    p.departure_step = k * 10;
    p.gap_steps = 9;
    p.travel_pmf = pmf;
    sched.periods.push_back(p);
  }
  EnvConfig cfg;
  cfg.discharge.kind = DischargeProfile::Kind::Discrete;
  cfg.discharge.pmf = {{0.0, 1.0}};
  const PriceSeries prices(std::vector<double>(40, 0.02), 6, "flat");
  Rng rng(5);
  const int n = 100000;
  std::map<int, int> counts;
  for (int i = 0; i < n; ++i) {
    EnvState s;
    s.soc = 100;
    s.period_flag = 0;
    s.tau = 9;
    s.price_window = prices.window(0, cfg.w_p);
    int len = 0;
    while (true) {
      const auto out = step(s, std::nullopt, rng, prices, sched, cfg);
      ++len;
      if (out.next_state.period_flag == 1) break;
      s = out.next_state;
    }
    ++counts[len];
  }
  bool law = counts.size() == 3;
  std::string freq;
  for (int x : {3, 4, 5}) {
    const double p = 1.0 / 3;
    const double sigma = std::sqrt(n * p * (1 - p));
    law = law && std::abs(counts[x] - n * p) < 3 * sigma;
    freq += " " + std::to_string(x) + ":" + std::to_string(counts[x]);
  }
  Outcome o;
  o.pass = err <= 1e-12 && law;
  o.detail = "max hazard error " + fmt("%.1e", err) + "; trip lengths over 1e5 samples" + freq;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "flat and hierarchical optima agree on tabular instances", flat_vs_hier},
      {2, "learner reaches the tabular optimum", learner_vs_oracle},
      {3, "desk-scale ranking", desk_ranking},
      {4, "desk-scale relative gaps", relative_gaps},
      {5, "hindsight variant converges first", convergence_order},
      {6, "hindsight guarantee", her_guarantee},
      {7, "environment invariants", env_invariants},
      {8, "numerics", numerics},
      {9, "hazards and travel-time law", hazards},
      {10, "no depletion under the learned policy", no_depletion},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
