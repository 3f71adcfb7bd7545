#include "ebsched/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "ebsched/errors.hpp"

namespace ebsched {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(seed ^ mix(stream + 0x1234567ULL));
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool low_uses_goal(Mode m) { return m != Mode::DdqnLow; }

std::vector<int> indices_of(const std::vector<ActionChoice>& feas) {
  std::vector<int> out;
  out.reserve(feas.size());
  for (const auto& c : feas) out.push_back(c.index);
  return out;
}

ActionChoice choice_for(const std::vector<ActionChoice>& feas, int index) {
  for (const auto& c : feas) {
    if (c.index == index) return c;
  }
  throw ContractViolation("selected action is not in the feasible set");
}

std::vector<int> option_set(Mode mode, const EnvState& s, const EnvConfig& cfg) {
  return mode == Mode::Hddqn ? all_options(cfg) : feasible_options(s, cfg);
}

struct FlatTransition {
  EnvState state;
  int action_index = 0;
  double reward = 0.0;
  EnvState next_state;
  bool done = false;
  std::vector<int> next_feasible;
};

TdBatch low_batch(const std::vector<const LowTransition*>& recs, const FeatureBounds& b, bool with_goal) {
  TdBatch batch;
  const int f = feature_size(b, with_goal);
  const auto n = static_cast<Eigen::Index>(recs.size());
  batch.states.resize(f, n);
  batch.next_states.resize(f, n);
  batch.rewards.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = *recs[static_cast<std::size_t>(i)];
    const std::optional<double> goal = with_goal ? std::optional<double>(r.option) : std::nullopt;
    batch.states.col(i) = encode_state(r.state, goal, b);
    batch.next_states.col(i) = encode_state(r.next_state, goal, b);
    batch.actions.push_back(r.action_index);
    batch.rewards(i) = r.reward;
    batch.done.push_back(r.done ? 1 : 0);
    batch.next_feasible.push_back(r.next_feasible);
  }
  return batch;
}

TdBatch high_batch(const std::vector<const HighTransition*>& recs, const FeatureBounds& b) {
  TdBatch batch;
  const int f = feature_size(b, false);
  const auto n = static_cast<Eigen::Index>(recs.size());
  batch.states.resize(f, n);
  batch.next_states.resize(f, n);
  batch.rewards.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = *recs[static_cast<std::size_t>(i)];
    batch.states.col(i) = encode_state(r.start_state, std::nullopt, b);
    batch.next_states.col(i) = encode_state(r.next_state, std::nullopt, b);
    batch.actions.push_back(r.option_index);
    batch.rewards(i) = r.reward;
    batch.done.push_back(r.done ? 1 : 0);
    batch.next_feasible.push_back(r.next_feasible);
  }
  return batch;
}

TdBatch flat_batch(const std::vector<const FlatTransition*>& recs, const FeatureBounds& b) {
  TdBatch batch;
  const int f = feature_size(b, false);
  const auto n = static_cast<Eigen::Index>(recs.size());
  batch.states.resize(f, n);
  batch.next_states.resize(f, n);
  batch.rewards.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = *recs[static_cast<std::size_t>(i)];
    batch.states.col(i) = encode_state(r.state, std::nullopt, b);
    batch.next_states.col(i) = encode_state(r.next_state, std::nullopt, b);
    batch.actions.push_back(r.action_index);
    batch.rewards(i) = r.reward;
    batch.done.push_back(r.done ? 1 : 0);
    batch.next_feasible.push_back(r.next_feasible);
  }
  return batch;
}

struct LossMeter {
  double sum = 0.0;
  int count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  double take() {
    const double m = count ? sum / count : kNaN;
    sum = 0.0;
    count = 0;
    return m;
  }
};

int sample_day(const PriceSeries& prices, Rng& rng) {
  const int days = prices.num_days();
  if (days < 1) throw DataError("training span has no complete day");
  std::uniform_int_distribution<int> pick(0, days - 1);
  return pick(rng);
}

// Charging-period choice for a learned low net (eps-greedy) or pi_q.
ActionChoice select_low(const PolicyBundle& policy, const EnvState& s, double option, const EnvConfig& cfg,
                        double eps, Rng& rng) {
  if (policy.mode == Mode::DdqnHigh) return pi_q(s, option, cfg);
  const auto feas = feasible_actions(s, cfg);
  const QNetwork& net = policy.low ? *policy.low : *policy.flat;
  const std::optional<double> goal =
      policy.low && low_uses_goal(policy.mode) ? std::optional<double>(option) : std::nullopt;
  const Eigen::VectorXd q = net.values(encode_state(s, goal, policy.bounds));
  return choice_for(feas, epsilon_greedy(q, indices_of(feas), eps, rng));
}

int select_high(const PolicyBundle& policy, const EnvState& s, const EnvConfig& cfg, double eps, Rng& rng,
                std::vector<int>* feasible_out) {
  const auto feas = option_set(policy.mode, s, cfg);
  if (feasible_out) *feasible_out = feas;
  const Eigen::VectorXd q = policy.high->values(encode_state(s, std::nullopt, policy.bounds));
  return epsilon_greedy(q, feas, eps, rng);
}

double boundary_penalty(Mode mode, double option, double end_soc, const EnvConfig& cfg, const TrainConfig& tc) {
  if (mode == Mode::DdqnLow) return target_penalty(cfg.e_max_kwh, end_soc, tc.kappa_prime);
  return target_penalty(option, end_soc, tc.kappa);
}

TrainResult train_hierarchical(Mode mode, const TrainConfig& tc, const Problem& problem, const TrainHooks* hooks,
                               const LogCallback& on_log) {
  const EnvConfig& cfg = *problem.env;
  const auto& grid = cfg.options();
  const FeatureBounds bounds = make_feature_bounds(cfg, *problem.schedule, *problem.train);
  TrainResult result;
  result.policy = make_policy_bundle(mode, tc, cfg, bounds, derive_seed(tc.seed, 1));
  PolicyBundle& policy = result.policy;
  TrainStats& stats = result.stats;

  Rng explore(derive_seed(tc.seed, 2));
  Rng replay_rng(derive_seed(tc.seed, 3));
  Rng day_rng(derive_seed(tc.seed, 4));
  BusChargingEnv env(problem.env, problem.schedule, problem.train);
  ReplayBuffer<LowTransition> low_buf(tc.low_capacity);
  ReplayBuffer<HighTransition> high_buf(tc.high_capacity);
  HindsightStager stager;
  const EpsilonSchedule eps{tc.eps_start, tc.eps_end, tc.eps_anneal_fraction, tc.episodes};
  const bool her = mode == Mode::HddqnHer;
  const bool goal_input = low_uses_goal(mode);
  LossMeter low_loss, high_loss;

  for (int e = 0; e < tc.episodes; ++e) {
    const double eps_now = eps.value(e);
    const int day = sample_day(*problem.train, day_rng);
    EnvState s = env.reset(day, derive_seed(tc.seed, 1000000 + static_cast<std::uint64_t>(e)));
    std::int64_t instance = 0;

    int option_idx = -1;
    double option = cfg.e_max_kwh;
    EnvState cycle_start;
    double running = 0.0;
    double achieved = s.soc;
    PeriodRecord record;

    auto begin_cycle = [&](const EnvState& start) {
      cycle_start = start;
      running = 0.0;
      record = PeriodRecord{};
      record.start_soc = start.soc;
      record.valid = true;
      if (policy.high) {
        std::vector<int> feas;
        option_idx = select_high(policy, start, cfg, eps_now, explore, &feas);
        option = grid[static_cast<std::size_t>(option_idx)];
        if (hooks && hooks->on_prescribe) hooks->on_prescribe(start, option, feas);
      } else {
        option_idx = -1;
        option = cfg.e_max_kwh;
      }
    };
    begin_cycle(s);

    while (!env.done()) {
      StepOutcome out;
      if (s.charging()) {
        const ActionChoice choice = select_low(policy, s, option, cfg, eps_now, explore);
        out = env.step(choice);
        record.charging_prices.push_back(out.price);
        const EnvState& next = out.next_state;
        const bool departing = next.period_flag == 0;
        if (departing) achieved = next.soc;
        if (policy.low) {
          LowTransition lt;
          lt.state = s;
          lt.option = goal_input ? option : cfg.e_max_kwh;
          lt.action_index = choice.index;
          lt.reward = charging_step_reward(choice.power, cfg.dt_hours, out.price);
          lt.next_state = next;
          lt.done = departing || out.terminal;
          lt.episode_id = e;
          lt.option_instance_id = instance;
          if (lt.done) {
            lt.target_penalty = boundary_penalty(mode, option, next.soc, cfg, tc);
            lt.reward -= lt.target_penalty;
          } else {
            lt.next_feasible = indices_of(feasible_actions(next, cfg));
          }
          low_buf.push(lt);
          ++stats.low_transitions;
          if (her) {
            stager.stage(lt);
            if (lt.done) stats.hindsight_records += static_cast<std::int64_t>(stager.finalize(low_buf, next.soc, option));
          }
          if (departing && hooks && hooks->on_charging_end) {
            hooks->on_charging_end(low_buf, e, instance, next.soc, option);
          }
        }
      } else {
        out = env.step(std::nullopt);
        if (out.terminal) record.operating_reward += out.reward;
      }
      ++stats.env_steps;
      if (hooks && hooks->on_step) hooks->on_step(s, out);

      if (policy.low) {
        if (auto mb = low_buf.sample(static_cast<std::size_t>(tc.batch_low), replay_rng)) {
          low_loss.add(policy.low->update(low_batch(*mb, bounds, goal_input)));
          ++stats.low_updates;
        }
      }
      running = high_reward_accumulate(running, out.reward);

      const bool close = out.terminal || out.boundary == PeriodBoundary::ChargingStarted;
      if (close) {
        const EnvState& next = out.next_state;
        if (policy.high) {
          HighTransition ht;
          ht.start_state = cycle_start;
          ht.episode_id = e;
          ht.next_state = next;
          ht.done = out.terminal || out.episode_complete;
          bool counterfactual = false;
          if (her) {
            ht.relabeled_option = achieved;
            ht.option_index = nearest_option_index(grid, achieved);
            counterfactual = e < tc.phase_threshold;
            ht.reward = phase_high_reward(e, tc.phase_threshold, record, achieved, running, cfg);
            if (counterfactual) ++stats.counterfactual_rewards;
          } else {
            ht.relabeled_option = option;
            ht.option_index = option_idx;
            ht.reward = running;
          }
          if (!ht.done) ht.next_feasible = option_set(mode, next, cfg);
          if (hooks && hooks->on_high_store) hooks->on_high_store(ht, achieved, counterfactual);
          high_buf.push(std::move(ht));
          ++stats.high_transitions;
          if (auto mb = high_buf.sample(static_cast<std::size_t>(tc.batch_high), replay_rng)) {
            high_loss.add(policy.high->update(high_batch(*mb, bounds)));
            ++stats.high_updates;
          }
        }
        if (out.terminal) {
          ++stats.terminal_episodes;
          if (her) stats.deleted_records += static_cast<std::int64_t>(delete_option_transitions(low_buf, &stager, e, instance));
        }
        if (!env.done()) {
          ++instance;
          begin_cycle(next);
        }
      }
      s = out.next_state;
    }

    if ((e + 1) % tc.eval_every == 0) {
      const EvalSummary ev = evaluate(policy, problem, tc, tc.eval_episodes, derive_seed(tc.seed, 7), false);
      LogRow row;
      row.episode = e + 1;
      row.phase = her ? (e < tc.phase_threshold ? 1 : 2) : 0;
      row.eps_low = policy.low ? eps_now : kNaN;
      row.eps_high = policy.high ? eps_now : kNaN;
      row.low_loss = low_loss.take();
      row.high_loss = high_loss.take();
      row.eval_mean = ev.mean;
      row.eval_stderr = ev.stderr_;
      result.log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  return result;
}

TrainResult train_flat(const TrainConfig& tc, const Problem& problem, const TrainHooks* hooks,
                       const LogCallback& on_log) {
  const EnvConfig& cfg = *problem.env;
  const FeatureBounds bounds = make_feature_bounds(cfg, *problem.schedule, *problem.train);
  TrainResult result;
  result.policy = make_policy_bundle(Mode::DdqnOriginal, tc, cfg, bounds, derive_seed(tc.seed, 1));
  PolicyBundle& policy = result.policy;
  TrainStats& stats = result.stats;

  Rng explore(derive_seed(tc.seed, 2));
  Rng replay_rng(derive_seed(tc.seed, 3));
  Rng day_rng(derive_seed(tc.seed, 4));
  BusChargingEnv env(problem.env, problem.schedule, problem.train);
  ReplayBuffer<FlatTransition> buf(tc.low_capacity);
  const EpsilonSchedule eps{tc.eps_start, tc.eps_end, tc.eps_anneal_fraction, tc.episodes};
  LossMeter loss;

  for (int e = 0; e < tc.episodes; ++e) {
    const double eps_now = eps.value(e);
    const int day = sample_day(*problem.train, day_rng);
    EnvState s = env.reset(day, derive_seed(tc.seed, 1000000 + static_cast<std::uint64_t>(e)));
    std::optional<FlatTransition> pending;
    while (!env.done()) {
      StepOutcome out;
      if (s.charging()) {
        const auto feas = feasible_actions(s, cfg);
        if (pending) {
          pending->next_state = s;
          pending->done = false;
          pending->next_feasible = indices_of(feas);
          buf.push(std::move(*pending));
          pending.reset();
        }
        const Eigen::VectorXd q = policy.flat->values(encode_state(s, std::nullopt, bounds));
        const ActionChoice choice = choice_for(feas, epsilon_greedy(q, indices_of(feas), eps_now, explore));
        pending = FlatTransition{};
        pending->state = s;
        pending->action_index = choice.index;
        out = env.step(choice);
      } else {
        out = env.step(std::nullopt);
      }
      ++stats.env_steps;
      if (hooks && hooks->on_step) hooks->on_step(s, out);
      if (pending) pending->reward += out.reward;
      if ((out.terminal || out.episode_complete) && pending) {
        pending->next_state = out.next_state;
        pending->done = true;
        buf.push(std::move(*pending));
        pending.reset();
      }
      if (out.terminal) ++stats.terminal_episodes;
      if (auto mb = buf.sample(static_cast<std::size_t>(tc.batch_high), replay_rng)) {
        loss.add(policy.flat->update(flat_batch(*mb, bounds)));
        ++stats.low_updates;
      }
      s = out.next_state;
    }
    if ((e + 1) % tc.eval_every == 0) {
      const EvalSummary ev = evaluate(policy, problem, tc, tc.eval_episodes, derive_seed(tc.seed, 7), false);
      LogRow row;
      row.episode = e + 1;
      row.phase = 0;
      row.eps_low = eps_now;
      row.eps_high = kNaN;
      row.low_loss = loss.take();
      row.high_loss = kNaN;
      row.eval_mean = ev.mean;
      row.eval_stderr = ev.stderr_;
      result.log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  return result;
}

}  // namespace

TrainResult train(Mode mode, const TrainConfig& tc, const Problem& problem, const TrainHooks* hooks,
                  const LogCallback& on_log) {
  tc.validate();
  if (!problem.env || !problem.schedule || !problem.train || !problem.test) {
    throw ContractViolation("training needs env config, schedule and both price spans");
  }
  if (mode == Mode::DdqnOriginal) return train_flat(tc, problem, hooks, on_log);
  return train_hierarchical(mode, tc, problem, hooks, on_log);
}

TrainResult train_hddqn_her(const TrainConfig& tc, const Problem& problem, const TrainHooks* hooks,
                            const LogCallback& on_log) {
  return train(Mode::HddqnHer, tc, problem, hooks, on_log);
}

TrainResult train_baseline(Mode mode, const TrainConfig& tc, const Problem& problem, const TrainHooks* hooks,
                           const LogCallback& on_log) {
  if (mode == Mode::HddqnHer) throw ContractViolation("hddqn_her is not a baseline");
  return train(mode, tc, problem, hooks, on_log);
}

int greedy_option(const PolicyBundle& policy, const EnvState& state, const EnvConfig& cfg) {
  if (!policy.high) return -1;
  Rng unused(0);
  return select_high(policy, state, cfg, 0.0, unused, nullptr);
}

double option_value_kwh(const PolicyBundle& policy, int option_index, const EnvConfig& cfg) {
  if (policy.mode == Mode::DdqnOriginal) return kNaN;
  if (option_index < 0) return cfg.e_max_kwh;
  return cfg.options()[static_cast<std::size_t>(option_index)];
}

ActionChoice greedy_action(const PolicyBundle& policy, const EnvState& state, double option_kwh,
                           const EnvConfig& cfg) {
  Rng unused(0);
  return select_low(policy, state, option_kwh, cfg, 0.0, unused);
}

EvalSummary evaluate(const PolicyBundle& policy, const Problem& problem, const TrainConfig& tc, int n_episodes,
                     std::uint64_t seed, bool keep_traces) {
  if (n_episodes < 1) throw ContractViolation("evaluation needs at least one episode");
  policy.check_consistent();
  const EnvConfig& cfg = *problem.env;
  BusChargingEnv env(problem.env, problem.schedule, problem.test);
  const int days = problem.test->num_days();
  if (days < 1) throw DataError("test span has no complete day");
  EvalSummary summary;
  std::vector<double> returns;
  for (int i = 0; i < n_episodes; ++i) {
    EnvState s = env.reset(i % days, derive_seed(seed, static_cast<std::uint64_t>(i)));
    EpisodeResult ep;
    double option = kNaN;
    bool need_option = true;
    while (!env.done()) {
      if (s.charging() && need_option) {
        option = option_value_kwh(policy, greedy_option(policy, s, cfg), cfg);
        need_option = false;
      }
      StepOutcome out;
      double pen = 0.0, anxiety = 0.0;
      if (s.charging()) {
        out = env.step(greedy_action(policy, s, option, cfg));
        if (out.next_state.period_flag == 0) {
          const double end = out.next_state.soc;
          if (policy.mode == Mode::DdqnLow) {
            anxiety = target_penalty(cfg.e_max_kwh, end, tc.kappa_prime);
          } else if (policy.mode != Mode::DdqnOriginal) {
            pen = target_penalty(option, end, tc.kappa);
          }
        }
      } else {
        out = env.step(std::nullopt);
        if (out.boundary == PeriodBoundary::ChargingStarted) need_option = true;
      }
      ep.total_return += out.reward;
      ++ep.steps;
      if (keep_traces) {
        TraceRow row;
        row.t = s.episode_step;
        row.clock = env.clock_minutes(s);
        row.B = s.period_flag;
        row.k = s.period_index;
        row.tau = s.tau;
        row.soc = s.soc;
        row.price = out.price;
        row.power = out.power;
        row.reward = out.reward;
        row.option = option;
        row.target_penalty = pen;
        row.range_anxiety = anxiety;
        ep.trace.push_back(row);
      }
      if (out.terminal) ep.terminal = true;
      s = out.next_state;
    }
    if (ep.terminal) ++summary.terminal_count;
    returns.push_back(ep.total_return);
    summary.episodes.push_back(std::move(ep));
  }
  const double n = static_cast<double>(returns.size());
  summary.mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : returns) ss += (r - summary.mean) * (r - summary.mean);
  summary.stderr_ = returns.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  return summary;
}

namespace {

void put(std::ostream& out, double v) {
  if (std::isnan(v)) return;
  out << v;
}

}  // namespace

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(10);
  out << "t,clock,B,k,tau,soc,price,power,reward,option,target_penalty,range_anxiety\n";
  for (const auto& r : rows) {
    const int m = ((r.clock % 1440) + 1440) % 1440;
    out << r.t << ',' << std::setw(2) << std::setfill('0') << m / 60 << ':' << std::setw(2) << m % 60
        << std::setfill(' ') << ',' << r.B << ',' << r.k << ',' << r.tau << ',' << r.soc << ',' << r.price << ','
        << r.power << ',' << r.reward << ',';
    put(out, r.option);
    out << ',' << r.target_penalty << ',' << r.range_anxiety << '\n';
  }
}

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(10);
  out << "episode,phase,eps_low,eps_high,low_loss,high_loss,eval_mean,eval_stderr\n";
  for (const auto& r : rows) {
    out << r.episode << ',' << r.phase << ',';
    put(out, r.eps_low);
    out << ',';
    put(out, r.eps_high);
    out << ',';
    put(out, r.low_loss);
    out << ',';
    put(out, r.high_loss);
    out << ',' << r.eval_mean << ',' << r.eval_stderr << '\n';
  }
}

void save_policy(const std::filesystem::path& path, const PolicyBundle& policy) {
  policy.check_consistent();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto& b = policy.bounds;
  out << "ebsched-policy 1\nmode " << to_string(policy.mode) << '\n';
  out << "bounds " << b.soc_min << ' ' << b.soc_max << ' ' << b.tau_max << ' ' << b.k_max << ' ' << b.price_min
      << ' ' << b.price_max << ' ' << b.w_p << '\n';
  if (policy.high) save_qnetwork(out, "high", *policy.high);
  if (policy.low) save_qnetwork(out, "low", *policy.low);
  if (policy.flat) save_qnetwork(out, "flat", *policy.flat);
}

Mode checkpoint_mode(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string tag, mode_text;
  int version = 0;
  if (!(in >> tag >> version) || tag != "ebsched-policy" || version != 1) {
    throw DataError(path.string() + ": not a policy checkpoint");
  }
  if (!(in >> tag >> mode_text) || tag != "mode") throw DataError(path.string() + ": missing mode");
  try {
    return parse_mode(mode_text);
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

PolicyBundle load_policy(const std::filesystem::path& path, const PolicyBundle& expected) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string tag, mode_text;
  int version = 0;
  if (!(in >> tag >> version) || tag != "ebsched-policy" || version != 1) {
    throw DataError(path.string() + ": not a policy checkpoint");
  }
  if (!(in >> tag >> mode_text) || tag != "mode") throw DataError(path.string() + ": missing mode");
  PolicyBundle p;
  p.mode = parse_mode(mode_text);
  if (p.mode != expected.mode) {
    throw DataError(path.string() + ": checkpoint mode " + mode_text + " differs from requested " +
                    to_string(expected.mode));
  }
  auto& b = p.bounds;
  if (!(in >> tag >> b.soc_min >> b.soc_max >> b.tau_max >> b.k_max >> b.price_min >> b.price_max >> b.w_p) ||
      tag != "bounds") {
    throw DataError(path.string() + ": malformed feature bounds");
  }
  if (expected.high) p.high = load_qnetwork(in, "high", expected.high->online.layer_sizes());
  if (expected.low) p.low = load_qnetwork(in, "low", expected.low->online.layer_sizes());
  if (expected.flat) p.flat = load_qnetwork(in, "flat", expected.flat->online.layer_sizes());
  p.check_consistent();
  return p;
}

}  // namespace ebsched
