#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ebsched/errors.hpp"
#include "ebsched/oracle.hpp"
#include "ebsched/run_config.hpp"
#include "ebsched/trainer.hpp"

namespace fs = std::filesystem;
using namespace ebsched;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kTrainingFault = 4,
  kVerdictFail = 5,
  kVerdictInconclusive = 6,
};

fs::path default_root() {
  if (const char* env = std::getenv("EBSCHED_OUT"); env && *env) return env;
  return "runs";
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create output directory " + p.string() + ": " + ec.message());
}

TrainResult run_training(const RunConfig& rc, Mode mode, const fs::path& out, const std::string& command) {
  ensure_dir(out);
  ManifestInfo info;
  info.command = command;
  info.mode = to_string(mode);
  info.seeds = {rc.train.seed};
  info.out_dir = out;
  info.data_files = {rc.price_file};
  write_manifest(out / "manifest.json", rc, info);

  const Problem problem = build_problem(rc);
  const auto on_log = [&](const LogRow& row) {
    std::cerr << to_string(mode) << " seed " << rc.train.seed << " episode " << row.episode << " eval "
              << std::fixed << std::setprecision(4) << row.eval_mean << '\n';
    std::cerr.unsetf(std::ios::floatfield);
  };
  TrainResult res = train(mode, rc.train, problem, nullptr, on_log);
  write_log_csv(out / "training_log.csv", res.log);
  save_policy(out / "policy.ckpt", res.policy);
  return res;
}

void write_eval(const fs::path& out, const EvalSummary& ev, bool traces) {
  std::ofstream per(out / "evaluation.csv");
  if (!per) throw DataError("cannot write " + (out / "evaluation.csv").string());
  per << std::setprecision(17) << "episode,return,terminal,steps\n";
  for (std::size_t i = 0; i < ev.episodes.size(); ++i) {
    const auto& e = ev.episodes[i];
    per << i << ',' << e.total_return << ',' << (e.terminal ? 1 : 0) << ',' << e.steps << '\n';
  }
  std::ofstream sum(out / "summary.csv");
  sum << std::setprecision(17) << "episodes,mean,stderr,terminal_count\n"
      << ev.episodes.size() << ',' << ev.mean << ',' << ev.stderr_ << ',' << ev.terminal_count << '\n';
  if (traces) {
    for (std::size_t i = 0; i < ev.episodes.size(); ++i) {
      std::ostringstream name;
      name << "trace_" << std::setw(3) << std::setfill('0') << i << ".csv";
      write_trace_csv(out / name.str(), ev.episodes[i].trace);
    }
  }
}

int cmd_train(const std::string& config, const std::string& mode_text, std::uint64_t seed, int episodes,
              std::string out_text) {
  const Mode mode = parse_mode(mode_text);
  RunConfig rc = load_run_config(config);
  rc.train.seed = seed;
  if (episodes > 0) {
    rc.train.episodes = episodes;
    rc.train.phase_threshold = std::min(rc.train.phase_threshold, episodes);
  }
  rc.train.validate();
  const fs::path out = out_text.empty() ? default_root() / (to_string(mode) + "-seed" + std::to_string(seed))
                                        : fs::path(out_text);
  run_training(rc, mode, out, "train");
  std::cout << "trained " << to_string(mode) << " for " << rc.train.episodes << " episodes; outputs in "
            << out.string() << '\n';
  return kOk;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& config, int n, bool traces,
                 std::string out_text, std::uint64_t seed) {
  if (n < 1) throw ConfigError("--episodes must be at least 1 for evaluate");
  const RunConfig rc = load_run_config(config);
  const Problem problem = build_problem(rc);
  const Mode mode = checkpoint_mode(checkpoint);
  const PolicyBundle expected = make_policy_bundle(
      mode, rc.train, rc.env, make_feature_bounds(rc.env, *problem.schedule, *problem.train), 0);
  const PolicyBundle policy = load_policy(checkpoint, expected);
  const fs::path out = out_text.empty() ? fs::path(checkpoint).parent_path() / "evaluation" : fs::path(out_text);
  ensure_dir(out);
  ManifestInfo info;
  info.command = "evaluate";
  info.mode = to_string(mode);
  info.seeds = {seed};
  info.out_dir = out;
  info.data_files = {rc.price_file, checkpoint};
  info.extra = {{"episodes", std::to_string(n)}};
  write_manifest(out / "manifest.json", rc, info);
  const EvalSummary ev = evaluate(policy, problem, rc.train, n, derive_seed(seed, 7), traces);
  write_eval(out, ev, traces);
  std::cout << std::setprecision(6) << "mean return " << ev.mean << " (stderr " << ev.stderr_ << ") over " << n
            << " episodes, terminal " << ev.terminal_count << '\n';
  return kOk;
}

int cmd_oracle_check(const std::string& instance, std::string out_text) {
  if (!fs::exists(instance)) throw DataError("instance file not found: " + instance);
  const TabularInstance inst = parse_instance(instance);
  const Theorem1Report rep = check_theorem1(inst);
  const fs::path out = out_text.empty() ? default_root() / ("oracle-" + inst.name) : fs::path(out_text);
  ensure_dir(out);
  write_theorem1_report(out / "oracle_report.csv", inst, rep);
  std::cout << to_string(rep.verdict) << ' ' << inst.name << " max_discrepancy=" << std::setprecision(3)
            << rep.max_discrepancy << " states=" << rep.rows.size();
  if (rep.verdict != Verdict::Pass && !rep.detail.empty()) std::cout << " (" << rep.detail << ")";
  std::cout << '\n';
  switch (rep.verdict) {
    case Verdict::Pass: return kOk;
    case Verdict::Fail: return kVerdictFail;
    case Verdict::Inconclusive: return kVerdictInconclusive;
  }
  return kVerdictFail;
}

int cmd_compare(const std::string& config, const std::vector<std::string>& modes_text,
                const std::vector<std::uint64_t>& seeds, int episodes, std::string out_text) {
  std::vector<Mode> modes;
  for (const auto& m : modes_text) modes.push_back(parse_mode(m));
  if (modes.empty()) {
    for (Mode m : all_modes()) modes.push_back(m);
  }
  if (seeds.empty()) throw ConfigError("--seeds must list at least one seed");
  const RunConfig base = load_run_config(config);
  const fs::path out = out_text.empty() ? default_root() / "compare" : fs::path(out_text);
  ensure_dir(out);

  std::ofstream rows(out / "compare.csv");
  if (!rows) throw DataError("cannot write " + (out / "compare.csv").string());
  rows << std::setprecision(17) << "mode,seed,bus,status,mean,stderr,terminal_count\n";
  std::vector<std::vector<double>> means(modes.size(), std::vector<double>(seeds.size(), std::nan("")));
  bool any_failed = false;
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      RunConfig rc = for_bus(base, static_cast<int>(si));
      rc.train.seed = seeds[si];
      if (episodes > 0) {
        rc.train.episodes = episodes;
        rc.train.phase_threshold = std::min(rc.train.phase_threshold, episodes);
      }
      const fs::path dir = out / (to_string(modes[mi]) + "-seed" + std::to_string(seeds[si]));
      std::string status = "ok";
      EvalSummary ev;
      try {
        const TrainResult res = run_training(rc, modes[mi], dir, "compare");
        const Problem problem = build_problem(rc);
        ev = evaluate(res.policy, problem, rc.train, rc.test_episodes, derive_seed(seeds[si], 7), false);
        write_eval(dir, ev, false);
        means[mi][si] = ev.mean;
      } catch (const TrainingFault& e) {
        status = "training_fault";
        std::cerr << to_string(modes[mi]) << " seed " << seeds[si] << ": " << e.what() << '\n';
      } catch (const SimulatorFault& e) {
        status = "simulator_fault";
        std::cerr << to_string(modes[mi]) << " seed " << seeds[si] << ": " << e.what() << '\n';
      }
      any_failed = any_failed || status != "ok";
      rows << to_string(modes[mi]) << ',' << seeds[si] << ',' << si + 1 << ',' << status << ',';
      if (status == "ok") rows << ev.mean << ',' << ev.stderr_ << ',' << ev.terminal_count;
      else rows << ",,";
      rows << '\n';
      rows.flush();
    }
  }

  std::ofstream sum(out / "summary.csv");
  sum << std::setprecision(17) << "mode";
  for (std::size_t si = 0; si < seeds.size(); ++si) sum << ",EB" << si + 1;
  sum << ",max,average\n";
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    sum << to_string(modes[mi]);
    double best = -std::numeric_limits<double>::infinity(), total = 0.0;
    int count = 0;
    for (double m : means[mi]) {
      sum << ',';
      if (std::isnan(m)) continue;
      sum << m;
      best = std::max(best, m);
      total += m;
      ++count;
    }
    sum << ',';
    if (count) sum << best;
    sum << ',';
    if (count) sum << total / count;
    sum << '\n';
  }
  std::cout << "compare: " << modes.size() * seeds.size() << " runs, summary in " << (out / "summary.csv").string()
            << '\n';
  return any_failed ? kTrainingFault : kOk;
}

int cmd_synth_prices(const std::string& out, int days, std::uint64_t seed, const std::string& start) {
  if (days < 2) throw ConfigError("--days must be at least 2");
  const auto hourly = synthetic_hourly_prices(days, seed);
  if (fs::path(out).has_parent_path()) ensure_dir(fs::path(out).parent_path());
  write_hourly_prices(out, start, hourly);
  std::cout << "wrote " << hourly.size() << " hourly prices to " << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery-electric bus charging scheduler: training, evaluation and exact checks"};
  app.require_subcommand(1);

  std::string config, mode = "hddqn_her", out, instance, checkpoint, start = "2023-01-01";
  std::uint64_t seed = 1;
  int episodes = 0, eval_n = 100, days = 38;
  bool traces = false;
  std::vector<std::string> modes;
  std::vector<std::uint64_t> seeds;

  auto* train = app.add_subcommand("train", "train one mode");
  train->add_option("--config", config, "run configuration file")->required();
  train->add_option("--mode", mode, "hddqn_her, hddqn, ddqn_high, ddqn_original or ddqn_low");
  train->add_option("--seed", seed, "master seed");
  train->add_option("--episodes", episodes, "override the configured episode count");
  train->add_option("--out", out, "output directory");

  auto* eval = app.add_subcommand("evaluate", "greedy roll-outs of a checkpoint on the test span");
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
  eval->add_option("--config", config, "run configuration file")->required();
  eval->add_option("--episodes", eval_n, "number of test episodes");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_flag("--traces", traces, "write one trace file per episode");
  eval->add_option("--out", out, "output directory");

  auto* oracle = app.add_subcommand("oracle-check", "compare flat and hierarchical optima on a tabular instance");
  oracle->add_option("--instance", instance, "instance file")->required();
  oracle->add_option("--out", out, "output directory");

  auto* compare = app.add_subcommand("compare", "train and evaluate several modes and seeds");
  compare->add_option("--config", config, "run configuration file")->required();
  compare->add_option("--modes", modes, "modes to run (default: all)")->delimiter(',');
  compare->add_option("--seeds", seeds, "seeds; the i-th seed drives bus i")->delimiter(',')->required();
  compare->add_option("--episodes", episodes, "override the configured episode count");
  compare->add_option("--out", out, "output directory");

  auto* synth = app.add_subcommand("synth-prices", "write a synthetic hourly price file");
  synth->add_option("--out", out, "price file to write")->required();
  synth->add_option("--days", days, "number of days");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--start", start, "first date, YYYY-MM-DD");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(config, mode, seed, episodes, out);
    if (*eval) return cmd_evaluate(checkpoint, config, eval_n, traces, out, seed);
    if (*oracle) return cmd_oracle_check(instance, out);
    if (*compare) return cmd_compare(config, modes, seeds, episodes, out);
    if (*synth) return cmd_synth_prices(out, days, seed, start);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const TrainingFault& e) {
    std::cerr << "training fault: " << e.what() << '\n';
    return kTrainingFault;
  } catch (const SimulatorFault& e) {
    std::cerr << "simulator fault: " << e.what() << '\n';
    return kTrainingFault;
  } catch (const std::out_of_range& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsage;
}
