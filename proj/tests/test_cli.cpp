#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ebsched/errors.hpp"
#include "ebsched/kv_config.hpp"
#include "ebsched/run_config.hpp"
#include "helpers.hpp"

using namespace ebsched;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the command-line tool inside `dir`, capturing stdout and stderr together.
Run run_cli(const std::filesystem::path& dir, const std::string& args, const std::string& env = "") {
  const auto log = dir / "cli_output.txt";
  const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + std::string(EBSCHED_CLI) + "' " + args +
                          " > '" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  std::stringstream buf;
  buf << in.rdbuf();
  r.out = buf.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

std::string smoke_cfg() { return (testutil::source_dir() / "configs/smoke.cfg").string(); }

std::string instance(const std::string& name) { return (testutil::source_dir() / "data/instances" / name).string(); }

}  // namespace

TEST_CASE("train writes a manifest, a log and a checkpoint") {
  const auto dir = testutil::temp_dir("cli_train");
  const Run r = run_cli(dir, "train --mode hddqn_her --config " + smoke_cfg() + " --seed 1 --out a");
  REQUIRE(r.code == 0);
  for (const char* f : {"manifest.json", "config.resolved.cfg", "training_log.csv", "policy.ckpt"}) {
    CHECK(std::filesystem::exists(dir / "a" / f));
  }
  const std::string log = slurp(dir / "a/training_log.csv");
  CHECK(count_lines(log) == 2);
  CHECK(log.rfind("episode,phase,eps_low,eps_high,low_loss,high_loss,eval_mean,eval_stderr\n", 0) == 0);
  const std::string manifest = slurp(dir / "a/manifest.json");
  CHECK(manifest.find("\"version\"") != std::string::npos);
  CHECK(manifest.find("fnv1a64:") != std::string::npos);

  SUBCASE("a rerun and a run from the resolved config reproduce the log") {
    REQUIRE(run_cli(dir, "train --mode hddqn_her --config " + smoke_cfg() + " --seed 1 --out b").code == 0);
    CHECK(slurp(dir / "b/training_log.csv") == log);
    REQUIRE(run_cli(dir, "train --mode hddqn_her --config a/config.resolved.cfg --out c").code == 0);
    CHECK(slurp(dir / "c/training_log.csv") == log);
    CHECK(slurp(dir / "c/policy.ckpt") == slurp(dir / "a/policy.ckpt"));
  }
  SUBCASE("evaluate the checkpoint") {
    const Run e = run_cli(dir, "evaluate --checkpoint a/policy.ckpt --config " + smoke_cfg() +
                                   " --episodes 3 --traces --out ev");
    REQUIRE(e.code == 0);
    CHECK(count_lines(slurp(dir / "ev/evaluation.csv")) == 4);
    CHECK(std::filesystem::exists(dir / "ev/summary.csv"));
    int traces = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "ev")) {
      if (entry.path().filename().string().rfind("trace_", 0) == 0) ++traces;
    }
    CHECK(traces == 3);
    CHECK(run_cli(dir, "evaluate --checkpoint a/policy.ckpt --config " + smoke_cfg() + " --episodes 0").code == 2);
  }
  SUBCASE("evaluate rejects a checkpoint of another architecture") {
    std::ofstream(dir / "wide.cfg") << "price_file = " << (testutil::source_dir() / "data/prices_synthetic.csv").string()
                                    << "\nhidden = 8\n";
    const Run e = run_cli(dir, "evaluate --checkpoint a/policy.ckpt --config wide.cfg --episodes 2");
    CHECK(e.code == 3);
  }
}

TEST_CASE("usage and data errors have their own exit codes") {
  const auto dir = testutil::temp_dir("cli_errors");
  const Run mode = run_cli(dir, "train --mode nope --config " + smoke_cfg());
  CHECK(mode.code == 2);
  CHECK(mode.out.find("nope") != std::string::npos);

  std::ofstream(dir / "bad.cfg") << "price_file = " << (testutil::source_dir() / "data/prices_synthetic.csv").string()
                                 << "\nbogus_key = 3\n";
  const Run key = run_cli(dir, "train --config bad.cfg");
  CHECK(key.code == 2);
  CHECK(key.out.find("bogus_key") != std::string::npos);

  std::ofstream(dir / "nodata.cfg") << "price_file = missing.csv\n";
  CHECK(run_cli(dir, "train --config nodata.cfg").code == 3);
  CHECK(run_cli(dir, "train --config nowhere.cfg").code == 3);
  CHECK(run_cli(dir, "frobnicate").code == 2);
}

TEST_CASE("oracle check verdicts map to exit codes") {
  const auto dir = testutil::temp_dir("cli_oracle");
  const Run pass = run_cli(dir, "oracle-check --instance " + instance("tiny.inst") + " --out o");
  CHECK(pass.code == 0);
  CHECK(pass.out.rfind("PASS tiny", 0) == 0);
  CHECK(std::filesystem::exists(dir / "o/oracle_report.csv"));

  const Run coarse = run_cli(dir, "oracle-check --instance " + instance("coarse.inst") + " --out o2");
  CHECK(coarse.code == 6);
  CHECK(coarse.out.rfind("INCONCLUSIVE", 0) == 0);

  CHECK(run_cli(dir, "oracle-check --instance none.inst --out o3").code == 3);
  std::ofstream(dir / "broken.inst") << slurp(instance("tiny.inst")) << "surprise = 1\n";
  const Run broken = run_cli(dir, "oracle-check --instance broken.inst --out o4");
  CHECK(broken.code == 3);
  CHECK(broken.out.find("broken.inst:" + std::to_string(count_lines(slurp(instance("tiny.inst"))) + 1)) !=
        std::string::npos);
}

TEST_CASE("compare emits per-run rows and a summary table") {
  const auto dir = testutil::temp_dir("cli_compare");
  const Run r = run_cli(dir, "compare --config " + smoke_cfg() + " --modes hddqn_her,ddqn_low --seeds 1,2 --out cmp");
  REQUIRE(r.code == 0);
  const std::string rows = slurp(dir / "cmp/compare.csv");
  CHECK(rows.rfind("mode,seed,bus,status,mean,stderr,terminal_count\n", 0) == 0);
  CHECK(count_lines(rows) == 5);
  const std::string summary = slurp(dir / "cmp/summary.csv");
  CHECK(summary.rfind("mode,EB1,EB2,max,average\n", 0) == 0);
  CHECK(count_lines(summary) == 3);
  CHECK(run_cli(dir, "compare --config " + smoke_cfg() + " --modes hddqn_her,dqn --seeds 1 --out x").code == 2);
}

TEST_CASE("default output root comes from the environment") {
  const auto dir = testutil::temp_dir("cli_env");
  const Run r = run_cli(dir, "train --config " + smoke_cfg() + " --mode ddqn_high --seed 3", "EBSCHED_OUT=root");
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "root/ddqn_high-seed3/training_log.csv"));
}

TEST_CASE("synthetic price export") {
  const auto dir = testutil::temp_dir("cli_synth");
  REQUIRE(run_cli(dir, "synth-prices --out p.csv --days 3 --seed 4").code == 0);
  const std::string text = slurp(dir / "p.csv");
  CHECK(count_lines(text) == 3 * 24 + 1);
  CHECK(text.rfind("timestamp,price_usd_per_kwh\n", 0) == 0);
}

TEST_CASE("run configuration") {
  const auto dir = testutil::temp_dir("run_config");
  const RunConfig rc = load_run_config(smoke_cfg());
  CHECK(rc.train.episodes == 10);
  CHECK(rc.train.hidden == std::vector<int>{16, 16});
  CHECK(rc.split_day == 31);
  CHECK(rc.env.discharge.mean_kw == doctest::Approx(-90.0));
  CHECK(std::filesystem::path(rc.price_file).is_absolute());
  const Problem p = build_problem(rc);
  CHECK(p.train->num_days() == 31);
  CHECK(p.test->num_days() == 7);
  CHECK(for_bus(rc, 2).schedule.bus_offset_minutes == rc.schedule.bus_offset_minutes + 60);
  CHECK(file_digest(smoke_cfg()) == file_digest(smoke_cfg()));
  CHECK(file_digest(smoke_cfg()).rfind("fnv1a64:", 0) == 0);

  SUBCASE("the snapshot parses back to the same settings") {
    std::ofstream out(dir / "snap.cfg");
    for (const auto& [k, v] : config_snapshot(rc)) out << k << " = " << v << "\n";
    out.close();
    const RunConfig back = load_run_config(dir / "snap.cfg");
    CHECK(config_snapshot(back) == config_snapshot(rc));
  }
  SUBCASE("bad values") {
    std::ofstream(dir / "neg.cfg") << "price_file = x.csv\nepisodes = -3\n";
    CHECK_THROWS_AS(load_run_config(dir / "neg.cfg"), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir / "absent.cfg"), DataError);
  }
}
