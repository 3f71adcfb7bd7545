#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ebsched/agents.hpp"
#include "ebsched/kv_config.hpp"
#include "ebsched/trainer.hpp"

namespace ebsched {

struct RunConfig {
  ScheduleConfig schedule;
  EnvConfig env;
  TrainConfig train;
  std::filesystem::path price_file;
  int split_day = 31;
  int test_episodes = 100;
  double trip_energy_fraction = 0.25;
  std::filesystem::path source;
};

// Unknown keys raise ConfigError naming the file and line. Relative price
// paths resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const KeyValueFile& kv, const std::filesystem::path& base_dir);

// Effective value of every key, in a form load_run_config reads back.
std::vector<std::pair<std::string, std::string>> config_snapshot(const RunConfig& rc);

// Loads and splits the price file.
Problem build_problem(const RunConfig& rc);

// Bus `bus` departs `bus * 30` minutes after the first bus.
RunConfig for_bus(const RunConfig& rc, int bus);

std::string file_digest(const std::filesystem::path& path);
std::string version_string();

struct ManifestInfo {
  std::string command;
  std::string mode;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> data_files;
  std::vector<std::pair<std::string, std::string>> extra;
};

void write_manifest(const std::filesystem::path& path, const RunConfig& rc, const ManifestInfo& info);

}  // namespace ebsched
