#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ebsched/prices.hpp"
#include "ebsched/schedule.hpp"
#include "ebsched/trainer.hpp"

namespace testutil {

inline std::filesystem::path source_dir() { return EBSCHED_SOURCE_DIR; }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ebsched_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Full-day timetable and synthetic prices, split 6 train days / 2 test days.
inline ebsched::Problem small_problem(std::uint64_t price_seed = 5, ebsched::EnvConfig cfg = {}) {
  const auto hourly = ebsched::synthetic_hourly_prices(8, price_seed);
  const auto series = ebsched::PriceSeries::from_hourly(hourly, 10, "test");
  auto [train, test] = ebsched::split_train_test(series, 6);
  ebsched::Problem p;
  p.env = std::make_shared<const ebsched::EnvConfig>(cfg);
  p.schedule = std::make_shared<const ebsched::Schedule>(ebsched::build_schedule(ebsched::ScheduleConfig{}));
  p.train = std::make_shared<const ebsched::PriceSeries>(train);
  p.test = std::make_shared<const ebsched::PriceSeries>(test);
  return p;
}

inline ebsched::TrainConfig quick_train_config(int episodes) {
  ebsched::TrainConfig tc;
  tc.episodes = episodes;
  tc.phase_threshold = episodes / 2;
  tc.hidden = {16, 16};
  tc.hidden_ddqn_low = {16, 16};
  tc.batch_high = 8;
  tc.batch_low = 16;
  tc.eval_every = episodes;
  tc.eval_episodes = 2;
  return tc;
}

inline std::vector<double> uniform_pmf(std::vector<int> support) {
  int hi = 0;
  for (int x : support) hi = std::max(hi, x);
  std::vector<double> pmf(static_cast<std::size_t>(hi) + 1, 0.0);
  for (int x : support) pmf[static_cast<std::size_t>(x)] = 1.0 / static_cast<double>(support.size());
  return pmf;
}

}  // namespace testutil
