#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "ebsched/agents.hpp"
#include "ebsched/replay.hpp"

namespace ebsched {

// Everything an episode loop needs: env configuration, timetable, and the two price spans.
struct Problem {
  std::shared_ptr<const EnvConfig> env;
  std::shared_ptr<const Schedule> schedule;
  std::shared_ptr<const PriceSeries> train;
  std::shared_ptr<const PriceSeries> test;
};

struct LogRow {
  int episode = 0;
  int phase = 0;  // 1 or 2 for hddqn_her, 0 otherwise
  double eps_low = 0.0;
  double eps_high = 0.0;
  double low_loss = 0.0;   // mean over updates since the previous row, NaN if none
  double high_loss = 0.0;
  double eval_mean = 0.0;
  double eval_stderr = 0.0;
};

struct TraceRow {
  int t = 0;
  int clock = 0;  // minutes after the day origin
  int B = 0;
  int k = 0;
  int tau = 0;
  double soc = 0.0;
  double price = 0.0;
  double power = 0.0;
  double reward = 0.0;
  double option = 0.0;  // NaN when the mode has no charging target
  double target_penalty = 0.0;
  double range_anxiety = 0.0;
};

struct EpisodeResult {
  double total_return = 0.0;
  bool terminal = false;
  int steps = 0;
  std::vector<TraceRow> trace;
};

struct EvalSummary {
  double mean = 0.0;
  double stderr_ = 0.0;
  int terminal_count = 0;
  std::vector<EpisodeResult> episodes;
};

// Observation points used by tests to assert learning-loop invariants.
struct TrainHooks {
  std::function<void(const EnvState&, double option, const std::vector<int>& feasible)> on_prescribe;
  std::function<void(const ReplayBuffer<LowTransition>&, std::int64_t episode, std::int64_t instance,
                     double achieved, double prescribed)>
      on_charging_end;
  std::function<void(const HighTransition&, double achieved, bool counterfactual)> on_high_store;
  std::function<void(const EnvState& before, const StepOutcome&)> on_step;
};

struct TrainStats {
  std::int64_t env_steps = 0;
  std::int64_t low_transitions = 0;
  std::int64_t hindsight_records = 0;
  std::int64_t deleted_records = 0;
  std::int64_t high_transitions = 0;
  std::int64_t counterfactual_rewards = 0;
  std::int64_t terminal_episodes = 0;
  std::int64_t low_updates = 0;
  std::int64_t high_updates = 0;
};

struct TrainResult {
  PolicyBundle policy;
  std::vector<LogRow> log;
  TrainStats stats;
};

using LogCallback = std::function<void(const LogRow&)>;

TrainResult train(Mode mode, const TrainConfig& tc, const Problem& problem, const TrainHooks* hooks = nullptr,
                  const LogCallback& on_log = {});
TrainResult train_hddqn_her(const TrainConfig& tc, const Problem& problem, const TrainHooks* hooks = nullptr,
                            const LogCallback& on_log = {});
TrainResult train_baseline(Mode mode, const TrainConfig& tc, const Problem& problem,
                           const TrainHooks* hooks = nullptr, const LogCallback& on_log = {});

// Greedy choices of a trained bundle.
int greedy_option(const PolicyBundle& policy, const EnvState& state, const EnvConfig& cfg);
double option_value_kwh(const PolicyBundle& policy, int option_index, const EnvConfig& cfg);
ActionChoice greedy_action(const PolicyBundle& policy, const EnvState& state, double option_kwh,
                           const EnvConfig& cfg);

// Greedy roll-outs on the test span; episode i uses day i mod days.
EvalSummary evaluate(const PolicyBundle& policy, const Problem& problem, const TrainConfig& tc, int n_episodes,
                     std::uint64_t seed, bool keep_traces);

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows);
void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows);

void save_policy(const std::filesystem::path& path, const PolicyBundle& policy);
// Rejects checkpoints whose mode or layer sizes differ from `expected`.
PolicyBundle load_policy(const std::filesystem::path& path, const PolicyBundle& expected);
Mode checkpoint_mode(const std::filesystem::path& path);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ebsched
