#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <unordered_set>
#include <vector>

#include "ebsched/env.hpp"
#include "ebsched/errors.hpp"

namespace ebsched {

struct LowTransition {
  EnvState state;
  double option = 0.0;  // goal kWh shared by state and next_state
  int action_index = 0;
  double reward = 0.0;
  EnvState next_state;
  bool done = false;
  std::int64_t episode_id = 0;
  std::int64_t option_instance_id = 0;
  double target_penalty = 0.0;    // boundary penalty magnitude folded into reward
  bool hindsight = false;
  std::vector<int> next_feasible;  // admissible actions at next_state when not done
};

struct HighTransition {
  EnvState start_state;
  int option_index = 0;           // network output slot for relabeled_option
  double relabeled_option = 0.0;  // kWh
  double reward = 0.0;
  EnvState next_state;
  bool done = false;
  std::int64_t episode_id = 0;
  std::vector<int> next_feasible;  // admissible options at next_state when not done
};

// Bounded FIFO store with uniform sampling without replacement.
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("replay capacity must be positive");
  }

  void push(T t) {
    if (records_.size() == capacity_) records_.pop_front();
    records_.push_back(std::move(t));
  }

  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return records_.empty(); }
  const std::deque<T>& records() const { return records_; }
  const T& operator[](std::size_t i) const { return records_[i]; }
  void clear() { records_.clear(); }

  // Empty optional when the buffer holds fewer than batch_size records.
  std::optional<std::vector<const T*>> sample(std::size_t batch_size, Rng& rng) const {
    if (batch_size == 0 || records_.size() < batch_size) return std::nullopt;
    const std::size_t n = records_.size();
    std::vector<const T*> out;
    out.reserve(batch_size);
    // Floyd's subset sampling: exact uniform without replacement.
    std::unordered_set<std::size_t> chosen;
    std::vector<std::size_t> order;
    order.reserve(batch_size);
    for (std::size_t j = n - batch_size; j < n; ++j) {
      std::uniform_int_distribution<std::size_t> pick(0, j);
      std::size_t t = pick(rng);
      if (chosen.count(t)) t = j;
      chosen.insert(t);
      order.push_back(t);
    }
    for (std::size_t i : order) out.push_back(&records_[i]);
    return out;
  }

  template <class Pred>
  std::size_t erase_if(Pred pred) {
    const std::size_t before = records_.size();
    std::erase_if(records_, pred);
    return before - records_.size();
  }

 private:
  std::size_t capacity_;
  std::deque<T> records_;
};

template <class T>
std::optional<std::vector<const T*>> sample_minibatch(const ReplayBuffer<T>& buffer, std::size_t batch_size,
                                                      Rng& rng) {
  return buffer.sample(batch_size, rng);
}

// Holds goal-free copies of one charging period's low transitions until the
// achieved end soc is known.
class HindsightStager {
 public:
  void stage(const LowTransition& t);
  // Pushes relabeled copies when achieved differs from prescribed; returns the
  // number pushed. Staging is cleared either way.
  std::size_t finalize(ReplayBuffer<LowTransition>& buffer, double achieved, double prescribed);
  void discard() { staged_.clear(); }
  std::size_t size() const { return staged_.size(); }
  bool empty() const { return staged_.empty(); }
  const std::vector<LowTransition>& staged() const { return staged_; }

 private:
  std::vector<LowTransition> staged_;
};

// Removes every record (original or hindsight) of one option instance and
// drops anything still staged for it. Returns the number removed from the buffer.
std::size_t delete_option_transitions(ReplayBuffer<LowTransition>& buffer, HindsightStager* stager,
                                      std::int64_t episode_id, std::int64_t option_instance_id);

void dump_low_buffer(std::ostream& out, const ReplayBuffer<LowTransition>& buffer);
void dump_high_buffer(std::ostream& out, const ReplayBuffer<HighTransition>& buffer);

}  // namespace ebsched
