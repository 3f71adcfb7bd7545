#include "ebsched/replay.hpp"

#include <cmath>

namespace ebsched {

void HindsightStager::stage(const LowTransition& t) {
  if (!staged_.empty() && (staged_.front().episode_id != t.episode_id ||
                           staged_.front().option_instance_id != t.option_instance_id)) {
    throw ContractViolation("staging mixes transitions from different option instances");
  }
  LowTransition copy = t;
  copy.hindsight = true;
  copy.option = std::nan("");  // goal slot filled in at finalize
  staged_.push_back(std::move(copy));
}

std::size_t HindsightStager::finalize(ReplayBuffer<LowTransition>& buffer, double achieved, double prescribed) {
  if (staged_.empty()) throw ContractViolation("hindsight finalize without staged transitions");
  if (!staged_.back().done) throw ContractViolation("hindsight finalize before the charging period ended");
  std::size_t pushed = 0;
  if (std::abs(achieved - prescribed) > kSocTolerance) {
    for (auto& t : staged_) {
      t.option = achieved;
      if (t.done) {
        t.reward += t.target_penalty;
        t.target_penalty = 0.0;
      }
      buffer.push(std::move(t));
      ++pushed;
    }
  }
  staged_.clear();
  return pushed;
}

std::size_t delete_option_transitions(ReplayBuffer<LowTransition>& buffer, HindsightStager* stager,
                                      std::int64_t episode_id, std::int64_t option_instance_id) {
  if (stager && !stager->empty() && stager->staged().front().episode_id == episode_id &&
      stager->staged().front().option_instance_id == option_instance_id) {
    stager->discard();
  }
  return buffer.erase_if([&](const LowTransition& t) {
    return t.episode_id == episode_id && t.option_instance_id == option_instance_id;
  });
}

namespace {

void write_state(std::ostream& out, const EnvState& s) {
  out << s.soc << ',' << s.period_flag << ',' << s.tau << ',' << s.period_index << ',' << s.step_index;
}

}  // namespace

void dump_low_buffer(std::ostream& out, const ReplayBuffer<LowTransition>& buffer) {
  out << "soc,B,tau,k,t,option,action_index,reward,next_soc,next_B,next_tau,next_k,next_t,done,episode_id,"
         "option_instance_id,hindsight\n";
  for (const auto& r : buffer.records()) {
    write_state(out, r.state);
    out << ',' << r.option << ',' << r.action_index << ',' << r.reward << ',';
    write_state(out, r.next_state);
    out << ',' << r.done << ',' << r.episode_id << ',' << r.option_instance_id << ',' << r.hindsight << '\n';
  }
}

void dump_high_buffer(std::ostream& out, const ReplayBuffer<HighTransition>& buffer) {
  out << "soc,B,tau,k,t,relabeled_option,reward,next_soc,next_B,next_tau,next_k,next_t,done,episode_id\n";
  for (const auto& r : buffer.records()) {
    write_state(out, r.start_state);
    out << ',' << r.relabeled_option << ',' << r.reward << ',';
    write_state(out, r.next_state);
    out << ',' << r.done << ',' << r.episode_id << '\n';
  }
}

}  // namespace ebsched
