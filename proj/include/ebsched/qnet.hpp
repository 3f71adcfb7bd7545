#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ebsched {

// Fully connected net: ReLU hidden layers, linear output. Samples are columns.
class Mlp {
 public:
  Mlp() = default;
  // layer_sizes = {inputs, hidden..., outputs}; fan-in uniform init from `seed`.
  Mlp(std::vector<int> layer_sizes, std::uint64_t seed);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  // Loss (1/N) sum_i (y_i - Q(x_i, a_i))^2 and, if grad != nullptr, its gradient
  // in flat_params() order.
  double mse_loss(const Eigen::MatrixXd& x, const std::vector<int>& actions, const Eigen::VectorXd& targets,
                  Eigen::VectorXd* grad) const;

  std::size_t num_params() const;
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& p);
  bool all_finite() const;
  bool same_architecture(const Mlp& other) const { return sizes_ == other.sizes_; }

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

 private:
  void check_input(Eigen::Index rows) const;
  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;  // out x in
  std::vector<Eigen::VectorXd> biases_;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t num_params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(Mlp& net, const Eigen::VectorXd& grad);

  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t t = 0;
  Eigen::VectorXd m, v;
};

// One minibatch for a double-Q update. `next_feasible[i]` lists the admissible
// next-state actions; empty means all outputs are admissible.
struct TdBatch {
  Eigen::MatrixXd states;       // features x N
  std::vector<int> actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;  // features x N
  std::vector<char> done;
  std::vector<std::vector<int>> next_feasible;
  double discount = 1.0;

  std::size_t size() const { return actions.size(); }
};

// y_i = r_i + discount * Q_target(s'_i, argmax_{a feasible} Q_online(s'_i, a)), no bootstrap when done.
Eigen::VectorXd double_q_targets(const Mlp& online, const Mlp& target, const TdBatch& batch);

// One Adam step on the MSE to double-Q targets; returns the loss before the step.
double td_update(Mlp& online, const Mlp& target, Adam& opt, const TdBatch& batch);

void sync_target(const Mlp& online, Mlp& target);

// Online/target pair with its optimizer and a hard-sync schedule.
struct QNetwork {
  QNetwork() = default;
  QNetwork(std::vector<int> layer_sizes, double learning_rate, std::uint64_t seed, int sync_every = 200);

  double update(const TdBatch& batch);
  Eigen::VectorXd values(const Eigen::VectorXd& x) const { return online.forward(x); }

  Mlp online;
  Mlp target;
  Adam opt;
  int sync_every = 200;
  std::int64_t updates = 0;
};

// Text checkpoint: layer sizes, row-major parameters, optimizer moments, update counter.
void save_qnetwork(std::ostream& out, const std::string& name, const QNetwork& q);
// Throws DataError on malformed input or when layer sizes differ from `expected_sizes`.
QNetwork load_qnetwork(std::istream& in, const std::string& name, const std::vector<int>& expected_sizes);

int argmax_over(const Eigen::VectorXd& values, const std::vector<int>& feasible);

}  // namespace ebsched
