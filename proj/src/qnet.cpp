#include "ebsched/qnet.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "ebsched/errors.hpp"

namespace ebsched {

Mlp::Mlp(std::vector<int> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw ContractViolation("a net needs at least input and output sizes");
  for (int s : sizes_) {
    if (s <= 0) throw ContractViolation("layer sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 1; l < sizes_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l - 1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd w(sizes_[l], sizes_[l - 1]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    }
    Eigen::VectorXd b(sizes_[l]);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = u(rng);
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

void Mlp::check_input(Eigen::Index rows) const {
  if (sizes_.empty()) throw ContractViolation("net is not initialized");
  if (rows != sizes_.front()) {
    throw ContractViolation("feature length " + std::to_string(rows) + " does not match input size " +
                            std::to_string(sizes_.front()));
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  check_input(x.size());
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::VectorXd z = weights_[l] * a + biases_[l];
    if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  check_input(x.rows());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

double Mlp::mse_loss(const Eigen::MatrixXd& x, const std::vector<int>& actions, const Eigen::VectorXd& targets,
                     Eigen::VectorXd* grad) const {
  check_input(x.rows());
  const Eigen::Index n = x.cols();
  if (n == 0 || static_cast<Eigen::Index>(actions.size()) != n || targets.size() != n) {
    throw ContractViolation("minibatch shapes are inconsistent");
  }
  const std::size_t layers = weights_.size();
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[l+1] = output of layer l
  acts.reserve(layers + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = weights_[l] * acts.back();
    z.colwise() += biases_[l];
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  const Eigen::MatrixXd& q = acts.back();
  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(q.rows(), n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= q.rows()) throw ContractViolation("action index outside the output layer");
    const double err = targets(i) - q(a, i);
    loss += err * err;
    dz(a, i) = -2.0 * err / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!grad) return loss;

  grad->resize(static_cast<Eigen::Index>(num_params()));
  std::vector<Eigen::MatrixXd> dw(layers);
  std::vector<Eigen::VectorXd> db(layers);
  for (std::size_t l = layers; l-- > 0;) {
    dw[l] = dz * acts[l].transpose();
    db[l] = dz.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd da = weights_[l].transpose() * dz;
      dz = (acts[l].array() > 0.0).select(da, 0.0);
    }
  }
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    for (Eigen::Index r = 0; r < dw[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < dw[l].cols(); ++c) (*grad)(off++) = dw[l](r, c);
    }
    for (Eigen::Index r = 0; r < db[l].size(); ++r) (*grad)(off++) = db[l](r);
  }
  return loss;
}

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

Eigen::VectorXd Mlp::flat_params() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(num_params()));
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) p(off++) = weights_[l](r, c);
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) p(off++) = biases_[l](r);
  }
  return p;
}

void Mlp::set_flat_params(const Eigen::VectorXd& p) {
  if (p.size() != static_cast<Eigen::Index>(num_params())) throw ContractViolation("parameter count mismatch");
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = p(off++);
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l](r) = p(off++);
  }
}

bool Mlp::all_finite() const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
  }
  return true;
}

Adam::Adam(std::size_t num_params, double learning_rate_, double beta1_, double beta2_, double epsilon_)
    : learning_rate(learning_rate_),
      beta1(beta1_),
      beta2(beta2_),
      epsilon(epsilon_),
      m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_params))),
      v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_params))) {}

void Adam::step(Mlp& net, const Eigen::VectorXd& grad) {
  if (grad.size() != m.size()) throw ContractViolation("optimizer state does not match the net");
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  Eigen::VectorXd p = net.flat_params();
  p.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
  net.set_flat_params(p);
}

int argmax_over(const Eigen::VectorXd& values, const std::vector<int>& feasible) {
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  if (feasible.empty()) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (best < 0 || values(i) > best_v) {
        best = static_cast<int>(i);
        best_v = values(i);
      }
    }
  } else {
    for (int i : feasible) {
      if (i < 0 || i >= values.size()) throw ContractViolation("feasible index outside the output layer");
      if (best < 0 || values(i) > best_v || (values(i) == best_v && i < best)) {
        best = i;
        best_v = values(i);
      }
    }
  }
  if (best < 0) throw ContractViolation("argmax over an empty set");
  return best;
}

Eigen::VectorXd double_q_targets(const Mlp& online, const Mlp& target, const TdBatch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (batch.rewards.size() != n || static_cast<Eigen::Index>(batch.done.size()) != n ||
      batch.next_states.cols() != n) {
    throw ContractViolation("minibatch shapes are inconsistent");
  }
  if (!batch.next_feasible.empty() && static_cast<Eigen::Index>(batch.next_feasible.size()) != n) {
    throw ContractViolation("next_feasible must be empty or one entry per record");
  }
  Eigen::VectorXd y = batch.rewards;
  bool any_bootstrap = false;
  for (char d : batch.done) any_bootstrap = any_bootstrap || !d;
  if (!any_bootstrap) return y;
  const Eigen::MatrixXd q_on = online.forward_batch(batch.next_states);
  const Eigen::MatrixXd q_tg = target.forward_batch(batch.next_states);
  static const std::vector<int> kAll;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (batch.done[static_cast<std::size_t>(i)]) continue;
    const auto& feas = batch.next_feasible.empty() ? kAll : batch.next_feasible[static_cast<std::size_t>(i)];
    const int a = argmax_over(q_on.col(i), feas);
    y(i) += batch.discount * q_tg(a, i);
  }
  return y;
}

double td_update(Mlp& online, const Mlp& target, Adam& opt, const TdBatch& batch) {
  if (batch.size() == 0) throw ContractViolation("empty minibatch");
  const Eigen::VectorXd y = double_q_targets(online, target, batch);
  Eigen::VectorXd grad;
  const double loss = online.mse_loss(batch.states, batch.actions, y, &grad);
  if (!std::isfinite(loss) || !grad.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite TD loss (" << loss << ") after " << opt.t << " optimizer steps; max |target| = "
        << y.cwiseAbs().maxCoeff();
    throw TrainingFault(msg.str());
  }
  opt.step(online, grad);
  if (!online.all_finite()) throw TrainingFault("non-finite parameters after optimizer step " + std::to_string(opt.t));
  return loss;
}

void sync_target(const Mlp& online, Mlp& target) {
  if (!target.layer_sizes().empty() && !online.same_architecture(target)) {
    throw ContractViolation("target net architecture differs from the online net");
  }
  target = online;
}

QNetwork::QNetwork(std::vector<int> layer_sizes, double learning_rate, std::uint64_t seed, int sync_every_)
    : online(std::move(layer_sizes), seed), sync_every(sync_every_) {
  target = online;
  opt = Adam(online.num_params(), learning_rate);
}

double QNetwork::update(const TdBatch& batch) {
  const double loss = td_update(online, target, opt, batch);
  ++updates;
  if (sync_every > 0 && updates % sync_every == 0) sync_target(online, target);
  return loss;
}

namespace {

void write_vec(std::ostream& out, const char* tag, const Eigen::VectorXd& v) {
  out << tag << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << v(i);
  out << '\n';
}

Eigen::VectorXd read_vec(std::istream& in, const std::string& tag, Eigen::Index expected) {
  std::string got;
  Eigen::Index n = -1;
  if (!(in >> got >> n) || got != tag) throw DataError("checkpoint: expected '" + tag + "' block");
  if (n != expected) {
    throw DataError("checkpoint: '" + tag + "' has " + std::to_string(n) + " values, expected " +
                    std::to_string(expected));
  }
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(in >> v(i))) throw DataError("checkpoint: truncated '" + tag + "' block");
  }
  return v;
}

}  // namespace

void save_qnetwork(std::ostream& out, const std::string& name, const QNetwork& q) {
  const auto old_prec = out.precision(std::numeric_limits<double>::max_digits10);
  out << "qnet " << name << '\n';
  out << "layers " << q.online.layer_sizes().size();
  for (int s : q.online.layer_sizes()) out << ' ' << s;
  out << '\n';
  out << "updates " << q.updates << " adam_t " << q.opt.t << " lr " << q.opt.learning_rate << " sync_every "
      << q.sync_every << '\n';
  write_vec(out, "online", q.online.flat_params());
  write_vec(out, "target", q.target.flat_params());
  write_vec(out, "adam_m", q.opt.m);
  write_vec(out, "adam_v", q.opt.v);
  out.precision(old_prec);
}

QNetwork load_qnetwork(std::istream& in, const std::string& name, const std::vector<int>& expected_sizes) {
  std::string tag, got_name;
  if (!(in >> tag >> got_name) || tag != "qnet") throw DataError("checkpoint: expected a 'qnet' block");
  if (got_name != name) throw DataError("checkpoint: expected net '" + name + "', found '" + got_name + "'");
  std::size_t count = 0;
  if (!(in >> tag >> count) || tag != "layers") throw DataError("checkpoint: missing layer sizes");
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    if (!(in >> s)) throw DataError("checkpoint: truncated layer sizes");
  }
  if (sizes != expected_sizes) {
    std::string a, b;
    for (int s : sizes) a += std::to_string(s) + " ";
    for (int s : expected_sizes) b += std::to_string(s) + " ";
    throw DataError("checkpoint architecture mismatch for '" + name + "': file has [ " + a + "], config expects [ " +
                    b + "]");
  }
  QNetwork q;
  std::string t1, t2, t3, t4;
  double lr = 0.0;
  if (!(in >> t1 >> q.updates >> t2 >> q.opt.t >> t3 >> lr >> t4 >> q.sync_every) || t1 != "updates" ||
      t2 != "adam_t" || t3 != "lr" || t4 != "sync_every") {
    throw DataError("checkpoint: malformed counters for '" + name + "'");
  }
  q.online = Mlp(sizes, 0);
  q.target = q.online;
  const auto n = static_cast<Eigen::Index>(q.online.num_params());
  q.online.set_flat_params(read_vec(in, "online", n));
  q.target.set_flat_params(read_vec(in, "target", n));
  q.opt.learning_rate = lr;
  q.opt.m = read_vec(in, "adam_m", n);
  q.opt.v = read_vec(in, "adam_v", n);
  return q;
}

}  // namespace ebsched
