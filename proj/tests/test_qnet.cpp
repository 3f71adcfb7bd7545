#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ebsched/errors.hpp"
#include "ebsched/features.hpp"
#include "ebsched/qnet.hpp"

using namespace ebsched;

namespace {

TdBatch random_batch(int features, int outputs, int n, std::mt19937_64& rng, bool with_done = true) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> act(0, outputs - 1);
  TdBatch b;
  b.states.resize(features, n);
  b.next_states.resize(features, n);
  b.rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < features; ++f) {
      b.states(f, i) = g(rng);
      b.next_states(f, i) = g(rng);
    }
    b.actions.push_back(act(rng));
    b.rewards(i) = g(rng);
    b.done.push_back(with_done && i % 3 == 0 ? 1 : 0);
  }
  return b;
}

}  // namespace

TEST_CASE("forward basics") {
  SUBCASE("zero parameters give zero output") {
    Mlp net({3, 4, 2}, 1);
    net.set_flat_params(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params())));
    CHECK(net.forward(Eigen::Vector3d(1, -2, 3)).isZero());
  }
  SUBCASE("identity single layer") {
    Mlp net({3, 3}, 1);
    net.weights()[0] = Eigen::Matrix3d::Identity();
    net.biases()[0].setZero();
    const Eigen::Vector3d x(0.5, -1.5, 2.0);
    CHECK(net.forward(x) == x);
  }
  SUBCASE("seeded init is reproducible") {
    Mlp a({5, 8, 3}, 42), b({5, 8, 3}, 42), c({5, 8, 3}, 43);
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -1, 1);
    CHECK(a.forward(x) == b.forward(x));
    CHECK(a.forward(x) != c.forward(x));
  }
  SUBCASE("dimension mismatch") {
    Mlp net({3, 2}, 1);
    CHECK_THROWS_AS(net.forward(Eigen::VectorXd::Zero(4)), ContractViolation);
  }
  SUBCASE("batch and single evaluation agree") {
    Mlp net({4, 6, 6, 3}, 9);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 5);
    const Eigen::MatrixXd y = net.forward_batch(x);
    for (int i = 0; i < 5; ++i) CHECK((y.col(i) - net.forward(x.col(i))).norm() < 1e-12);
  }
}

TEST_CASE("double-Q target arithmetic") {
  // one input, two outputs; online prefers action 1, target values (-7, -2)
  Mlp online({1, 2}, 1), target({1, 2}, 1);
  online.weights()[0].setZero();
  online.biases()[0] << 0.0, 1.0;
  target.weights()[0].setZero();
  target.biases()[0] << -7.0, -2.0;
  TdBatch b;
  b.states = Eigen::MatrixXd::Zero(1, 2);
  b.next_states = Eigen::MatrixXd::Zero(1, 2);
  b.actions = {0, 0};
  b.rewards.resize(2);
  b.rewards << -0.5, -50.0;
  b.done = {0, 1};
  const Eigen::VectorXd y = double_q_targets(online, target, b);
  CHECK(y(0) == doctest::Approx(-2.5));
  CHECK(y(1) == -50.0);

  SUBCASE("selection comes from the online net, value from the target net") {
    // target's own argmax would be action 1 as well here; flip online so the two disagree
    online.biases()[0] << 1.0, 0.0;
    const Eigen::VectorXd y2 = double_q_targets(online, target, b);
    CHECK(y2(0) == doctest::Approx(-7.5));
  }
  SUBCASE("infeasible next actions are excluded from the argmax") {
    b.next_feasible = {{0}, {}};
    CHECK(double_q_targets(online, target, b)(0) == doctest::Approx(-7.5));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Mlp net({3, 4, 2}, 100 + static_cast<std::uint64_t>(trial));
    TdBatch b = random_batch(3, 2, 6, rng);
    Eigen::VectorXd grad;
    const Eigen::VectorXd targets = b.rewards;
    net.mse_loss(b.states, b.actions, targets, &grad);
    Eigen::VectorXd p = net.flat_params();
    double max_rel = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double h = 1e-6;
      Eigen::VectorXd q = p;
      q(i) += h;
      net.set_flat_params(q);
      const double up = net.mse_loss(b.states, b.actions, targets, nullptr);
      q(i) -= 2 * h;
      net.set_flat_params(q);
      const double down = net.mse_loss(b.states, b.actions, targets, nullptr);
      net.set_flat_params(p);
      const double fd = (up - down) / (2 * h);
      max_rel = std::max(max_rel, std::abs(fd - grad(i)) / std::max(1e-6, std::abs(fd) + std::abs(grad(i))));
    }
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("td_update returns the pre-step loss and keeps parameters finite") {
  std::mt19937_64 rng(3);
  Mlp online({4, 8, 3}, 1), target({4, 8, 3}, 2);
  Adam opt(online.num_params(), 1e-3);
  const TdBatch b = random_batch(4, 3, 10, rng);
  const Eigen::VectorXd y = double_q_targets(online, target, b);
  const double expected = online.mse_loss(b.states, b.actions, y, nullptr);
  CHECK(td_update(online, target, opt, b) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(online.all_finite());

  TdBatch bad = b;
  bad.rewards(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(td_update(online, target, opt, bad), TrainingFault);
  TdBatch empty;
  CHECK_THROWS_AS(td_update(online, target, opt, empty), ContractViolation);
}

TEST_CASE("fixed-batch overfit") {
  std::mt19937_64 rng(5);
  QNetwork q({4, 32, 32, 3}, 1e-3, 17, 1000000);
  TdBatch b = random_batch(4, 3, 10, rng);
  std::fill(b.done.begin(), b.done.end(), 1);
  double loss = 1.0;
  for (int i = 0; i < 10000 && loss >= 1e-6; ++i) loss = q.update(b);
  const Eigen::VectorXd y = double_q_targets(q.online, q.target, b);
  CHECK(q.online.mse_loss(b.states, b.actions, y, nullptr) < 1e-6);
}

TEST_CASE("target sync") {
  Mlp online({3, 5, 2}, 1), target({3, 5, 2}, 2);
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd probe = Eigen::MatrixXd::Random(3, 20);
  sync_target(online, target);
  CHECK(online.forward_batch(probe) == target.forward_batch(probe));
  sync_target(online, target);
  CHECK(online.flat_params() == target.flat_params());

  Adam opt(online.num_params(), 1e-2);
  td_update(online, target, opt, random_batch(3, 2, 4, rng));
  CHECK(online.forward_batch(probe) != target.forward_batch(probe));

  Mlp other({3, 4, 2}, 1);
  CHECK_THROWS_AS(sync_target(online, other), ContractViolation);

  SUBCASE("hard copy on schedule") {
    QNetwork q({3, 5, 2}, 1e-2, 4, 3);
    for (int i = 0; i < 3; ++i) q.update(random_batch(3, 2, 4, rng));
    CHECK(q.online.flat_params() == q.target.flat_params());
    q.update(random_batch(3, 2, 4, rng));
    CHECK(q.online.flat_params() != q.target.flat_params());
  }
}

TEST_CASE("checkpoint round trip and architecture check") {
  std::mt19937_64 rng(2);
  QNetwork q({3, 5, 2}, 1e-3, 4, 7);
  for (int i = 0; i < 5; ++i) q.update(random_batch(3, 2, 4, rng));
  std::stringstream ss;
  save_qnetwork(ss, "low", q);
  const std::string text = ss.str();
  std::stringstream in(text);
  const QNetwork r = load_qnetwork(in, "low", {3, 5, 2});
  CHECK(r.online.flat_params() == q.online.flat_params());
  CHECK(r.target.flat_params() == q.target.flat_params());
  CHECK(r.opt.m == q.opt.m);
  CHECK(r.opt.v == q.opt.v);
  CHECK(r.opt.t == q.opt.t);
  CHECK(r.updates == q.updates);
  std::stringstream in2(text);
  CHECK_THROWS_AS(load_qnetwork(in2, "low", {3, 6, 2}), DataError);
  std::stringstream in3(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_qnetwork(in3, "low", {3, 5, 2}), DataError);
}

TEST_CASE("argmax over a feasible subset") {
  Eigen::VectorXd v(3);
  v << 3, 7, 7;
  CHECK(argmax_over(v, {0, 1, 2}) == 1);
  CHECK(argmax_over(v, {0, 2}) == 2);
  CHECK(argmax_over(v, {}) == 1);
}

TEST_CASE("state encoding") {
  FeatureBounds b;
  b.soc_min = 0;
  b.soc_max = 240;
  b.tau_max = 8;
  b.k_max = 11;
  b.price_min = 0.01;
  b.price_max = 0.04;
  b.w_p = 4;
  EnvState s;
  s.soc = 240;
  s.period_flag = 1;
  s.tau = 4;
  s.period_index = 0;
  s.price_window = {0.01, 0.02, 0.025, 0.04, 0.09};
  const Eigen::VectorXd f = encode_state(s, 120.0, b);
  CHECK(f.size() == feature_size(b, true));
  CHECK(f(0) == 1.0);
  CHECK(f(1) == 1.0);
  CHECK(f(2) == doctest::Approx(0.0));
  CHECK(f(3) == -1.0);
  CHECK(f(4) == -1.0);
  CHECK(f(8) == 1.0);  // clamped
  CHECK(f(9) == doctest::Approx(0.0));
  s.soc = 0;
  CHECK(encode_state(s, std::nullopt, b)(0) == -1.0);
  CHECK(encode_state(s, std::nullopt, b).size() == feature_size(b, false));
  CHECK(encode_state(s, 3.0, b) == encode_state(s, 3.0, b));
  CHECK(encode_state(s, 3.0, b).cwiseAbs().maxCoeff() <= 1.0);
  s.price_window.pop_back();
  CHECK_THROWS_AS(encode_state(s, std::nullopt, b), ContractViolation);
}
