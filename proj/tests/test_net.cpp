#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dvrl/net.hpp"

using dvrl::Adam;
using dvrl::Mlp;
using dvrl::MlpGrads;

namespace {

// Scalar loss for the checks: weighted sum of outputs, so dL/dy is a fixed
// matrix and finite differences are cheap.
double loss_of(const Mlp& net, const Eigen::MatrixXd& x,
               const Eigen::MatrixXd& w_out) {
  return (net.forward(x).array() * w_out.array()).sum();
}

double fd_gradient(Mlp net, std::size_t layer, int i, int j, bool bias,
                   const Eigen::MatrixXd& x, const Eigen::MatrixXd& w_out) {
  const double h = 1e-6;
  double& ref = bias ? net.biases()[layer][i] : net.weights()[layer](i, j);
  const double orig = ref;
  ref = orig + h;
  const double up = loss_of(net, x, w_out);
  ref = orig - h;
  const double dn = loss_of(net, x, w_out);
  return (up - dn) / (2 * h);
}

}  // namespace

TEST_CASE("forward shapes and output nonlinearity") {
  std::mt19937_64 rng(1);
  const Mlp tanh_net = Mlp::create({4, 8, 3}, Mlp::Output::Tanh, rng);
  const Mlp lin_net = Mlp::create({4, 8, 1}, Mlp::Output::Linear, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 7);
  const Eigen::MatrixXd y = tanh_net.forward(x);
  REQUIRE(y.rows() == 3);
  REQUIRE(y.cols() == 7);
  REQUIRE(y.cwiseAbs().maxCoeff() < 1.0);
  REQUIRE(lin_net.forward(x).rows() == 1);
  REQUIRE_THROWS_AS(tanh_net.forward(Eigen::MatrixXd::Random(5, 2)),
                    std::invalid_argument);
  Eigen::MatrixXd bad = x;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(tanh_net.forward(bad), std::invalid_argument);
}

TEST_CASE("forward1 equals single-column forward") {
  std::mt19937_64 rng(2);
  const Mlp net = Mlp::create({6, 16, 16, 4}, Mlp::Output::Tanh, rng);
  const Eigen::VectorXd x = Eigen::VectorXd::Random(6);
  REQUIRE((net.forward1(x) - net.forward(Eigen::MatrixXd(x)).col(0)).norm() ==
          0.0);
}

TEST_CASE("backward matches finite differences") {
  std::mt19937_64 rng(3);
  const std::vector<std::vector<int>> shapes = {
      {3, 5, 2}, {6, 12, 12, 4}, {10, 7, 1}};
  for (const auto out : {Mlp::Output::Tanh, Mlp::Output::Linear}) {
    for (const auto& shape : shapes) {
      Mlp net = Mlp::create(shape, out, rng);
      const int batch = 5;
      const Eigen::MatrixXd x = Eigen::MatrixXd::Random(shape.front(), batch);
      const Eigen::MatrixXd w_out =
          Eigen::MatrixXd::Random(shape.back(), batch);

      Mlp::Cache cache;
      net.forward(x, &cache);
      const MlpGrads g = net.backward(cache, w_out);

      std::uniform_int_distribution<int> pick_layer(
          0, static_cast<int>(net.layer_count()) - 1);
      for (int trial = 0; trial < 30; ++trial) {
        const std::size_t l = pick_layer(rng);
        const bool bias = trial % 3 == 0;
        const int i = std::uniform_int_distribution<int>(
            0, static_cast<int>(net.weights()[l].rows()) - 1)(rng);
        const int j = std::uniform_int_distribution<int>(
            0, static_cast<int>(net.weights()[l].cols()) - 1)(rng);
        const double fd = fd_gradient(net, l, i, j, bias, x, w_out);
        const double an = bias ? g.biases[l][i] : g.weights[l](i, j);
        REQUIRE(an == Catch::Approx(fd).margin(1e-5).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("backward input gradient matches finite differences") {
  std::mt19937_64 rng(4);
  const Mlp net = Mlp::create({5, 9, 3}, Mlp::Output::Tanh, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  const Eigen::MatrixXd w_out = Eigen::MatrixXd::Random(3, 4);
  Mlp::Cache cache;
  net.forward(x, &cache);
  const MlpGrads g = net.backward(cache, w_out);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const int i = std::uniform_int_distribution<int>(0, 4)(rng);
    const int j = std::uniform_int_distribution<int>(0, 3)(rng);
    const double orig = x(i, j);
    x(i, j) = orig + h;
    const double up = (net.forward(x).array() * w_out.array()).sum();
    x(i, j) = orig - h;
    const double dn = (net.forward(x).array() * w_out.array()).sum();
    x(i, j) = orig;
    REQUIRE(g.input(i, j) ==
            Catch::Approx((up - dn) / (2 * h)).margin(1e-5).epsilon(1e-5));
  }
}

TEST_CASE("pre-activation gradient injection matches finite differences") {
  // loss = sum(w_out .* tanh(z)) + sum(c .* z): the second term enters
  // through pre_out_grad.
  std::mt19937_64 rng(5);
  Mlp net = Mlp::create({4, 6, 2}, Mlp::Output::Tanh, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  const Eigen::MatrixXd w_out = Eigen::MatrixXd::Random(2, 3);
  const Eigen::MatrixXd c = Eigen::MatrixXd::Random(2, 3);

  Mlp::Cache cache;
  net.forward(x, &cache);
  const MlpGrads g = net.backward(cache, w_out, &c);

  const auto loss = [&](Mlp& m) {
    Mlp::Cache cc;
    const Eigen::MatrixXd y = m.forward(x, &cc);
    return (y.array() * w_out.array()).sum() +
           (cc.pre.back().array() * c.array()).sum();
  };
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t l = trial % 2;
    const int i = std::uniform_int_distribution<int>(
        0, static_cast<int>(net.weights()[l].rows()) - 1)(rng);
    const int j = std::uniform_int_distribution<int>(
        0, static_cast<int>(net.weights()[l].cols()) - 1)(rng);
    double& ref = net.weights()[l](i, j);
    const double orig = ref;
    ref = orig + h;
    const double up = loss(net);
    ref = orig - h;
    const double dn = loss(net);
    ref = orig;
    REQUIRE(g.weights[l](i, j) ==
            Catch::Approx((up - dn) / (2 * h)).margin(1e-5).epsilon(1e-5));
  }
}

TEST_CASE("adam first step follows the sign of the gradient") {
  std::mt19937_64 rng(6);
  Mlp net = Mlp::create({2, 3, 1}, Mlp::Output::Linear, rng);
  const Mlp before = net;
  Adam opt(net, 1e-3);

  MlpGrads g;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Ones(net.weights()[l].rows(),
                                              net.weights()[l].cols()));
    g.biases.push_back(-Eigen::VectorXd::Ones(net.biases()[l].size()));
  }
  opt.step(net, g);
  REQUIRE(opt.step_count() == 1);
  // With constant gradient g, the bias-corrected first step is
  // -lr * g / (|g| + eps): about -lr here.
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Eigen::MatrixXd dw = net.weights()[l] - before.weights()[l];
    REQUIRE(dw.minCoeff() == Catch::Approx(-1e-3).epsilon(1e-4));
    REQUIRE(dw.maxCoeff() == Catch::Approx(-1e-3).epsilon(1e-4));
    const Eigen::VectorXd db = net.biases()[l] - before.biases()[l];
    REQUIRE(db.minCoeff() == Catch::Approx(1e-3).epsilon(1e-4));
  }
}

TEST_CASE("adam converges on a quadratic") {
  std::mt19937_64 rng(7);
  Mlp net = Mlp::create({1, 1}, Mlp::Output::Linear, rng);
  Adam opt(net, 1e-2);
  // minimize (w - 3)^2 + (b + 2)^2 directly through the gradients
  for (int it = 0; it < 4000; ++it) {
    MlpGrads g;
    g.weights.push_back(Eigen::MatrixXd::Constant(
        1, 1, 2.0 * (net.weights()[0](0, 0) - 3.0)));
    g.biases.push_back(
        Eigen::VectorXd::Constant(1, 2.0 * (net.biases()[0][0] + 2.0)));
    opt.step(net, g);
  }
  REQUIRE(net.weights()[0](0, 0) == Catch::Approx(3.0).margin(1e-3));
  REQUIRE(net.biases()[0][0] == Catch::Approx(-2.0).margin(1e-3));
}

TEST_CASE("adam rejects non-finite gradients") {
  std::mt19937_64 rng(8);
  Mlp net = Mlp::create({2, 2}, Mlp::Output::Linear, rng);
  Adam opt(net);
  MlpGrads g;
  g.weights.push_back(Eigen::MatrixXd::Constant(
      2, 2, std::numeric_limits<double>::infinity()));
  g.biases.push_back(Eigen::VectorXd::Zero(2));
  REQUIRE_THROWS_AS(opt.step(net, g), std::invalid_argument);
}

TEST_CASE("polyak averaging interpolates parameters") {
  std::mt19937_64 rng(9);
  Mlp target = Mlp::create({3, 4, 2}, Mlp::Output::Tanh, rng);
  const Mlp source = Mlp::create({3, 4, 2}, Mlp::Output::Tanh, rng);
  const Mlp before = target;
  const double tau = 0.95;
  dvrl::polyak_update(target, source, tau);
  for (std::size_t l = 0; l < target.layer_count(); ++l) {
    const Eigen::MatrixXd want =
        tau * before.weights()[l] + (1 - tau) * source.weights()[l];
    REQUIRE((target.weights()[l] - want).cwiseAbs().maxCoeff() < 1e-15);
  }
  // tau = 1 freezes the target
  Mlp frozen = before;
  dvrl::polyak_update(frozen, source, 1.0);
  for (std::size_t l = 0; l < frozen.layer_count(); ++l)
    REQUIRE((frozen.weights()[l] - before.weights()[l]).norm() == 0.0);

  Mlp other = Mlp::create({3, 5, 2}, Mlp::Output::Tanh, rng);
  REQUIRE_THROWS_AS(dvrl::polyak_update(other, source, 0.9),
                    std::invalid_argument);
}

TEST_CASE("create validates shapes and is seed-deterministic") {
  std::mt19937_64 rng_a(11), rng_b(11);
  const Mlp a = Mlp::create({4, 8, 2}, Mlp::Output::Tanh, rng_a);
  const Mlp b = Mlp::create({4, 8, 2}, Mlp::Output::Tanh, rng_b);
  for (std::size_t l = 0; l < a.layer_count(); ++l)
    REQUIRE((a.weights()[l] - b.weights()[l]).norm() == 0.0);
  std::mt19937_64 rng(12);
  REQUIRE_THROWS_AS(Mlp::create({4}, Mlp::Output::Tanh, rng),
                    std::invalid_argument);
}
