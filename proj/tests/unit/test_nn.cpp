#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "vrer/errors.hpp"
#include "vrer/nn.hpp"

using namespace vrer;

namespace {

DenseNet random_net(std::vector<int> sizes, Activation hidden, Activation out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DenseNet net = DenseNet::glorot(sizes, hidden, out, rng);
  // Glorot leaves biases at zero; randomize them so they are exercised.
  Eigen::VectorXd p = net.flatten();
  std::normal_distribution<double> normal(0.0, 0.3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += normal(rng);
  net.unflatten(p);
  return net;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

double seeded_output(const DenseNet& net, const Eigen::VectorXd& x, const Eigen::VectorXd& seed) {
  return forward(net, x).output.dot(seed);
}

}  // namespace

TEST_CASE("identity layer passes its input through") {
  DenseLayer layer{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::identity};
  DenseNet net({layer});
  const Eigen::Vector3d x(0.5, -2.0, 7.0);
  CHECK(forward(net, x).output.isApprox(x, 0.0));
}

TEST_CASE("softmax of equal logits is uniform") {
  DenseLayer layer{Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2), Activation::softmax};
  DenseNet net({layer});
  const auto y = forward(net, Eigen::Vector3d(1.0, 2.0, 3.0)).output;
  CHECK(y(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y(1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax outputs form a distribution") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = random_net({4, 8, 5}, Activation::tanh, Activation::softmax, 100 + trial);
    const auto y = forward(net, 10.0 * random_vector(4, rng)).output;
    CHECK(y.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.minCoeff() >= 0.0);
  }
}

TEST_CASE("two-layer tanh net matches a hand-rolled forward pass") {
  DenseLayer l1{(Eigen::MatrixXd(2, 2) << 0.3, -0.7, 1.1, 0.25).finished(),
                Eigen::Vector2d(0.1, -0.2), Activation::tanh};
  DenseLayer l2{(Eigen::MatrixXd(1, 2) << -0.9, 0.6).finished(), Eigen::VectorXd::Constant(1, 0.05),
                Activation::tanh};
  DenseNet net({l1, l2});
  const double x0 = 0.8, x1 = -1.5;
  const double h0 = std::tanh(0.3 * x0 - 0.7 * x1 + 0.1);
  const double h1 = std::tanh(1.1 * x0 + 0.25 * x1 - 0.2);
  const double y = std::tanh(-0.9 * h0 + 0.6 * h1 + 0.05);
  CHECK(forward(net, Eigen::Vector2d(x0, x1)).output(0) == doctest::Approx(y).epsilon(1e-13));
}

TEST_CASE("tanh layer agrees with std::tanh across magnitudes") {
  std::vector<double> xs;
  for (double x = -25.0; x <= 25.0; x += 0.01) xs.push_back(x);
  for (double x = -0.2; x <= 0.2; x += 1e-4) xs.push_back(x);
  xs.push_back(0.0);
  xs.push_back(1e-300);
  DenseLayer layer{Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Activation::tanh};
  DenseNet net({layer});
  Eigen::MatrixXd batch(1, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) batch(0, static_cast<Eigen::Index>(i)) = xs[i];
  const Eigen::MatrixXd y = predict_batch(net, batch);
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double want = std::tanh(xs[i]);
    const double got = y(0, static_cast<Eigen::Index>(i));
    const double err = want == 0.0 ? std::abs(got) : std::abs(got - want) / std::abs(want);
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("input of the wrong length is a structural error") {
  const auto net = random_net({3, 4, 2}, Activation::tanh, Activation::identity, 1);
  CHECK_THROWS_AS(forward(net, Eigen::VectorXd::Zero(2)), StructuralError);
  CHECK_THROWS_AS(forward_batch(net, Eigen::MatrixXd::Zero(4, 5)), StructuralError);
}

TEST_CASE("flatten and unflatten round-trip") {
  auto net = random_net({3, 5, 2}, Activation::relu, Activation::identity, 2);
  const Eigen::VectorXd p = net.flatten();
  CHECK(static_cast<std::size_t>(p.size()) == net.parameter_count());
  CHECK(p.size() == 3 * 5 + 5 + 5 * 2 + 2);
  // Column-major weight first, then bias.
  CHECK(p(1) == net.layers()[0].weight(1, 0));
  CHECK(p(15) == net.layers()[0].bias(0));
  Eigen::VectorXd q = p.reverse();
  net.unflatten(q);
  CHECK(net.flatten() == q);
  CHECK_THROWS_AS(net.unflatten(Eigen::VectorXd::Zero(3)), StructuralError);
}

TEST_CASE("a tape recorded before a parameter change is rejected") {
  auto net = random_net({2, 3, 1}, Activation::tanh, Activation::identity, 3);
  const auto pass = forward(net, Eigen::Vector2d(0.1, 0.2));
  net.unflatten(net.flatten());
  CHECK_THROWS_AS(backward(net, pass.tape, Eigen::VectorXd::Ones(1)), InvalidTapeError);
  const auto batch = forward_batch(net, Eigen::MatrixXd::Ones(2, 3));
  net.unflatten(net.flatten());
  CHECK_THROWS_AS(backward_batch(net, batch.tape, Eigen::MatrixXd::Ones(1, 3)), InvalidTapeError);
}

TEST_CASE("zero seed gives zero gradient") {
  const auto net = random_net({3, 4, 2}, Activation::tanh, Activation::softmax, 4);
  const auto pass = forward(net, Eigen::Vector3d(1.0, -1.0, 0.5));
  CHECK(backward(net, pass.tape, Eigen::VectorXd::Zero(2)).isZero(0.0));
}

TEST_CASE("linear 1x1 net: gradient is (x, 1)") {
  DenseLayer layer{Eigen::MatrixXd::Constant(1, 1, 2.5), Eigen::VectorXd::Constant(1, -1.0),
                   Activation::identity};
  DenseNet net({layer});
  const auto pass = forward(net, Eigen::VectorXd::Constant(1, 3.0));
  const auto g = backward(net, pass.tape, Eigen::VectorXd::Ones(1));
  CHECK(g(0) == 3.0);
  CHECK(g(1) == 1.0);
}

TEST_CASE("backward matches central differences") {
  const std::vector<std::pair<Activation, Activation>> kinds = {
      {Activation::tanh, Activation::identity},
      {Activation::relu, Activation::identity},
      {Activation::tanh, Activation::softmax},
      {Activation::tanh, Activation::tanh},
  };
  std::mt19937_64 rng(5);
  int cases = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    for (const auto& [hidden, out] : kinds) {
      auto net = random_net({3, 6, 4, 3}, hidden, out, 1000 + static_cast<std::uint64_t>(cases));
      const Eigen::VectorXd x = random_vector(3, rng);
      const Eigen::VectorXd seed = random_vector(3, rng);
      const auto full = backward_full(net, forward(net, x).tape, seed);
      const Eigen::VectorXd p = net.flatten();
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        Eigen::VectorXd q = p;
        q(i) += 1e-5;
        net.unflatten(q);
        const double up = seeded_output(net, x, seed);
        q(i) -= 2e-5;
        net.unflatten(q);
        const double down = seeded_output(net, x, seed);
        const double fd = (up - down) / 2e-5;
        worst = std::max(worst, std::abs(fd - full.param_grad(i)) / std::max(1e-3, std::abs(fd)));
      }
      net.unflatten(p);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd y = x;
        y(i) += 1e-5;
        const double up = seeded_output(net, y, seed);
        y(i) -= 2e-5;
        const double down = seeded_output(net, y, seed);
        const double fd = (up - down) / 2e-5;
        worst = std::max(worst, std::abs(fd - full.input_grad(i)) / std::max(1e-3, std::abs(fd)));
      }
      ++cases;
    }
  }
  CHECK(cases >= 100);
  CHECK(worst <= 1e-4);
}

TEST_CASE("batched passes agree with per-sample passes") {
  std::mt19937_64 rng(6);
  for (auto [hidden, out] : {std::pair{Activation::relu, Activation::identity},
                             std::pair{Activation::tanh, Activation::softmax}}) {
    const auto net = random_net({4, 7, 3}, hidden, out, 77);
    const Eigen::Index n = 9;
    Eigen::MatrixXd xs(4, n), seeds(3, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      xs.col(j) = random_vector(4, rng);
      seeds.col(j) = random_vector(3, rng);
    }
    const auto batch = forward_batch(net, xs);
    Eigen::VectorXd norms = Eigen::VectorXd::Zero(n);
    const auto back = backward_batch(net, batch.tape, seeds, false, &norms);
    Eigen::VectorXd summed = Eigen::VectorXd::Zero(back.param_grad.size());
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto pass = forward(net, xs.col(j));
      CHECK(pass.output.isApprox(batch.output().col(j), 1e-13));
      const auto single = backward_full(net, pass.tape, seeds.col(j));
      summed += single.param_grad;
      CHECK(single.input_grad.isApprox(back.input_grad.col(j), 1e-12));
      CHECK(norms(j) == doctest::Approx(single.param_grad.squaredNorm()).epsilon(1e-12));
    }
    CHECK(summed.isApprox(back.param_grad, 1e-12));
    CHECK(predict_batch(net, xs).isApprox(batch.output(), 1e-15));
  }
}

TEST_CASE("softmax gradient seeded at the logits") {
  // d/dz of log softmax(z)_a is e_a - p, so seeding the logits with e_a - p
  // must equal seeding the probabilities with e_a / p_a.
  const auto net = random_net({3, 4, 3}, Activation::tanh, Activation::softmax, 8);
  const auto pass = forward(net, Eigen::Vector3d(0.3, -0.4, 1.2));
  const Eigen::VectorXd p = pass.output;
  Eigen::VectorXd at_logits = -p;
  at_logits(1) += 1.0;
  Eigen::VectorXd at_probs = Eigen::VectorXd::Zero(3);
  at_probs(1) = 1.0 / p(1);
  const auto a = backward_full(net, pass.tape, at_logits, true);
  const auto b = backward_full(net, pass.tape, at_probs, false);
  CHECK(a.param_grad.isApprox(b.param_grad, 1e-10));
}

TEST_CASE("sgd_step arithmetic") {
  const Eigen::Vector2d params(1.0, 1.0);
  CHECK(sgd_step(params, Eigen::Vector2d::Zero(), 0.5) == params);
  CHECK(sgd_step(params, Eigen::Vector2d(1.0, -1.0), 0.5) == Eigen::Vector2d(1.5, 0.5));
  CHECK(sgd_step(params, Eigen::Vector2d(1.0, -1.0), Eigen::Vector2d(0.5, 2.0)) ==
        Eigen::Vector2d(1.5, -1.0));
}

TEST_CASE("sgd_step refuses non-finite gradients") {
  const Eigen::Vector2d params(1.0, 1.0);
  CHECK_THROWS_AS(sgd_step(params, Eigen::Vector2d(std::nan(""), 0.0), 0.1), NonFiniteGradientError);
  CHECK_THROWS_AS(sgd_step(params, Eigen::Vector2d(0.0, INFINITY), 0.1), NonFiniteGradientError);
}

TEST_CASE("gradient ascent on -theta^2 converges to the maximizer") {
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 3.0);
  for (int i = 0; i < 200; ++i) theta = sgd_step(theta, -2.0 * theta, 0.1);
  CHECK(std::abs(theta(0)) < 1e-15);
}
