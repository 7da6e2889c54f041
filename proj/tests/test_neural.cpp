#include <doctest.h>

#include <cmath>
#include <sstream>

#include "uotkit/neural.hpp"
#include "uotkit/rng.hpp"

using namespace uot;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("parameter count and zero network") {
  Mlp net({3, 5, 4, 2});
  CHECK(net.parameter_count() == (3 + 1) * 5 + (5 + 1) * 4 + (4 + 1) * 2);
  Rng rng(1);
  const Matrix out = net.forward(random_matrix(6, 3, rng));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
  CHECK(forward(net, Vector::Ones(3)).isZero(0.0));
}

TEST_CASE("single linear layer with identity weights") {
  Mlp net({3, 3});
  net.weight(0) = Matrix::Identity(3, 3);
  Vector x(3);
  x << 0.5, -2.0, 3.0;
  CHECK(forward(net, x) == x);
}

TEST_CASE("seeded init is deterministic") {
  Mlp a({2, 8, 2}), b({2, 8, 2});
  a.initialize(42);
  b.initialize(42);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  Vector x(2);
  x << 0.3, -0.7;
  CHECK(forward(a, x) == forward(b, x));
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(a.layer_sizes()[l]));
    CHECK(a.weight(l).cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("time conditioning appends t") {
  Mlp net({3, 2});
  net.weight(0)(0, 2) = 1.0;
  Vector x = Vector::Zero(2);
  CHECK(forward(net, x, 0.25)[0] == 0.25);
  CHECK_THROWS_AS(forward(net, x), std::invalid_argument);
}

TEST_CASE("linear layer backward") {
  Mlp net({3, 2});
  Rng rng(2);
  net.initialize(3);
  Vector x(3);
  x << 1.0, 2.0, -1.0;
  Vector up = Vector::Zero(2);
  up[0] = 1.0;
  const auto g = backward(net, x, std::nullopt, up);
  // dW = e1 x^T, db = e1
  CHECK(g.params[0] == 1.0);
  CHECK(g.params[1] == 2.0);
  CHECK(g.params[2] == -1.0);
  CHECK(g.params[3] == 0.0);
  CHECK(g.params[6] == 1.0);
  CHECK(g.params[7] == 0.0);
  CHECK(g.input.isApprox(net.weight(0).row(0).transpose()));

  const auto zero = backward(net, x, std::nullopt, Vector::Zero(2));
  for (double v : zero.params) CHECK(v == 0.0);
  CHECK(zero.input.isZero(0.0));
}

TEST_CASE("backward matches central differences per coordinate") {
  Rng rng(4);
  for (const auto head : {OutputHead::linear, OutputHead::softplus}) {
    Mlp net({3, 7, 5, 2}, head);
    net.initialize(rng());
    const Vector x = random_matrix(3, 1, rng).col(0);
    const Vector up = random_matrix(2, 1, rng).col(0);
    const auto g = backward(net, x, std::nullopt, up);
    const double h = 1e-5;
    Mlp probe = net;
    for (std::size_t i = 0; i < net.parameter_count(); ++i) {
      const double orig = probe.parameters()[i];
      probe.parameters()[i] = orig + h;
      const double f_up = up.dot(forward(probe, x));
      probe.parameters()[i] = orig - h;
      const double f_down = up.dot(forward(probe, x));
      probe.parameters()[i] = orig;
      const double fd = (f_up - f_down) / (2 * h);
      CHECK(std::abs(fd - g.params[i]) / std::max({std::abs(fd), std::abs(g.params[i]), 1e-6}) <= 1e-4);
    }
    for (Eigen::Index k = 0; k < 3; ++k) {
      Vector xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const double fd = (up.dot(forward(net, xp)) - up.dot(forward(net, xm))) / (2 * h);
      CHECK(std::abs(fd - g.input[k]) <= 1e-8 + 1e-4 * std::abs(fd));
    }
  }
}

TEST_CASE("grad_check on quadratic loss of a linear net") {
  Rng rng(5);
  const Matrix x = random_matrix(10, 3, rng), y = random_matrix(10, 2, rng);
  Mlp net({3, 2});
  net.initialize(6);
  auto loss = [&](const Mlp& m, std::span<double> grad) {
    Mlp::Tape tape;
    const Matrix r = m.forward(x, tape) - y;
    if (!grad.empty()) m.backward(tape, 2.0 * r / 10.0, grad);
    return r.squaredNorm() / 10.0;
  };
  CHECK(grad_check(net, loss).max_relative_error <= 1e-8);
}

TEST_CASE("adam") {
  std::vector<double> p{1.0, -2.0, 0.5};
  AdamState s(3, AdamConfig{});
  adam_step(s, p, std::vector<double>{0.0, 0.0, 0.0});
  CHECK(p == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(s.step == 1);

  // first step: m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps)
  AdamState t(3, AdamConfig{});
  std::vector<double> q{0.0, 0.0, 0.0};
  const std::vector<double> g{0.3, -4.0, 1e-3};
  adam_step(t, q, g);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect = -1e-3 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(std::abs(q[i] - expect) <= 1e-15);
  }

  CHECK_THROWS_AS(adam_step(t, q, std::vector<double>{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(adam_step(t, q, std::vector<double>{1.0, NAN, 0.0}), std::runtime_error);
  CHECK(t.step == 1);
}

TEST_CASE("parameter round trip and checkpoint format") {
  Mlp net({2, 6, 1}, OutputHead::softplus);
  net.initialize(9);
  std::vector<double> flat(net.parameters().begin(), net.parameters().end());
  Mlp copy({2, 6, 1}, OutputHead::softplus);
  copy.set_parameters(flat);
  CHECK(std::equal(flat.begin(), flat.end(), copy.parameters().begin()));
  CHECK_THROWS_AS(copy.set_parameters(std::vector<double>(3)), std::invalid_argument);

  std::stringstream blob;
  save_mlp(net, blob);
  const Mlp loaded = load_mlp(blob);
  CHECK(loaded.layer_sizes() == net.layer_sizes());
  CHECK(loaded.head() == OutputHead::softplus);
  CHECK(std::equal(flat.begin(), flat.end(), loaded.parameters().begin()));

  std::stringstream junk("not a checkpoint");
  CHECK_THROWS(load_mlp(junk));
}
