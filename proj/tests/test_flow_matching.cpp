#include <doctest.h>

#include <cmath>

#include "uotkit/flow_matching.hpp"

using namespace uot;

namespace {

Matrix gaussian(Eigen::Index n, Eigen::Index d, Rng& rng, double mean = 0.0, double sd = 1.0) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = mean + sd * rng.normal();
  return m;
}

FlowBatch batch_of(const Matrix& x0, const Matrix& x1, Rng& rng) {
  FlowBatch b;
  b.x0 = x0;
  b.x1 = x1;
  b.t.resize(x0.rows());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) b.t[i] = rng.uniform();
  b.xt = (1.0 - b.t.array()).matrix().asDiagonal() * x0 + b.t.asDiagonal() * x1;
  return b;
}

}  // namespace

TEST_CASE("fm loss special cases") {
  Rng rng(1);
  // 1-D constant shift by 2: a net whose bias is 2 reproduces x1 - x0
  const Matrix x0 = gaussian(8, 1, rng);
  const Matrix x1 = x0.array() + 2.0;
  Mlp shift({2, 1});
  shift.bias(0)[0] = 2.0;
  CHECK(fm_loss(shift, batch_of(x0, x1, rng), {}) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));

  const Mlp zero({3, 4, 2});
  const Matrix y = gaussian(5, 2, rng);
  CHECK(fm_loss(zero, batch_of(y, y, rng), {}) == 0.0);
}

TEST_CASE("fm loss matches direct recomputation") {
  Rng rng(2);
  const auto batch = batch_of(gaussian(9, 2, rng), gaussian(9, 2, rng, 3.0), rng);
  const Mlp net = make_velocity_field(2, {8, 8}, 3);
  double direct = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto s = batch.at(i);
    direct += (forward(net, s.xt, s.t) - s.target_velocity).squaredNorm();
  }
  direct /= static_cast<double>(batch.size());
  const auto lg = fm_loss_and_grad(net, batch);
  CHECK(std::abs(lg.loss - direct) <= 1e-12);
  CHECK(lg.grad.size() == net.parameter_count());
}

TEST_CASE("fm gradient check") {
  Rng rng(3);
  const auto batch = batch_of(gaussian(12, 2, rng), gaussian(12, 2, rng, 2.0), rng);
  const Mlp net = make_velocity_field(2, {16, 16, 16}, 4);
  const auto r = grad_check(net, [&](const Mlp& m, std::span<double> g) { return fm_loss(m, batch, g); });
  CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("training batches") {
  Rng rng(4);
  FmTrainConfig cfg;
  cfg.coupling = CouplingMode::independent;
  const Matrix a = gaussian(1, 2, rng), b = gaussian(1, 2, rng);
  auto batch = make_training_batch(a, b, cfg, rng);
  REQUIRE(batch.size() == 1);
  CHECK(batch.x0 == a);
  CHECK(batch.x1 == b);

  // identity pairing is cheaper by a wide margin: 2x2 LP oracle
  Matrix x(2, 1), y(2, 1);
  x << 0.0, 10.0;
  y << 0.5, 10.5;
  const double identity = 0.25 + 0.25, swapped = 9.5 * 9.5 + 10.5 * 10.5;
  REQUIRE(identity < swapped);
  cfg.coupling = CouplingMode::balanced_ot;
  cfg.solver.epsilon_abs = 0.01;
  batch = make_training_batch(x, y, cfg, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(std::abs(batch.x1(static_cast<Eigen::Index>(i), 0) - batch.x0(static_cast<Eigen::Index>(i), 0) - 0.5) < 1e-12);

  cfg.coupling = CouplingMode::unbalanced_ot;
  cfg.solver = cfg.solver.with_tau(0.9);
  const Matrix p = gaussian(20, 2, rng), q = gaussian(20, 2, rng, 1.0);
  batch = make_training_batch(p, q, cfg, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto s = batch.at(i);
    CHECK((s.xt - ((1 - s.t) * s.x0 + s.t * s.x1)).norm() <= 1e-12);
    CHECK(s.t >= 0.0);
    CHECK(s.t < 1.0);
  }
}

TEST_CASE("integration of simple fields") {
  Rng rng(5);
  const Matrix x0 = gaussian(4, 2, rng);
  const VelocityFn zero = [](double, const Matrix& x) { return Matrix::Zero(x.rows(), x.cols()).eval(); };
  Vector c(2);
  c << 1.5, -0.5;
  const VelocityFn constant = [&](double, const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    out.rowwise() = c.transpose();
    return out;
  };
  const VelocityFn linear = [](double, const Matrix& x) { return x; };
  for (const auto method : {OdeMethod::euler, OdeMethod::rk4}) {
    CHECK(integrate(zero, x0, 7, method) == x0);
    const Matrix moved = integrate(constant, x0, 3, method);
    CHECK(((moved - x0).rowwise() - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(transport_cost(zero, x0, 5, method) == 0.0);
    CHECK(transport_cost(constant, x0, 5, method) == doctest::Approx(c.norm()).epsilon(1e-12));
  }
  const Matrix e = integrate(linear, x0, 100, OdeMethod::rk4);
  CHECK(((e - std::exp(1.0) * x0).cwiseAbs().array() <= 1e-6 * (std::exp(1.0) * x0).cwiseAbs().array()).all());
  CHECK_THROWS_AS(integrate(zero, x0, 0, OdeMethod::rk4), std::invalid_argument);
  const VelocityFn blowup = [](double, const Matrix& x) { return Matrix(x.array().square() * 1e200); };
  CHECK_THROWS(integrate(blowup, Matrix::Constant(1, 1, 1e100), 4, OdeMethod::euler));
  const auto traj = integrate_trajectory(linear, x0, 10, OdeMethod::euler);
  CHECK(traj.size() == 11);
  CHECK(traj.front() == x0);
}

TEST_CASE("1-D shift training") {
  Rng rng(6);
  const auto mu = make_measure(gaussian(256, 1, rng, 0.0, 0.1));
  const auto nu = make_measure(gaussian(256, 1, rng, 5.0, 0.1));
  FmTrainConfig cfg;
  cfg.coupling = CouplingMode::independent;
  cfg.iterations = 1500;
  cfg.hidden = {32, 32};
  cfg.batch_size = 64;
  cfg.seed = 0;
  const auto res = train_fm(mu, nu, cfg);
  REQUIRE(res.loss_history.size() == 1500);
  const Matrix pushed = integrate(res.net, mu.points, 100, OdeMethod::rk4);
  CHECK(std::abs(pushed.mean() - 5.0) <= 0.25);

  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 100; ++i) {
    head += res.loss_history[static_cast<std::size_t>(i)];
    tail += res.loss_history[res.loss_history.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(tail < head);

  // euler with 10x the steps agrees with rk4 on the trained field
  const Matrix euler = integrate(res.net, mu.points, 1000, OdeMethod::euler);
  CHECK((euler - pushed).rowwise().norm().maxCoeff() <= 1e-2 * (pushed - mu.points).rowwise().norm().mean());

  const auto again = train_fm(mu, nu, cfg);
  CHECK(again.loss_history == res.loss_history);

  cfg.iterations = 0;
  const auto untouched = train_fm(mu, nu, cfg);
  const Mlp fresh = make_velocity_field(1, cfg.hidden, Rng(cfg.seed)());
  CHECK(untouched.loss_history.empty());
  CHECK(std::equal(fresh.parameters().begin(), fresh.parameters().end(), untouched.net.parameters().begin()));
}

TEST_CASE("config validation") {
  FmTrainConfig cfg;
  cfg.sigma = -1.0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg.sigma = 0.0;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  CHECK(ode_method_from_string(to_string(OdeMethod::rk4)) == OdeMethod::rk4);
  CHECK_THROWS(ode_method_from_string("midpoint"));
}
