#include <doctest.h>

#include <cmath>
#include <map>

#include "uotkit/rebalance.hpp"

using namespace uot;

namespace {

Matrix random_points(Eigen::Index n, Rng& rng, double spread = 1.0) {
  Matrix m(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < 2; ++k) m(i, k) = spread * rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("resampling a degenerate plan") {
  Rng rng(1);
  Matrix p = Matrix::Zero(2, 2);
  p(0, 1) = 0.3;
  const auto batch = resample_pairs(p, 50, rng);
  CHECK(batch.pairs.size() == 50);
  for (const auto& pair : batch.pairs) CHECK(pair == IndexPair{0, 1});
  REQUIRE(batch.counts.size() == 1);
  CHECK(batch.counts[0].second == 50);
  CHECK(batch.plan_mass == doctest::Approx(0.3));

  const Matrix d = Vector::Constant(2, 0.5).asDiagonal();
  for (const auto& pair : resample_pairs(d, 4, rng).pairs) CHECK(pair.source == pair.target);
  CHECK_THROWS_AS(resample_pairs(Matrix::Zero(2, 2), 4, rng), std::invalid_argument);
}

TEST_CASE("uniform 2x2 plan frequencies stay inside the 5-sigma binomial band") {
  const double p = 0.25, k = 10000;
  const double half = 5.0 * std::sqrt(p * (1 - p) / k);
  CHECK(p - half >= 0.22);
  CHECK(p + half <= 0.28);
  Rng rng(2);
  const auto batch = resample_pairs(Matrix::Constant(2, 2, 0.25), 10000, rng);
  REQUIRE(batch.counts.size() == 4);
  for (const auto& [pair, count] : batch.counts) {
    const double freq = static_cast<double>(count) / k;
    CHECK(freq >= p - half);
    CHECK(freq <= p + half);
  }
}

TEST_CASE("pair frequencies pass a chi-square test") {
  Rng rng(3);
  Matrix p(3, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) p(i, j) = 0.1 + rng.uniform();
  }
  const std::size_t k = 100000;
  const auto batch = resample_pairs(p, k, rng);
  std::map<IndexPair, std::size_t> counts(batch.counts.begin(), batch.counts.end());
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double expected = static_cast<double>(k) * p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / p.sum();
      const double observed = static_cast<double>(counts[{i, j}]);
      chi2 += (observed - expected) * (observed - expected) / expected;
    }
  }
  // 0.999 quantile of chi-square with 8 degrees of freedom
  CHECK(chi2 < 26.1245);
}

TEST_CASE("gather returns the paired rows") {
  Rng rng(4);
  const Matrix x = random_points(3, rng), y = random_points(4, rng);
  RebalancedBatch batch;
  batch.pairs = {{2, 0}, {0, 3}};
  const auto [xs, ys] = gather(batch, x, y);
  CHECK(xs.row(0) == x.row(2));
  CHECK(xs.row(1) == x.row(0));
  CHECK(ys.row(0) == y.row(0));
  CHECK(ys.row(1) == y.row(3));
}

TEST_CASE("reweighting estimates") {
  const Matrix bal = Vector::Constant(2, 0.5).asDiagonal();
  auto est = reweight_estimates(bal);
  CHECK(est.u_hat[0] == doctest::Approx(1.0));
  CHECK(est.u_hat[1] == doctest::Approx(1.0));

  Matrix p(2, 2);
  p << 0.1, 0.2, 0.3, 0.4;
  est = reweight_estimates(p);
  CHECK(est.u_hat[0] == doctest::Approx(0.6));
  CHECK(est.u_hat[1] == doctest::Approx(1.4));

  Rng rng(5);
  Matrix q(5, 7);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = 0.05 * rng.uniform();
  est = reweight_estimates(q);
  CHECK(std::abs(est.u_hat.sum() / 5 - q.sum()) <= 1e-12);
  CHECK(std::abs(est.v_hat.sum() / 7 - q.sum()) <= 1e-12);
  CHECK((est.u_hat.array() >= 0).all());
}

TEST_CASE("outliers are down-weighted by the unbalanced coupling") {
  const auto spec = DatasetSpec::gaussian_outliers_default(0);
  const auto src = sample_dataset(spec, Role::source);
  const auto tgt = sample_dataset(spec, Role::target);
  const auto plan = solve(src.measure, tgt.measure, SolverConfig{}.with_tau(0.9));
  REQUIRE(plan.converged);
  const auto est = reweight_estimates(plan);
  double worst_outlier = 0.0, inlier_mean = 0.0;
  int inliers = 0;
  for (std::size_t i = 0; i < src.labels.size(); ++i) {
    const double u = est.u_hat[static_cast<Eigen::Index>(i)];
    if (src.labels[i] == kOutlierLabel) {
      worst_outlier = std::max(worst_outlier, u);
    } else {
      inlier_mean += u;
      ++inliers;
    }
  }
  CHECK(worst_outlier < 0.1);
  CHECK(inlier_mean / inliers > 0.5);
}

TEST_CASE("reweighting regression") {
  Rng rng(6);
  const Matrix train = random_points(64, rng), held = random_points(64, rng);
  ReweightTrainConfig cfg;
  cfg.optimizer.learning_rate = 1e-2;

  Mlp net({2, 32, 32, 1}, OutputHead::softplus);
  net.initialize(7);
  const auto fit = fit_reweighting(net, {{train, Vector::Ones(64)}}, cfg);
  const Matrix out = fit.net.forward(held);
  CHECK(out.minCoeff() >= 0.9);
  CHECK(out.maxCoeff() <= 1.1);
  CHECK(fit.loss_history.size() == 500);

  auto step = [](const Matrix& x) {
    Vector t(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) t[i] = x(i, 0) > 0 ? 2.0 : 0.0;
    return t;
  };
  std::vector<RegressionBatch> batches;
  for (int b = 0; b < 8; ++b) {
    const Matrix x = random_points(128, rng);
    batches.push_back({x, step(x)});
  }
  const auto step_fit = fit_reweighting(net, batches, cfg);
  const Matrix held_big = random_points(1000, rng);
  const double mse = (step_fit.net.forward(held_big).col(0) - step(held_big)).squaredNorm() / 1000.0;
  CHECK(mse <= 0.05);

  CHECK_THROWS_AS(fit_reweighting(net, {}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(fit_reweighting(Mlp({2, 4, 1}), {{train, Vector::Ones(64)}}, cfg), std::invalid_argument);
}

TEST_CASE("verify_rebalancing") {
  Rng rng(8);
  const auto mu = make_measure(random_points(10, rng));
  const auto nu = make_measure(random_points(10, rng, 1.5));

  // At the default eps = 0.01 * mean cost the balanced re-solve can take
  // millions of sweeps to reach 1e-10; a larger eps keeps this fast.
  SolverConfig tight;
  tight.epsilon_scale = 0.1;
  tight.tolerance = 1e-13;
  tight.max_iters = 1000000;
  const auto same = verify_rebalancing(mu, nu, tight);
  CHECK(same.frobenius_gap <= 1e-10);
  CHECK(same.unbalanced_mass == doctest::Approx(1.0).epsilon(1e-10));

  for (int rep = 0; rep < 5; ++rep) {
    const auto a = make_measure(random_points(10, rng));
    const auto b = make_measure(random_points(10, rng, 2.0));
    SolverConfig cfg = tight.with_tau(0.9);
    cfg.tolerance = 1e-10 * cost_matrix(a, b).mean_cost;
    const auto r = verify_rebalancing(a, b, cfg);
    CHECK(r.unbalanced_converged);
    CHECK(r.balanced_converged);
    CHECK(r.reweighting_residual <= 1e-6);
    CHECK(r.relative_frobenius_gap <= 1e-4);
  }

  const auto spec = DatasetSpec::uniform_mixture_default(0);
  SolverConfig sim;
  sim.epsilon_abs = 0.1;
  sim = sim.with_tau(0.9);
  sim.tolerance = 1e-9 * cost_matrix(sample_dataset(spec, Role::source).measure, sample_dataset(spec, Role::target).measure).mean_cost;
  const auto r = verify_rebalancing(sample_dataset(spec, Role::source).measure, sample_dataset(spec, Role::target).measure, sim);
  CHECK(r.relative_frobenius_gap <= 1e-4);
}
