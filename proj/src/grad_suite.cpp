#include "uotkit/grad_suite.hpp"

#include <algorithm>
#include <cmath>

#include "uotkit/flow_matching.hpp"
#include "uotkit/monge_gap.hpp"
#include "uotkit/rebalance.hpp"
#include "uotkit/rng.hpp"

namespace uot {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double shift = 0.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = rng.normal() + shift;
  }
  return m;
}

MgTrainConfig tight_mg_config() {
  MgTrainConfig cfg;
  cfg.fit_solver.epsilon_scale = 0.1;
  cfg.gap_solver.epsilon_scale = 0.1;
  cfg.fit_solver.tolerance = 1e-13;
  cfg.gap_solver.tolerance = 1e-13;
  cfg.fit_solver.max_iters = 200000;
  cfg.gap_solver.max_iters = 200000;
  return cfg;
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradSuiteEntry> out;

  {
    FlowBatch batch;
    batch.x0 = gaussian(16, 2, rng);
    batch.x1 = gaussian(16, 2, rng, 3.0);
    batch.t.resize(16);
    for (Eigen::Index i = 0; i < 16; ++i) batch.t[i] = rng.uniform();
    batch.xt = (1.0 - batch.t.array()).matrix().asDiagonal() * batch.x0 + batch.t.asDiagonal() * batch.x1;
    const Mlp net = make_velocity_field(2, {16, 16}, rng());
    GradCheckOptions opts;
    opts.seed = rng();
    const auto r = grad_check(net, [&](const Mlp& m, std::span<double> g) { return fm_loss(m, batch, g); }, opts);
    out.push_back({"fm_loss", r.max_relative_error, 1e-4});
  }
  {
    const Matrix points = gaussian(24, 2, rng);
    Vector targets(24);
    for (Eigen::Index i = 0; i < 24; ++i) targets[i] = 0.5 + rng.uniform() * 1.5;
    Mlp net({2, 16, 16, 1}, OutputHead::softplus);
    net.initialize(rng());
    GradCheckOptions opts;
    opts.seed = rng();
    const auto r = grad_check(
        net, [&](const Mlp& m, std::span<double> g) { return reweighting_loss(m, points, targets, g); }, opts);
    out.push_back({"reweighting_loss", r.max_relative_error, 1e-4});
  }
  {
    const MgTrainConfig cfg = tight_mg_config();
    const Matrix source = gaussian(5, 2, rng);
    const Matrix target = gaussian(5, 2, rng, 2.0);
    const Matrix mapped = source + 0.7 * gaussian(5, 2, rng, 1.0);
    const MgEpsilons eps = resolve_mg_epsilons(source, target, cfg);
    const Matrix analytic = mg_loss_on_points(source, mapped, target, cfg, eps).grad_mapped;
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < mapped.rows(); ++i) {
      for (Eigen::Index k = 0; k < mapped.cols(); ++k) {
        Matrix up = mapped, down = mapped;
        up(i, k) += h;
        down(i, k) -= h;
        const double numeric = (mg_loss_on_points(source, up, target, cfg, eps, false).loss -
                                mg_loss_on_points(source, down, target, cfg, eps, false).loss) /
                               (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic(i, k)), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic(i, k)) / denom);
      }
    }
    out.push_back({"monge_gap_points", worst, 1e-3});

    const Mlp net = make_point_map(2, {8}, rng());
    GradCheckOptions opts;
    opts.seed = rng();
    const auto r = grad_check(
        net,
        [&](const Mlp& m, std::span<double> g) {
          const MgLoss l = mg_loss_and_grad(m, source, target, cfg);
          if (!g.empty()) std::copy(l.grad.begin(), l.grad.end(), g.begin());
          return l.loss;
        },
        opts);
    out.push_back({"monge_gap_params", r.max_relative_error, 1e-3});
  }
  return out;
}

}  // namespace uot
