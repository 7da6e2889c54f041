#include "uotkit/rebalance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace uot {

RebalancedBatch resample_pairs(const Matrix& plan, std::size_t k, Rng& rng) {
  const auto cols = static_cast<std::size_t>(plan.cols());
  const std::size_t entries = static_cast<std::size_t>(plan.size());
  std::vector<double> cumulative(entries);
  double total = 0.0;
  std::size_t last_positive = entries;
  for (std::size_t e = 0; e < entries; ++e) {
    const double p = plan.data()[e];
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("resample_pairs: plan entries must be finite and >= 0");
    total += p;
    cumulative[e] = total;
    if (p > 0.0) last_positive = e;
  }
  if (!(total > 0.0)) throw std::invalid_argument("resample_pairs: plan has zero mass");

  RebalancedBatch out;
  out.plan_mass = total;
  out.pairs.reserve(k);
  std::map<IndexPair, std::size_t> counts;
  for (std::size_t draw = 0; draw < k; ++draw) {
    const double u = rng.uniform() * total;
    auto e = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    if (e >= entries) e = last_positive;
    const IndexPair pair{e / cols, e % cols};
    out.pairs.push_back(pair);
    ++counts[pair];
  }
  out.counts.assign(counts.begin(), counts.end());
  return out;
}

RebalancedBatch resample_pairs(const TransportPlan& plan, std::size_t k, Rng& rng) {
  return resample_pairs(plan.plan, k, rng);
}

std::pair<Matrix, Matrix> gather(const RebalancedBatch& batch, const Matrix& source, const Matrix& target) {
  const auto k = static_cast<Eigen::Index>(batch.pairs.size());
  Matrix xs(k, source.cols());
  Matrix ys(k, target.cols());
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto& p = batch.pairs[static_cast<std::size_t>(r)];
    if (p.source >= static_cast<std::size_t>(source.rows()) || p.target >= static_cast<std::size_t>(target.rows())) {
      throw std::out_of_range("gather: pair index outside the point sets");
    }
    xs.row(r) = source.row(static_cast<Eigen::Index>(p.source));
    ys.row(r) = target.row(static_cast<Eigen::Index>(p.target));
  }
  return {std::move(xs), std::move(ys)};
}

ReweightEstimate reweight_estimates(const Matrix& plan) {
  ReweightEstimate est;
  const auto [rows, cols] = marginals(plan);
  est.u_hat = static_cast<double>(plan.rows()) * rows;
  est.v_hat = static_cast<double>(plan.cols()) * cols;
  est.source_indices.resize(static_cast<std::size_t>(plan.rows()));
  est.target_indices.resize(static_cast<std::size_t>(plan.cols()));
  for (std::size_t i = 0; i < est.source_indices.size(); ++i) est.source_indices[i] = i;
  for (std::size_t j = 0; j < est.target_indices.size(); ++j) est.target_indices[j] = j;
  return est;
}

ReweightEstimate reweight_estimates(const TransportPlan& plan) { return reweight_estimates(plan.plan); }

// ---------------------------------------------------------------------------

double reweighting_loss(const Mlp& net, const Matrix& points, const Vector& targets, std::span<double> grad) {
  if (points.rows() != targets.size()) throw std::invalid_argument("reweighting_loss: one target per point required");
  if (points.rows() == 0) throw std::invalid_argument("reweighting_loss: empty batch");
  Mlp::Tape tape;
  const Matrix out = net.forward(points, tape);
  const Vector residual = out.col(0) - targets;
  const double n = static_cast<double>(points.rows());
  const double loss = residual.squaredNorm() / n;
  if (!grad.empty()) {
    const Matrix upstream = (2.0 / n) * residual;
    net.backward(tape, upstream, grad);
  }
  return loss;
}

namespace {
void require_scalar_nonnegative(const Mlp& net) {
  if (net.output_dim() != 1 || net.head() != OutputHead::softplus) {
    throw std::invalid_argument("reweighting net must have a single softplus output");
  }
}
}  // namespace

ReweightFit fit_reweighting(Mlp net, const std::vector<RegressionBatch>& batches, const ReweightTrainConfig& cfg) {
  if (batches.empty()) throw std::invalid_argument("fit_reweighting: no data");
  require_scalar_nonnegative(net);
  AdamState state(net.parameter_count(), cfg.optimizer);
  std::vector<double> grad(net.parameter_count());
  ReweightFit fit;
  fit.loss_history.reserve(static_cast<std::size_t>(std::max(cfg.iterations, 0)));
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto& batch = batches[static_cast<std::size_t>(it) % batches.size()];
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = reweighting_loss(net, batch.points, batch.targets, grad);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("fit_reweighting: non-finite loss at iteration " + std::to_string(it));
    }
    fit.loss_history.push_back(loss);
    adam_step(state, net.parameters(), grad);
  }
  fit.net = std::move(net);
  return fit;
}

RescalingLearner::RescalingLearner(int dim, const std::vector<int>& hidden, AdamConfig optimizer, std::uint64_t seed) {
  std::vector<int> sizes{dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  u_ = Mlp(sizes, OutputHead::softplus);
  v_ = Mlp(sizes, OutputHead::softplus);
  u_.initialize(seed);
  v_.initialize(seed + 1);
  u_state_ = AdamState(u_.parameter_count(), optimizer);
  v_state_ = AdamState(v_.parameter_count(), optimizer);
}

std::pair<double, double> RescalingLearner::step(const Matrix& source, const ReweightEstimate& estimate,
                                                 const Matrix& target) {
  std::vector<double> grad(u_.parameter_count(), 0.0);
  const double lu = reweighting_loss(u_, source, estimate.u_hat, grad);
  adam_step(u_state_, u_.parameters(), grad);
  std::fill(grad.begin(), grad.end(), 0.0);
  const double lv = reweighting_loss(v_, target, estimate.v_hat, grad);
  adam_step(v_state_, v_.parameters(), grad);
  return {lu, lv};
}

// ---------------------------------------------------------------------------

double reweighting_identity_residual(const TransportPlan& plan, const Vector& a, const Vector& b) {
  const auto side = [](const Vector& marginal, const Vector& weights, const Vector& potential, double lambda) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      const double expected = std::isinf(lambda) ? weights[i] : weights[i] * std::exp(-potential[i] / lambda);
      worst = std::max(worst, std::abs(marginal[i] - expected) / expected);
    }
    return worst;
  };
  return std::max(side(plan.row_marginal, a, plan.f, plan.lambda1), side(plan.col_marginal, b, plan.g, plan.lambda2));
}

RebalancingReport verify_rebalancing(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const SolverConfig& cfg) {
  const CostMatrix cost = cost_matrix(mu, nu);
  const TransportPlan unbalanced = solve(mu.weights, nu.weights, cost, cfg);

  SolverConfig balanced_cfg = cfg.balanced();
  balanced_cfg.epsilon_abs = unbalanced.epsilon;
  balanced_cfg.tolerance = resolve_tolerance(cfg, cost.mean_cost);
  const TransportPlan balanced = solve(unbalanced.row_marginal, unbalanced.col_marginal, cost, balanced_cfg);

  RebalancingReport r;
  r.tau1 = cfg.tau1;
  r.tau2 = cfg.tau2;
  r.epsilon = unbalanced.epsilon;
  r.unbalanced_mass = unbalanced.total_mass();
  r.frobenius_gap = (unbalanced.plan - balanced.plan).norm();
  r.relative_frobenius_gap = r.frobenius_gap / unbalanced.plan.norm();
  r.cost_gap = std::abs(unbalanced.transported_cost - balanced.transported_cost);
  r.reweighting_residual = reweighting_identity_residual(unbalanced, mu.weights, nu.weights);
  r.unbalanced_converged = unbalanced.converged;
  r.balanced_converged = balanced.converged;
  r.unbalanced_iterations = unbalanced.iterations_used;
  r.balanced_iterations = balanced.iterations_used;
  return r;
}

}  // namespace uot
