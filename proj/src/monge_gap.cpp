#include "uotkit/monge_gap.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "uotkit/flow_matching.hpp"

namespace uot {

namespace {

Vector uniform_weights(Eigen::Index n) { return Vector::Constant(n, 1.0 / static_cast<double>(n)); }

SolverConfig pinned(const SolverConfig& cfg, double eps, double mean_cost) {
  SolverConfig c = cfg.balanced();
  c.epsilon_abs = eps;
  c.tolerance = resolve_tolerance(cfg, mean_cost);
  return c;
}

// Gradient of <P, C(y, z)> in y with C_ij = |y_i - z_j|^2 and P held fixed:
// row k is 2 sum_j P_kj (y_k - z_j).
Matrix cost_grad_rows(const Matrix& plan, const Matrix& y, const Matrix& z) {
  const Vector row_mass = plan.rowwise().sum();
  return 2.0 * (row_mass.asDiagonal() * y - plan * z);
}

}  // namespace

MongeGapValue monge_gap(const Matrix& points, const Matrix& mapped, const SolverConfig& cfg) {
  if (points.rows() != mapped.rows()) throw std::invalid_argument("monge_gap: points and images differ in count");
  if (points.rows() == 0) throw std::invalid_argument("monge_gap: empty batch");
  const CostMatrix cost = cost_matrix(points, mapped);
  const Vector w = uniform_weights(points.rows());
  MongeGapValue out;
  out.plan = solve(w, w, cost, cfg.balanced());
  out.epsilon = out.plan.epsilon;
  out.converged = out.plan.converged;
  out.displacement = cost.entries.diagonal().mean();
  out.ot_cost = out.plan.transported_cost;
  out.value = out.displacement - out.ot_cost;
  out.bias_bound = out.epsilon * std::log(static_cast<double>(points.rows()));
  return out;
}

const char* to_string(MgCoupling mode) { return mode == MgCoupling::balanced ? "balanced" : "unbalanced"; }

void validate(const MgTrainConfig& cfg) {
  validate(cfg.fit_solver);
  validate(cfg.gap_solver);
  validate(cfg.rebalance_solver);
  if (!(cfg.fit_weight > 0.0) || !(cfg.gap_weight > 0.0)) throw std::invalid_argument("monge gap: loss weights must be positive");
  if (cfg.batch_size < 2) throw std::invalid_argument("monge gap: batch_size must be >= 2");
  if (cfg.iterations < 0) throw std::invalid_argument("monge gap: iterations must be >= 0");
}

MgEpsilons resolve_mg_epsilons(const Matrix& source, const Matrix& target, const MgTrainConfig& cfg) {
  MgEpsilons eps;
  eps.fit = cfg.fit_solver.epsilon_abs ? *cfg.fit_solver.epsilon_abs
                                       : resolve_epsilon(cfg.fit_solver, cost_matrix(source, target).mean_cost);
  eps.gap = cfg.gap_solver.epsilon_abs ? *cfg.gap_solver.epsilon_abs
                                       : resolve_epsilon(cfg.gap_solver, cost_matrix(source, source).mean_cost);
  return eps;
}

MgLossValue mg_loss_on_points(const Matrix& source, const Matrix& mapped, const Matrix& target,
                              const MgTrainConfig& cfg, const MgEpsilons& eps, bool with_grad) {
  if (source.rows() != mapped.rows() || source.cols() != mapped.cols()) {
    throw std::invalid_argument("mg_loss: source and mapped batches differ in shape");
  }
  if (mapped.cols() != target.cols()) throw std::invalid_argument("mg_loss: target dimension mismatch");
  MgLossValue out;

  // Fitting term: Sinkhorn divergence between the pushforward and the target.
  const Vector wy = uniform_weights(mapped.rows());
  const Vector wz = uniform_weights(target.rows());
  const CostMatrix c_yz = cost_matrix(mapped, target);
  const SolverConfig fit_cfg = pinned(cfg.fit_solver, eps.fit, c_yz.mean_cost);
  const TransportPlan p_yz = solve(wy, wz, c_yz, fit_cfg);
  const TransportPlan p_yy = solve_symmetric(wy, cost_matrix(mapped, mapped), fit_cfg);
  const TransportPlan p_zz = solve_symmetric(wz, cost_matrix(target, target), fit_cfg);
  out.fit = entropic_value(p_yz, wy, wz) - 0.5 * entropic_value(p_yy, wy, wy) - 0.5 * entropic_value(p_zz, wz, wz);

  // Monge gap of source -> mapped, with W_c replaced by the debiased entropic
  // value S(x, y). Unlike <P, C> this is an optimal value in y, so holding the
  // plans fixed gives its exact gradient; it is still 0 for the identity.
  const Vector wx = uniform_weights(source.rows());
  const CostMatrix c_xy = cost_matrix(source, mapped);
  const SolverConfig gap_cfg = pinned(cfg.gap_solver, eps.gap, c_xy.mean_cost);
  const TransportPlan p_xy = solve(wx, wy, c_xy, gap_cfg);
  const TransportPlan p_xx = solve_symmetric(wx, cost_matrix(source, source), gap_cfg);
  const TransportPlan p_yy_gap = solve_symmetric(wy, cost_matrix(mapped, mapped), gap_cfg);
  const double debiased = entropic_value(p_xy, wx, wy) - 0.5 * entropic_value(p_xx, wx, wx) -
                          0.5 * entropic_value(p_yy_gap, wy, wy);
  out.gap = c_xy.entries.diagonal().mean() - debiased;

  out.converged = p_yz.converged && p_yy.converged && p_zz.converged && p_xy.converged && p_xx.converged &&
                  p_yy_gap.converged;
  out.loss = cfg.fit_weight * out.fit + cfg.gap_weight * out.gap;
  if (!std::isfinite(out.loss)) throw std::runtime_error("mg_loss: non-finite loss");

  if (with_grad) {
    const double n = static_cast<double>(mapped.rows());
    const Matrix sym = 0.5 * (p_yy.plan + p_yy.plan.transpose());
    const Matrix grad_fit = cost_grad_rows(p_yz.plan, mapped, target) - cost_grad_rows(sym, mapped, mapped);
    // Column side of <P, C(x, y)>: entry k is 2 sum_i P_ik (y_k - x_i).
    const Matrix sym_gap = 0.5 * (p_yy_gap.plan + p_yy_gap.plan.transpose());
    const Matrix grad_gap = (2.0 / n) * (mapped - source) - cost_grad_rows(p_xy.plan.transpose(), mapped, source) +
                            cost_grad_rows(sym_gap, mapped, mapped);
    out.grad_mapped = cfg.fit_weight * grad_fit + cfg.gap_weight * grad_gap;
  }
  return out;
}

Mlp make_point_map(int dim, const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> sizes{dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(dim);
  Mlp net(sizes);
  net.initialize(seed);
  return net;
}

Matrix map_points(const Mlp& net, const Matrix& points) { return points + net.forward(points); }

MgLoss mg_loss_and_grad(const Mlp& net, const Matrix& source, const Matrix& target, const MgTrainConfig& cfg) {
  Mlp::Tape tape;
  const Matrix mapped = source + net.forward(source, tape);
  const MgLossValue value = mg_loss_on_points(source, mapped, target, cfg, resolve_mg_epsilons(source, target, cfg));
  MgLoss out;
  out.loss = value.loss;
  out.fit = value.fit;
  out.gap = value.gap;
  out.grad.assign(net.parameter_count(), 0.0);
  net.backward(tape, value.grad_mapped, out.grad);
  return out;
}

MgTrainResult train_mg(const DiscreteMeasure& source, const DiscreteMeasure& target, const MgTrainConfig& cfg) {
  validate(cfg);
  if (source.dim() != target.dim()) throw std::invalid_argument("train_mg: source and target dimensions differ");
  Rng rng(cfg.seed);
  MgTrainResult result;
  result.net = make_point_map(source.dim(), cfg.hidden, rng());
  if (cfg.learn_rescaling) {
    result.rescaling.emplace(source.dim(), cfg.rescaling_hidden, cfg.optimizer, rng());
  }
  AdamState state(result.net.parameter_count(), cfg.optimizer);
  const auto n = static_cast<std::size_t>(cfg.batch_size);
  result.loss_history.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int it = 0; it < cfg.iterations; ++it) {
    Matrix xs = take_rows(source.points, sample_indices(source.weights, n, rng));
    Matrix ys = take_rows(target.points, sample_indices(target.weights, n, rng));
    if (cfg.coupling == MgCoupling::unbalanced) {
      const Vector w = uniform_weights(static_cast<Eigen::Index>(n));
      const TransportPlan plan = solve(w, w, cost_matrix(xs, ys), cfg.rebalance_solver);
      if (result.rescaling) result.rescaling->step(xs, reweight_estimates(plan), ys);
      std::tie(xs, ys) = gather(resample_pairs(plan, n, rng), xs, ys);
    }
    MgLoss loss;
    try {
      loss = mg_loss_and_grad(result.net, xs, ys, cfg);
      adam_step(state, result.net.parameters(), loss.grad);
    } catch (const std::runtime_error& e) {
      throw TrainingDiverged(std::string("train_mg: ") + e.what() + " at iteration " + std::to_string(it),
                             result.net, it);
    }
    result.loss_history.push_back(loss.loss);
  }
  return result;
}

}  // namespace uot
