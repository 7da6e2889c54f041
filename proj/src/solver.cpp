#include "uotkit/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace uot {

void validate(const SolverConfig& cfg) {
  if (!(cfg.tau1 > 0.0 && cfg.tau1 <= 1.0)) throw std::invalid_argument("solver: tau1 must lie in (0, 1]");
  if (!(cfg.tau2 > 0.0 && cfg.tau2 <= 1.0)) throw std::invalid_argument("solver: tau2 must lie in (0, 1]");
  if (!(cfg.epsilon_scale > 0.0) || !std::isfinite(cfg.epsilon_scale)) {
    throw std::invalid_argument("solver: epsilon_scale must be positive");
  }
  if (cfg.epsilon_abs && !(*cfg.epsilon_abs > 0.0 && std::isfinite(*cfg.epsilon_abs))) {
    throw std::invalid_argument("solver: epsilon_abs must be positive");
  }
  if (cfg.tolerance && !(*cfg.tolerance > 0.0)) throw std::invalid_argument("solver: tolerance must be positive");
  if (cfg.max_iters < 1) throw std::invalid_argument("solver: max_iters must be positive");
}

double reference_scale(double mean_cost) { return mean_cost > 0.0 ? mean_cost : 1.0; }

double resolve_epsilon(const SolverConfig& cfg, double mean_cost) {
  return cfg.epsilon_abs ? *cfg.epsilon_abs : cfg.epsilon_scale * reference_scale(mean_cost);
}

double resolve_tolerance(const SolverConfig& cfg, double mean_cost) {
  return cfg.tolerance ? *cfg.tolerance : 1e-6 * reference_scale(mean_cost);
}

double tau_to_lambda(double tau, double epsilon) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau_to_lambda: tau must lie in (0, 1]");
  if (!(epsilon > 0.0)) throw std::invalid_argument("tau_to_lambda: epsilon must be positive");
  if (tau == 1.0) return kInfinite;
  return epsilon * tau / (1.0 - tau);
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kKernelFloor = 1e-280;
constexpr double kMaxShift = 30.0;
constexpr double kStageFactor = 0.5;
// Warm-up stages stop early: they only have to land near the next stage.
constexpr double kStageSlack = 10.0;
constexpr double kStageRelTol = 1e-3;
constexpr int kStageSweeps = 1000;

Vector safe_log(const Vector& w) {
  Vector out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = w[i] > 0.0 ? std::log(w[i]) : kNegInf;
  return out;
}

void check_masses(const Vector& w, const char* name) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0) {
      throw std::invalid_argument(std::string("solve: ") + name + " must be finite and nonnegative");
    }
    total += w[i];
  }
  if (!(total > 0.0)) throw std::invalid_argument(std::string("solve: ") + name + " has zero total mass");
}

// potential_i = -tau * eps * log sum_j exp(log_w_j + other_j / eps + scaled_ij),
// where scaled = -C / eps, one row per output index. Masked (-inf) terms are
// skipped; summation order is fixed.
void softmin_update(const Matrix& scaled, const Vector& log_w, const Vector& other, double eps, double tau,
                    Vector& out, std::vector<double>& buffer) {
  const Eigen::Index rows = scaled.rows();
  const Eigen::Index cols = scaled.cols();
  buffer.resize(static_cast<std::size_t>(cols));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double* row = scaled.data() + i * cols;
    double peak = kNegInf;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double v = log_w[j] == kNegInf ? kNegInf : log_w[j] + other[j] / eps + row[j];
      buffer[static_cast<std::size_t>(j)] = v;
      peak = std::max(peak, v);
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double v = buffer[static_cast<std::size_t>(j)];
      if (v != kNegInf) sum += std::exp(v - peak);
    }
    out[i] = -tau * eps * (peak + std::log(sum));
  }
}

}  // namespace

TransportPlan solve(const Vector& a, const Vector& b, const CostMatrix& cost, const SolverConfig& cfg) {
  validate(cfg);
  const Matrix& C = cost.entries;
  if (C.rows() != a.size() || C.cols() != b.size()) {
    throw std::invalid_argument("solve: cost matrix is " + std::to_string(C.rows()) + "x" + std::to_string(C.cols()) +
                                " but marginals have sizes " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
  }
  if (!C.allFinite()) throw std::invalid_argument("solve: non-finite cost entries");
  check_masses(a, "a");
  check_masses(b, "b");

  const double eps = resolve_epsilon(cfg, cost.mean_cost);
  const double tol = resolve_tolerance(cfg, cost.mean_cost);

  TransportPlan out;
  out.epsilon = eps;
  out.lambda1 = tau_to_lambda(cfg.tau1, eps);
  out.lambda2 = tau_to_lambda(cfg.tau2, eps);

  const Vector log_a = safe_log(a);
  const Vector log_b = safe_log(b);

  // Scaling iterations against a kernel that has the potentials (f_abs,
  // g_abs) folded in: f = tau1 * (f_abs - eps * log(G (b .* v))), and
  // symmetrically for g. The kernel is rebuilt whenever the scalings drift
  // far from 1 or a kernel sum underflows; the latter half-step is redone
  // in the log domain.
  //
  // Balanced problems reach small eps by halving from max(C), warm-starting
  // each stage; a cold start at eps = 0.01 * mean(C) often needs 1e4+ sweeps.
  // With tau < 1 the updates contract on their own and the warm-up only
  // costs sweeps.
  Vector f = Vector::Zero(a.size());
  Vector g = Vector::Zero(b.size());
  Vector f_abs = f;
  Vector g_abs = g;
  Matrix scaled(C.rows(), C.cols());
  Matrix scaled_t;
  Matrix kernel(C.rows(), C.cols());
  Vector u(a.size());
  Vector v(b.size());
  Vector f_next = f;
  Vector g_next = g;
  Vector sums;
  std::vector<double> buffer;
  const bool balanced = cfg.tau1 == 1.0 && cfg.tau2 == 1.0;
  double stage_eps = balanced ? std::max(eps, C.maxCoeff()) : eps;

  auto rebuild = [&] {
    f_abs = f_next;
    g_abs = g_next;
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
      for (Eigen::Index j = 0; j < C.cols(); ++j) {
        kernel(i, j) = std::exp((f_abs[i] + g_abs[j]) / stage_eps + scaled(i, j));
      }
    }
    u.setOnes();
    v.setOnes();
  };
  // Returns false when the kernel sums cannot be trusted.
  auto kernel_half = [&](const Vector& s, const Vector& base, double tau, Vector& out, Vector& scale) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (!(s[i] > kKernelFloor) || !std::isfinite(s[i])) return false;
    }
    bool drifted = false;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      out[i] = tau * (base[i] - stage_eps * std::log(s[i]));
      const double shift = (out[i] - base[i]) / stage_eps;
      if (std::abs(shift) > kMaxShift) drifted = true;
      scale[i] = std::exp(std::min(shift, kMaxShift));
    }
    return !drifted;
  };

  double residual = kInfinite;
  int it = 0;
  while (true) {
    const bool last = stage_eps <= eps;
    const double stage_tol = last ? tol : std::max(kStageSlack * tol, kStageRelTol * stage_eps);
    const int stage_end = last ? cfg.max_iters : std::min(cfg.max_iters, it + kStageSweeps);
    scaled = -C / stage_eps;
    scaled_t = scaled.transpose();
    rebuild();
    while (it < stage_end) {
      ++it;
      sums.noalias() = kernel * b.cwiseProduct(v);
      g_next = g;
      if (!kernel_half(sums, f_abs, cfg.tau1, f_next, u)) {
        softmin_update(scaled, log_b, g, stage_eps, cfg.tau1, f_next, buffer);
        rebuild();
      }
      sums.noalias() = kernel.transpose() * a.cwiseProduct(u);
      if (!kernel_half(sums, g_abs, cfg.tau2, g_next, v)) {
        softmin_update(scaled_t, log_a, f_next, stage_eps, cfg.tau2, g_next, buffer);
        rebuild();
      }
      if (!f_next.allFinite() || !g_next.allFinite()) {
        throw std::runtime_error("solve: potentials became non-finite after " + std::to_string(it) + " sweeps");
      }
      residual = std::max((f_next - f).lpNorm<Eigen::Infinity>(), (g_next - g).lpNorm<Eigen::Infinity>());
      f = f_next;
      g = g_next;
      if (residual <= stage_tol) break;
    }
    if (last) {
      out.converged = residual <= tol;
      break;
    }
    if (it >= cfg.max_iters) break;
    stage_eps = std::max(eps, kStageFactor * stage_eps);
  }

  out.plan.resize(C.rows(), C.cols());
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      const double lw = log_a[i] + log_b[j];
      out.plan(i, j) = lw == kNegInf ? 0.0 : std::exp(lw + (f[i] + g[j]) / eps - C(i, j) / eps);
    }
  }
  out.f = std::move(f);
  out.g = std::move(g);
  std::tie(out.row_marginal, out.col_marginal) = marginals(out.plan);
  out.transported_cost = plan_cost(out.plan, C);
  out.iterations_used = it;
  out.final_residual = residual;
  return out;
}

TransportPlan solve(const DiscreteMeasure& src, const DiscreteMeasure& tgt, const SolverConfig& cfg) {
  return solve(src.weights, tgt.weights, cost_matrix(src, tgt), cfg);
}

TransportPlan solve_symmetric(const Vector& a, const CostMatrix& cost, const SolverConfig& cfg) {
  validate(cfg);
  const Matrix& C = cost.entries;
  if (C.rows() != a.size() || C.cols() != a.size()) {
    throw std::invalid_argument("solve_symmetric: cost matrix is " + std::to_string(C.rows()) + "x" +
                                std::to_string(C.cols()) + " but the measure has " + std::to_string(a.size()) +
                                " atoms");
  }
  if (!C.allFinite()) throw std::invalid_argument("solve_symmetric: non-finite cost entries");
  check_masses(a, "a");

  const double eps = resolve_epsilon(cfg, cost.mean_cost);
  const double tol = resolve_tolerance(cfg, cost.mean_cost);
  const Matrix scaled = -C / eps;
  const Vector log_a = safe_log(a);

  TransportPlan out;
  out.epsilon = eps;
  Vector f = Vector::Zero(a.size());
  Vector next(a.size());
  std::vector<double> buffer;
  double residual = kInfinite;
  int it = 0;
  while (it < cfg.max_iters) {
    ++it;
    softmin_update(scaled, log_a, f, eps, 1.0, next, buffer);
    next = 0.5 * (f + next);
    if (!next.allFinite()) {
      throw std::runtime_error("solve_symmetric: potential became non-finite after " + std::to_string(it) + " sweeps");
    }
    residual = (next - f).lpNorm<Eigen::Infinity>();
    f = next;
    if (residual <= tol) {
      out.converged = true;
      break;
    }
  }
  // One plain half-step at the fixed point keeps the plan's rows exact.
  softmin_update(scaled, log_a, f, eps, 1.0, next, buffer);
  out.plan.resize(C.rows(), C.cols());
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      const double lw = log_a[i] + log_a[j];
      out.plan(i, j) = lw == kNegInf ? 0.0 : std::exp(lw + (next[i] + f[j]) / eps + scaled(i, j));
    }
  }
  out.f = next;
  out.g = f;
  std::tie(out.row_marginal, out.col_marginal) = marginals(out.plan);
  out.transported_cost = plan_cost(out.plan, C);
  out.iterations_used = it;
  out.final_residual = residual;
  return out;
}

std::pair<Vector, Vector> marginals(const Matrix& plan) {
  return {plan.rowwise().sum(), plan.colwise().sum().transpose()};
}

std::pair<Vector, Vector> marginals(const TransportPlan& plan) { return marginals(plan.plan); }

double plan_cost(const Matrix& plan, const Matrix& cost) {
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
    throw std::invalid_argument("plan_cost: shape mismatch");
  }
  return plan.cwiseProduct(cost).sum();
}

double entropic_value(const TransportPlan& plan, const Vector& a, const Vector& b) {
  return plan.f.dot(a) + plan.g.dot(b) - plan.epsilon * (plan.total_mass() - a.sum() * b.sum());
}

SinkhornDivergence sinkhorn_divergence_detail(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                                              const SolverConfig& cfg) {
  const CostMatrix cross = cost_matrix(alpha, beta);
  SolverConfig common = cfg.balanced();
  common.epsilon_abs = resolve_epsilon(cfg, cross.mean_cost);
  common.tolerance = resolve_tolerance(cfg, cross.mean_cost);

  SinkhornDivergence out;
  out.epsilon = *common.epsilon_abs;
  out.cross = solve(alpha.weights, beta.weights, cross, common);
  out.self_alpha = solve_symmetric(alpha.weights, cost_matrix(alpha, alpha), common);
  out.self_beta = solve_symmetric(beta.weights, cost_matrix(beta, beta), common);
  out.converged = out.cross.converged && out.self_alpha.converged && out.self_beta.converged;
  out.value = entropic_value(out.cross, alpha.weights, beta.weights) -
              0.5 * entropic_value(out.self_alpha, alpha.weights, alpha.weights) -
              0.5 * entropic_value(out.self_beta, beta.weights, beta.weights);
  return out;
}

double sinkhorn_divergence(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, const SolverConfig& cfg) {
  return sinkhorn_divergence_detail(alpha, beta, cfg).value;
}

}  // namespace uot
