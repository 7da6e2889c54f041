#pragma once

#include <limits>
#include <optional>
#include <utility>

#include "uotkit/measures.hpp"
#include "uotkit/types.hpp"

namespace uot {

/// Marginal penalty. Only KL ships; the enum marks the extension point.
enum class Divergence { kl };

/// Entropic (U)OT solver settings.
///
/// epsilon defaults to epsilon_scale * mean(C); epsilon_abs overrides it.
/// tau_i = lambda_i / (lambda_i + epsilon) in (0, 1]; tau_i = 1 imposes the
/// i-th marginal exactly. tolerance is the sup-norm change of the dual
/// potentials over one sweep, in cost units; unset means 1e-6 * mean(C).
struct SolverConfig {
  double epsilon_scale = 0.01;
  std::optional<double> epsilon_abs;
  double tau1 = 1.0;
  double tau2 = 1.0;
  int max_iters = 10000;
  std::optional<double> tolerance;
  Divergence divergence = Divergence::kl;

  SolverConfig with_tau(double tau) const {
    SolverConfig c = *this;
    c.tau1 = c.tau2 = tau;
    return c;
  }
  SolverConfig balanced() const { return with_tau(1.0); }
};

/// Throws std::invalid_argument if any field is out of range.
void validate(const SolverConfig& cfg);

/// mean(C) when positive, else 1 (all-zero cost matrices still need a scale).
double reference_scale(double mean_cost);
double resolve_epsilon(const SolverConfig& cfg, double mean_cost);
double resolve_tolerance(const SolverConfig& cfg, double mean_cost);

inline constexpr double kInfinite = std::numeric_limits<double>::infinity();

/// lambda = epsilon * tau / (1 - tau); kInfinite at tau = 1.
double tau_to_lambda(double tau, double epsilon);

struct TransportPlan {
  Matrix plan;
  Vector f;
  Vector g;
  Vector row_marginal;
  Vector col_marginal;
  int iterations_used = 0;
  bool converged = false;
  /// <P, C>
  double transported_cost = 0.0;
  double epsilon = 0.0;
  double lambda1 = kInfinite;
  double lambda2 = kInfinite;
  /// Potential change over the last sweep.
  double final_residual = 0.0;

  double total_mass() const { return plan.sum(); }
};

/// Entropic Sinkhorn for
///   min_P <P,C> + lambda1 KL(P1|a) + lambda2 KL(P^T 1|b) + epsilon KL(P|a (x) b)
/// with KL(p|q) = sum p log(p/q) - p + q. Updates
///   f <- tau1 * softmin_eps(g - C; b),  g <- tau2 * softmin_eps(f - C; a)
/// until the potentials move by at most the tolerance, and materializes
///   P_ij = a_i b_j exp((f_i + g_j - C_ij) / epsilon).
/// Sweeps run as scaling iterations against a kernel with the current
/// potentials folded in; a sweep whose kernel sums underflow is redone in the
/// log domain. Zero-weight atoms are masked, not removed.
/// Non-convergence is reported through `converged`, never thrown.
TransportPlan solve(const Vector& a, const Vector& b, const CostMatrix& cost, const SolverConfig& cfg);
TransportPlan solve(const DiscreteMeasure& src, const DiscreteMeasure& tgt, const SolverConfig& cfg);

/// Balanced self-transport of a onto itself (C symmetric, taus ignored) by
/// the averaged fixed point f <- (f + softmin_eps(f - C; a)) / 2. Plain
/// Sinkhorn converges very slowly here because the kernel is close to
/// diagonal. Returns f = the half-step from g = the fixed point.
TransportPlan solve_symmetric(const Vector& a, const CostMatrix& cost, const SolverConfig& cfg);

/// (P 1, P^T 1)
std::pair<Vector, Vector> marginals(const Matrix& plan);
std::pair<Vector, Vector> marginals(const TransportPlan& plan);

/// sum_ij P_ij C_ij
double plan_cost(const Matrix& plan, const Matrix& cost);

/// Balanced entropic value <P,C> + eps KL(P|a (x) b), evaluated through the dual
/// <f,a> + <g,b> - eps (sum P - sum a (x) b), whose error is second order in
/// the potential error.
double entropic_value(const TransportPlan& plan, const Vector& a, const Vector& b);

struct SinkhornDivergence {
  double value = 0.0;
  double epsilon = 0.0;
  bool converged = true;
  TransportPlan cross, self_alpha, self_beta;
};

/// S(alpha, beta) = W(alpha, beta) - W(alpha, alpha)/2 - W(beta, beta)/2 with
/// balanced entropic values W and one epsilon for all three terms, taken
/// from the cross cost matrix. The config's taus are ignored.
SinkhornDivergence sinkhorn_divergence_detail(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                                              const SolverConfig& cfg);
double sinkhorn_divergence(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, const SolverConfig& cfg);

}  // namespace uot
