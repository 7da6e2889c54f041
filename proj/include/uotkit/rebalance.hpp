#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "uotkit/measures.hpp"
#include "uotkit/neural.hpp"
#include "uotkit/rng.hpp"
#include "uotkit/solver.hpp"

namespace uot {

/// Pointwise density-ratio estimates read off a batch coupling:
/// u_hat_i = n * (P 1)_i, v_hat_j = m * (P^T 1)_j.
struct ReweightEstimate {
  Vector u_hat;
  Vector v_hat;
  std::vector<std::size_t> source_indices;
  std::vector<std::size_t> target_indices;
};

struct IndexPair {
  std::size_t source = 0;
  std::size_t target = 0;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
  friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

/// Pairs drawn from the normalized coupling, in draw order, plus the
/// multiplicity of every distinct pair (sorted by index).
struct RebalancedBatch {
  std::vector<IndexPair> pairs;
  std::vector<std::pair<IndexPair, std::size_t>> counts;
  /// Mass of the plan before normalization.
  double plan_mass = 0.0;
};

/// k i.i.d. draws, with replacement, from the categorical law P_ij / sum(P).
RebalancedBatch resample_pairs(const Matrix& plan, std::size_t k, Rng& rng);
RebalancedBatch resample_pairs(const TransportPlan& plan, std::size_t k, Rng& rng);

/// Rows of `source` / `target` selected by the drawn pairs.
std::pair<Matrix, Matrix> gather(const RebalancedBatch& batch, const Matrix& source, const Matrix& target);

/// Expects a plan computed from uniform input weights 1/n and 1/m.
ReweightEstimate reweight_estimates(const Matrix& plan);
ReweightEstimate reweight_estimates(const TransportPlan& plan);

// ---------------------------------------------------------------------------
// Learned rescaling functions u_theta, v_theta.

struct RegressionBatch {
  Matrix points;
  Vector targets;
};

struct ReweightTrainConfig {
  int iterations = 500;
  AdamConfig optimizer;
};

struct ReweightFit {
  Mlp net;
  std::vector<double> loss_history;
};

/// mean_i (net(x_i) - target_i)^2; gradient accumulated when grad is non-empty.
double reweighting_loss(const Mlp& net, const Matrix& points, const Vector& targets, std::span<double> grad);

/// Regresses the (softplus-headed, scalar) net onto the targets, cycling over
/// the batches for cfg.iterations Adam steps. Throws std::invalid_argument on
/// an empty stream or a net that is not a nonnegative scalar map, and
/// std::runtime_error on a non-finite loss.
ReweightFit fit_reweighting(Mlp net, const std::vector<RegressionBatch>& batches, const ReweightTrainConfig& cfg);

/// Online version used inside training loops (learn_rescaling): one Adam step
/// per call on each of u_theta and v_theta.
class RescalingLearner {
 public:
  RescalingLearner(int dim, const std::vector<int>& hidden, AdamConfig optimizer, std::uint64_t seed);

  /// Returns (u loss, v loss) before the update.
  std::pair<double, double> step(const Matrix& source, const ReweightEstimate& estimate, const Matrix& target);

  const Mlp& u() const { return u_; }
  const Mlp& v() const { return v_; }

 private:
  Mlp u_, v_;
  AdamState u_state_, v_state_;
};

// ---------------------------------------------------------------------------

struct RebalancingReport {
  double tau1 = 1.0;
  double tau2 = 1.0;
  double epsilon = 0.0;
  double unbalanced_mass = 0.0;
  /// ||P_uot - P_bal||_F and the same divided by ||P_uot||_F.
  double frobenius_gap = 0.0;
  double relative_frobenius_gap = 0.0;
  /// |<P_uot, C> - <P_bal, C>|
  double cost_gap = 0.0;
  /// max_i |(P1)_i - a_i exp(-f_i / lambda1)| / (a_i exp(-f_i / lambda1)), and
  /// the column analogue; lambda = inf reads as exp(0) = 1.
  double reweighting_residual = 0.0;
  bool unbalanced_converged = false;
  bool balanced_converged = false;
  int unbalanced_iterations = 0;
  int balanced_iterations = 0;
};

/// Max relative violation of the reweighting identities for a solved plan.
double reweighting_identity_residual(const TransportPlan& plan, const Vector& a, const Vector& b);

/// Solves UOT(mu, nu), extracts its marginals, re-solves the balanced problem
/// between them at the same epsilon and compares the two plans.
RebalancingReport verify_rebalancing(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const SolverConfig& cfg);

}  // namespace uot
