#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "uotkit/measures.hpp"
#include "uotkit/neural.hpp"
#include "uotkit/rebalance.hpp"
#include "uotkit/solver.hpp"

namespace uot {

/// Monge gap of a batch map x_i -> y_i with uniform weights:
///   M = (1/n) sum_i c(x_i, y_i) - <P, C(x, y)>,
/// where P is the converged balanced entropic plan. The entropic cost
/// overestimates W_c by at most epsilon * log(n) (`bias_bound`), so M can dip
/// that far below zero.
struct MongeGapValue {
  double value = 0.0;
  double displacement = 0.0;
  double ot_cost = 0.0;
  double epsilon = 0.0;
  double bias_bound = 0.0;
  bool converged = false;
  TransportPlan plan;
};

MongeGapValue monge_gap(const Matrix& points, const Matrix& mapped, const SolverConfig& cfg);

enum class MgCoupling { balanced, unbalanced };
const char* to_string(MgCoupling mode);

struct MgTrainConfig {
  /// Sinkhorn-divergence fitting term (taus ignored, always balanced).
  SolverConfig fit_solver;
  /// Monge-gap term (taus ignored, always balanced).
  SolverConfig gap_solver;
  double fit_weight = 1.0;
  double gap_weight = 1.0;
  MgCoupling coupling = MgCoupling::balanced;
  /// Batch rebalancing coupling; its taus control unbalancedness.
  SolverConfig rebalance_solver = SolverConfig{}.with_tau(0.9);
  bool learn_rescaling = false;
  std::vector<int> rescaling_hidden{32, 32};
  int batch_size = 64;
  int iterations = 1000;
  std::vector<int> hidden{64, 64};
  AdamConfig optimizer;
  std::uint64_t seed = 0;
};

void validate(const MgTrainConfig& cfg);

/// Absolute epsilons used by one loss evaluation. Unless the solver configs
/// pin epsilon_abs, they scale with the input batches (fit: mean cost between
/// source and target batch; gap: mean cost within the source batch), so they
/// do not move with the network parameters.
struct MgEpsilons {
  double fit = 0.0;
  double gap = 0.0;
};
MgEpsilons resolve_mg_epsilons(const Matrix& source, const Matrix& target, const MgTrainConfig& cfg);

struct MgLossValue {
  double loss = 0.0;
  double fit = 0.0;
  double gap = 0.0;
  bool converged = true;
  /// d loss / d mapped, by the envelope rule (plans held at their optimum).
  Matrix grad_mapped;
};

/// loss = w_fit * S_eps(mapped, target) + w_gap * M(source -> mapped), where
/// inside the loss M uses the debiased entropic value
///   S(x, y) = W(x, y) - W(x, x) / 2 - W(y, y) / 2,  W = <P, C> + eps KL(P | a x b)
/// in place of W_c. S is a smooth optimal value, so the envelope gradient is
/// exact; monge_gap() above keeps the plain plan cost for reporting.
MgLossValue mg_loss_on_points(const Matrix& source, const Matrix& mapped, const Matrix& target,
                              const MgTrainConfig& cfg, const MgEpsilons& eps, bool with_grad = true);

/// Residual map T(x) = x + net(x); zero parameters give the identity.
Mlp make_point_map(int dim, const std::vector<int>& hidden, std::uint64_t seed);
Matrix map_points(const Mlp& net, const Matrix& points);

struct MgLoss {
  double loss = 0.0;
  double fit = 0.0;
  double gap = 0.0;
  std::vector<double> grad;
};

/// Full loss and its parameter gradient (envelope gradient chained through
/// the net by reverse mode).
MgLoss mg_loss_and_grad(const Mlp& net, const Matrix& source, const Matrix& target, const MgTrainConfig& cfg);

struct MgTrainResult {
  Mlp net;
  std::vector<double> loss_history;
  std::optional<RescalingLearner> rescaling;
};

/// Balanced mode trains on raw batches; unbalanced mode solves the batch UOT
/// coupling, resamples pairs from it and trains on those.
MgTrainResult train_mg(const DiscreteMeasure& source, const DiscreteMeasure& target, const MgTrainConfig& cfg);

}  // namespace uot
