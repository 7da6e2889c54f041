#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uotkit/measures.hpp"
#include "uotkit/neural.hpp"
#include "uotkit/rng.hpp"
#include "uotkit/solver.hpp"

namespace uot {

/// How (x0, x1) training pairs are formed from a source and a target batch.
enum class CouplingMode { independent, balanced_ot, unbalanced_ot };

const char* to_string(CouplingMode mode);

struct FlowSample {
  Vector x0;
  Vector x1;
  double t = 0.0;
  Vector xt;
  Vector target_velocity;
};

/// One training batch, one sample per row.
struct FlowBatch {
  Matrix x0;
  Matrix x1;
  Vector t;
  Matrix xt;

  std::size_t size() const { return static_cast<std::size_t>(x0.rows()); }
  Matrix target_velocity() const { return x1 - x0; }
  FlowSample at(std::size_t i) const;
};

struct FmTrainConfig {
  CouplingMode coupling = CouplingMode::unbalanced_ot;
  /// Batch coupling solver; its taus are forced to 1 in balanced_ot mode.
  SolverConfig solver;
  int batch_size = 128;
  int iterations = 5000;
  /// Gaussian-path noise: x_t = (1-t) x0 + t x1 + sigma * xi.
  double sigma = 0.0;
  std::vector<int> hidden{128, 128, 128};
  AdamConfig optimizer;
  std::uint64_t seed = 0;
};

void validate(const FmTrainConfig& cfg);

/// mean_i || v(t_i, x_t,i) - (x1_i - x0_i) ||^2, gradient accumulated into grad
/// when it is non-empty.
double fm_loss(const Mlp& net, const FlowBatch& batch, std::span<double> grad);

struct FmLoss {
  double loss = 0.0;
  std::vector<double> grad;
};
FmLoss fm_loss_and_grad(const Mlp& net, const FlowBatch& batch);

struct BatchInfo {
  bool fell_back = false;
  bool solver_converged = true;
};

/// Pairs rows of the two batches (by index when independent, by resampling
/// the batch coupling otherwise), draws t ~ U(0,1) per pair and builds x_t.
/// A solver exception degrades to independent pairing (flagged in `info`).
FlowBatch make_training_batch(const Matrix& mu_batch, const Matrix& nu_batch, const FmTrainConfig& cfg, Rng& rng,
                              BatchInfo* info = nullptr);

struct FmTrainResult {
  Mlp net;
  std::vector<double> loss_history;
  int solver_fallbacks = 0;
  int unconverged_couplings = 0;
};

/// Thrown when training produces a non-finite loss; carries the last finite net.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, Mlp last_good, int iteration)
      : std::runtime_error(what), last_good_(std::move(last_good)), iteration_(iteration) {}
  const Mlp& last_good() const { return last_good_; }
  int iteration() const { return iteration_; }

 private:
  Mlp last_good_;
  int iteration_;
};

/// Velocity network for d-dimensional data: input d + 1 (time last), output d.
Mlp make_velocity_field(int dim, const std::vector<int>& hidden, std::uint64_t seed);

FmTrainResult train_fm(const DiscreteMeasure& source, const DiscreteMeasure& target, const FmTrainConfig& cfg);

/// Batch draw of k indices from the categorical law given by `weights`.
std::vector<std::size_t> sample_indices(const Vector& weights, std::size_t k, Rng& rng);
Matrix take_rows(const Matrix& points, const std::vector<std::size_t>& rows);

// ---------------------------------------------------------------------------
// ODE integration of dx/dt = v(t, x) on [0, 1].

enum class OdeMethod { euler, rk4 };
const char* to_string(OdeMethod method);
OdeMethod ode_method_from_string(const std::string& name);

/// v(t, X) for a batch of states X (one per row).
using VelocityFn = std::function<Matrix(double, const Matrix&)>;

VelocityFn velocity_of(const Mlp& net);

/// Fixed-step endpoint psi_1(x0) for every row of x0.
Matrix integrate(const VelocityFn& field, const Matrix& x0, int steps, OdeMethod method);
Matrix integrate(const Mlp& field, const Matrix& x0, int steps, OdeMethod method);
Vector integrate(const Mlp& field, const Vector& x0, int steps, OdeMethod method);

/// States at t = 0, 1/steps, ..., 1.
std::vector<Matrix> integrate_trajectory(const VelocityFn& field, const Matrix& x0, int steps, OdeMethod method);

/// mean_i || psi_1(x_i) - x_i ||
double transport_cost(const VelocityFn& field, const Matrix& test_points, int steps, OdeMethod method);
double transport_cost(const Mlp& field, const Matrix& test_points, int steps, OdeMethod method);

}  // namespace uot
