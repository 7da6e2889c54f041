#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "uotkit/types.hpp"

namespace uot {

/// Hidden-layer nonlinearity. smooth_gate is x * sigmoid(x).
enum class Activation : std::uint8_t { smooth_gate = 0 };
enum class OutputHead : std::uint8_t { linear = 0, softplus = 1 };

/// Fully connected network with a flat parameter vector. For each layer the
/// layout is the fan_out x fan_in weight matrix (row-major) followed by the
/// fan_out bias vector.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialized parameters.
  explicit Mlp(std::vector<int> layer_sizes, OutputHead head = OutputHead::linear,
               Activation activation = Activation::smooth_gate);

  /// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for
  /// weights and biases alike.
  void initialize(std::uint64_t seed);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  std::size_t layer_count() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  OutputHead head() const { return head_; }
  Activation activation() const { return activation_; }

  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  void set_parameters(std::span<const double> flat);

  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<Matrix> weight(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);

  /// Intermediate values kept for the backward pass.
  struct Tape {
    std::vector<Matrix> inputs;  // per layer: the matrix multiplied by W^T
    std::vector<Matrix> pre;     // per layer: pre-activation
  };

  /// Batched evaluation; one sample per row.
  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, Tape& tape) const;

  /// Reverse mode for the scalar sum(upstream .* output). Adds the parameter
  /// gradient into `grad` (length parameter_count()) and returns the gradient
  /// with respect to the inputs.
  Matrix backward(const Tape& tape, const Matrix& upstream, std::span<double> grad) const;

 private:
  std::size_t offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  OutputHead head_ = OutputHead::linear;
  Activation activation_ = Activation::smooth_gate;
};

/// Appends t as a trailing input column (time conditioning).
Matrix with_time(const Matrix& x, const Vector& t);

/// Single-point evaluation; when t is given it is appended to x.
Vector forward(const Mlp& net, const Vector& x, std::optional<double> t = std::nullopt);

struct Gradients {
  std::vector<double> params;
  Vector input;  // w.r.t. x only (the time coordinate is dropped)
};
Gradients backward(const Mlp& net, const Vector& x, std::optional<double> t, const Vector& upstream);

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, AdamConfig config) : m(n, 0.0), v(n, 0.0), cfg(config) {}

  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  AdamConfig cfg;
};

/// Bias-corrected Adam update in place. Throws std::invalid_argument on
/// length mismatch and std::runtime_error on a non-finite gradient (the
/// parameters are left untouched in both cases).
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// ---------------------------------------------------------------------------

/// Returns the loss; when `grad` is non-empty (length parameter_count(),
/// zeroed by the caller) the analytic gradient is accumulated into it.
using LossFn = std::function<double(const Mlp&, std::span<double> grad)>;

struct GradCheckOptions {
  int max_coordinates = 200;
  double step = 1e-5;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error.
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

/// Central finite differences on up to max_coordinates random parameters;
/// relative error |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult grad_check(const Mlp& net, const LossFn& loss, const GradCheckOptions& options = {});

// ---------------------------------------------------------------------------
// Checkpoints: "UOTMLP" magic, u32 version, u32 size count, u32 sizes...,
// u8 activation, u8 head, u64 parameter count, f64 parameters. All little-endian.

void save_mlp(const Mlp& net, std::ostream& out);
Mlp load_mlp(std::istream& in);
void save_mlp(const Mlp& net, const std::filesystem::path& path);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace uot
