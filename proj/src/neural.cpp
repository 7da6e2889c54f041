#include "uotkit/neural.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "uotkit/rng.hpp"

namespace uot {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes, OutputHead head, Activation activation)
    : sizes_(std::move(layer_sizes)), head_(head), activation_(activation) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
  for (int s : sizes_) {
    if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l] + 1) * static_cast<std::size_t>(sizes_[l + 1]);
  }
  params_.assign(total, 0.0);
}

void Mlp::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    auto w = weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    auto b = bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
  }
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != params_.size()) {
    throw std::invalid_argument("Mlp::set_parameters: expected " + std::to_string(params_.size()) + " values, got " +
                                std::to_string(flat.size()));
  }
  std::copy(flat.begin(), flat.end(), params_.begin());
}

Eigen::Map<const Matrix> Mlp::weight(std::size_t layer) const {
  return {params_.data() + offset(layer), sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<Matrix> Mlp::weight(std::size_t layer) {
  return {params_.data() + offset(layer), sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<const Vector> Mlp::bias(std::size_t layer) const {
  return {params_.data() + offset(layer) + static_cast<std::size_t>(sizes_[layer]) * sizes_[layer + 1],
          sizes_[layer + 1]};
}
Eigen::Map<Vector> Mlp::bias(std::size_t layer) {
  return {params_.data() + offset(layer) + static_cast<std::size_t>(sizes_[layer]) * sizes_[layer + 1],
          sizes_[layer + 1]};
}

Matrix Mlp::forward(const Matrix& inputs) const {
  Tape scratch;
  return forward(inputs, scratch);
}

Matrix Mlp::forward(const Matrix& inputs, Tape& tape) const {
  if (inputs.cols() != input_dim()) {
    throw std::invalid_argument("Mlp::forward: input has " + std::to_string(inputs.cols()) + " columns, expected " +
                                std::to_string(input_dim()));
  }
  const std::size_t layers = layer_count();
  tape.inputs.resize(layers);
  tape.pre.resize(layers);
  Matrix current = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    tape.inputs[l] = std::move(current);
    Matrix z = tape.inputs[l] * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    tape.pre[l] = z;
    const bool last = l + 1 == layers;
    if (!last) {
      current = z.unaryExpr([](double v) { return v * sigmoid(v); });
    } else if (head_ == OutputHead::softplus) {
      current = z.unaryExpr([](double v) { return softplus(v); });
    } else {
      current = std::move(z);
    }
  }
  return current;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& upstream, std::span<double> grad) const {
  const std::size_t layers = layer_count();
  if (grad.size() != params_.size()) throw std::invalid_argument("Mlp::backward: gradient buffer has wrong length");
  if (tape.pre.size() != layers || upstream.rows() != tape.pre.back().rows() ||
      upstream.cols() != output_dim()) {
    throw std::invalid_argument("Mlp::backward: upstream shape does not match the forward pass");
  }
  Matrix delta = upstream;
  if (head_ == OutputHead::softplus) {
    delta.array() *= tape.pre.back().unaryExpr([](double v) { return sigmoid(v); }).array();
  }
  for (std::size_t l = layers; l-- > 0;) {
    Eigen::Map<Matrix> gw(grad.data() + offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<Vector> gb(grad.data() + offset(l) + static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1],
                          sizes_[l + 1]);
    gw.noalias() += delta.transpose() * tape.inputs[l];
    gb.noalias() += delta.colwise().sum().transpose();
    Matrix back = delta * weight(l);
    if (l > 0) {
      back.array() *= tape.pre[l - 1]
                          .unaryExpr([](double v) {
                            const double s = sigmoid(v);
                            return s * (1.0 + v * (1.0 - s));
                          })
                          .array();
    }
    delta = std::move(back);
  }
  return delta;
}

Matrix with_time(const Matrix& x, const Vector& t) {
  if (t.size() != x.rows()) throw std::invalid_argument("with_time: one time value per row required");
  Matrix out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()) = t;
  return out;
}

namespace {
Matrix single_row(const Mlp& net, const Vector& x, std::optional<double> t) {
  const Eigen::Index extra = t ? 1 : 0;
  if (x.size() + extra != net.input_dim()) {
    throw std::invalid_argument("forward: point of dimension " + std::to_string(x.size()) +
                                (t ? " plus time" : "") + " does not match network input " +
                                std::to_string(net.input_dim()));
  }
  Matrix row(1, x.size() + extra);
  row.leftCols(x.size()) = x.transpose();
  if (t) row(0, x.size()) = *t;
  return row;
}
}  // namespace

Vector forward(const Mlp& net, const Vector& x, std::optional<double> t) {
  return net.forward(single_row(net, x, t)).row(0).transpose();
}

Gradients backward(const Mlp& net, const Vector& x, std::optional<double> t, const Vector& upstream) {
  if (upstream.size() != net.output_dim()) throw std::invalid_argument("backward: upstream has wrong dimension");
  Mlp::Tape tape;
  net.forward(single_row(net, x, t), tape);
  Gradients g;
  g.params.assign(net.parameter_count(), 0.0);
  const Matrix input_grad = net.backward(tape, upstream.transpose(), g.params);
  g.input = input_grad.row(0).head(x.size()).transpose();
  return g;
}

// ---------------------------------------------------------------------------

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment lengths differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw std::runtime_error("adam_step: non-finite gradient at coordinate " + std::to_string(i) + " (step " +
                               std::to_string(state.step + 1) + ")");
    }
  }
  const AdamConfig& c = state.cfg;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const Mlp& net, const LossFn& loss, const GradCheckOptions& options) {
  const std::size_t n = net.parameter_count();
  std::vector<double> analytic(n, 0.0);
  loss(net, analytic);

  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  const std::size_t count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(options.max_coordinates, 0)));
  Rng rng(options.seed);
  for (std::size_t i = 0; i < count; ++i) std::swap(coords[i], coords[i + rng.index(n - i)]);

  GradCheckResult result;
  Mlp probe = net;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t idx = coords[k];
    const double original = net.parameters()[idx];
    probe.parameters()[idx] = original + options.step;
    const double up = loss(probe, {});
    probe.parameters()[idx] = original - options.step;
    const double down = loss(probe, {});
    probe.parameters()[idx] = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), options.floor});
    const double err = std::abs(analytic[idx] - numeric) / denom;
    if (k == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = idx;
    }
  }
  result.coordinates_checked = count;
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 6> kMagic{'U', 'O', 'T', 'M', 'L', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("load_mlp: truncated checkpoint");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void save_mlp(const Mlp& net, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int s : net.layer_sizes()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(net.activation()));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(net.head()));
  put_le<std::uint64_t>(out, net.parameter_count());
  for (double p : net.parameters()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p));
  if (!out) throw std::runtime_error("save_mlp: write failed");
}

Mlp load_mlp(std::istream& in) {
  std::array<char, kMagic.size()> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("load_mlp: not a network checkpoint");
  if (get_le<std::uint32_t>(in) != kFormatVersion) throw std::runtime_error("load_mlp: unsupported version");
  const auto count = get_le<std::uint32_t>(in);
  if (count < 2 || count > 1024) throw std::runtime_error("load_mlp: implausible layer count");
  std::vector<int> sizes(count);
  for (auto& s : sizes) s = static_cast<int>(get_le<std::uint32_t>(in));
  const auto activation = get_le<std::uint8_t>(in);
  const auto head = get_le<std::uint8_t>(in);
  if (activation != 0 || head > 1) throw std::runtime_error("load_mlp: unknown activation or head");
  Mlp net(sizes, static_cast<OutputHead>(head), static_cast<Activation>(activation));
  if (get_le<std::uint64_t>(in) != net.parameter_count()) throw std::runtime_error("load_mlp: parameter count mismatch");
  for (double& p : net.parameters()) p = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return net;
}

void save_mlp(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_mlp: cannot open " + path.string());
  save_mlp(net, out);
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_mlp: cannot open " + path.string());
  return load_mlp(in);
}

}  // namespace uot
