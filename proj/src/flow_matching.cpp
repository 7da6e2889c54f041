#include "uotkit/flow_matching.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "uotkit/rebalance.hpp"

namespace uot {

const char* to_string(CouplingMode mode) {
  switch (mode) {
    case CouplingMode::independent: return "independent";
    case CouplingMode::balanced_ot: return "balanced_ot";
    case CouplingMode::unbalanced_ot: return "unbalanced_ot";
  }
  return "unknown";
}

FlowSample FlowBatch::at(std::size_t i) const {
  const auto r = static_cast<Eigen::Index>(i);
  FlowSample s;
  s.x0 = x0.row(r).transpose();
  s.x1 = x1.row(r).transpose();
  s.t = t[r];
  s.xt = xt.row(r).transpose();
  s.target_velocity = s.x1 - s.x0;
  return s;
}

void validate(const FmTrainConfig& cfg) {
  validate(cfg.solver);
  if (cfg.coupling != CouplingMode::independent && cfg.batch_size < 2) {
    throw std::invalid_argument("flow matching: OT couplings need batch_size >= 2");
  }
  if (cfg.batch_size < 1) throw std::invalid_argument("flow matching: batch_size must be positive");
  if (cfg.iterations < 0) throw std::invalid_argument("flow matching: iterations must be >= 0");
  if (!(cfg.sigma >= 0.0)) throw std::invalid_argument("flow matching: sigma must be >= 0");
}

double fm_loss(const Mlp& net, const FlowBatch& batch, std::span<double> grad) {
  if (batch.size() == 0) throw std::invalid_argument("fm_loss: empty batch");
  if (net.input_dim() != batch.xt.cols() + 1 || net.output_dim() != batch.xt.cols()) {
    throw std::invalid_argument("fm_loss: network shape does not match data dimension");
  }
  Mlp::Tape tape;
  const Matrix v = net.forward(with_time(batch.xt, batch.t), tape);
  const Matrix residual = v - batch.target_velocity();
  const double n = static_cast<double>(batch.size());
  const double loss = residual.squaredNorm() / n;
  if (!std::isfinite(loss)) throw std::runtime_error("fm_loss: non-finite loss");
  if (!grad.empty()) net.backward(tape, (2.0 / n) * residual, grad);
  return loss;
}

FmLoss fm_loss_and_grad(const Mlp& net, const FlowBatch& batch) {
  FmLoss out;
  out.grad.assign(net.parameter_count(), 0.0);
  out.loss = fm_loss(net, batch, out.grad);
  return out;
}

namespace {

void pair_independent(const Matrix& mu_batch, const Matrix& nu_batch, FlowBatch& out) {
  const Eigen::Index k = std::min(mu_batch.rows(), nu_batch.rows());
  out.x0 = mu_batch.topRows(k);
  out.x1 = nu_batch.topRows(k);
}

}  // namespace

FlowBatch make_training_batch(const Matrix& mu_batch, const Matrix& nu_batch, const FmTrainConfig& cfg, Rng& rng,
                              BatchInfo* info) {
  if (mu_batch.rows() == 0 || nu_batch.rows() == 0) throw std::invalid_argument("make_training_batch: empty batch");
  if (mu_batch.cols() != nu_batch.cols()) throw std::invalid_argument("make_training_batch: dimension mismatch");
  BatchInfo local;
  FlowBatch out;
  if (cfg.coupling == CouplingMode::independent) {
    pair_independent(mu_batch, nu_batch, out);
  } else {
    const SolverConfig solver = cfg.coupling == CouplingMode::balanced_ot ? cfg.solver.balanced() : cfg.solver;
    try {
      const Vector a = Vector::Constant(mu_batch.rows(), 1.0 / static_cast<double>(mu_batch.rows()));
      const Vector b = Vector::Constant(nu_batch.rows(), 1.0 / static_cast<double>(nu_batch.rows()));
      const TransportPlan plan = solve(a, b, cost_matrix(mu_batch, nu_batch), solver);
      local.solver_converged = plan.converged;
      const RebalancedBatch pairs = resample_pairs(plan, static_cast<std::size_t>(mu_batch.rows()), rng);
      std::tie(out.x0, out.x1) = gather(pairs, mu_batch, nu_batch);
    } catch (const std::exception& e) {
      std::clog << "warning: batch coupling failed (" << e.what() << "); using independent pairing\n";
      local.fell_back = true;
      pair_independent(mu_batch, nu_batch, out);
    }
  }
  const Eigen::Index k = out.x0.rows();
  out.t.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) out.t[i] = rng.uniform();
  out.xt = (1.0 - out.t.array()).matrix().asDiagonal() * out.x0 + out.t.asDiagonal() * out.x1;
  if (cfg.sigma > 0.0) {
    for (Eigen::Index i = 0; i < out.xt.size(); ++i) out.xt.data()[i] += cfg.sigma * rng.normal();
  }
  if (info) *info = local;
  return out;
}

Mlp make_velocity_field(int dim, const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> sizes{dim + 1};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(dim);
  Mlp net(sizes);
  net.initialize(seed);
  return net;
}

std::vector<std::size_t> sample_indices(const Vector& weights, std::size_t k, Rng& rng) {
  std::vector<double> cumulative(static_cast<std::size_t>(weights.size()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    total += weights[i];
    cumulative[static_cast<std::size_t>(i)] = total;
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_indices: zero total weight");
  std::vector<std::size_t> out(k);
  for (auto& idx : out) {
    const double u = rng.uniform() * total;
    idx = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    idx = std::min(idx, cumulative.size() - 1);
  }
  return out;
}

Matrix take_rows(const Matrix& points, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), points.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = points.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

FmTrainResult train_fm(const DiscreteMeasure& source, const DiscreteMeasure& target, const FmTrainConfig& cfg) {
  validate(cfg);
  if (source.dim() != target.dim()) throw std::invalid_argument("train_fm: source and target dimensions differ");
  Rng rng(cfg.seed);
  FmTrainResult result;
  result.net = make_velocity_field(source.dim(), cfg.hidden, rng());
  AdamState state(result.net.parameter_count(), cfg.optimizer);
  std::vector<double> grad(result.net.parameter_count());
  result.loss_history.reserve(static_cast<std::size_t>(cfg.iterations));
  const auto k = static_cast<std::size_t>(cfg.batch_size);

  for (int it = 0; it < cfg.iterations; ++it) {
    const Matrix mu_batch = take_rows(source.points, sample_indices(source.weights, k, rng));
    const Matrix nu_batch = take_rows(target.points, sample_indices(target.weights, k, rng));
    BatchInfo info;
    const FlowBatch batch = make_training_batch(mu_batch, nu_batch, cfg, rng, &info);
    result.solver_fallbacks += info.fell_back ? 1 : 0;
    result.unconverged_couplings += info.solver_converged ? 0 : 1;

    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    try {
      loss = fm_loss(result.net, batch, grad);
      adam_step(state, result.net.parameters(), grad);
    } catch (const std::runtime_error& e) {
      throw TrainingDiverged(std::string("train_fm: ") + e.what() + " at iteration " + std::to_string(it),
                             result.net, it);
    }
    result.loss_history.push_back(loss);
  }
  return result;
}

// ---------------------------------------------------------------------------

const char* to_string(OdeMethod method) { return method == OdeMethod::euler ? "euler" : "rk4"; }

OdeMethod ode_method_from_string(const std::string& name) {
  if (name == "euler") return OdeMethod::euler;
  if (name == "rk4") return OdeMethod::rk4;
  throw std::invalid_argument("unknown ODE method '" + name + "'");
}

VelocityFn velocity_of(const Mlp& net) {
  return [&net](double t, const Matrix& x) { return net.forward(with_time(x, Vector::Constant(x.rows(), t))); };
}

namespace {

Matrix advance(const VelocityFn& field, const Matrix& x, double t, double h, OdeMethod method) {
  if (method == OdeMethod::euler) return x + h * field(t, x);
  const Matrix k1 = field(t, x);
  const Matrix k2 = field(t + 0.5 * h, x + 0.5 * h * k1);
  const Matrix k3 = field(t + 0.5 * h, x + 0.5 * h * k2);
  const Matrix k4 = field(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void check_steps(int steps) {
  if (steps < 1) throw std::invalid_argument("integrate: steps must be >= 1");
}

}  // namespace

std::vector<Matrix> integrate_trajectory(const VelocityFn& field, const Matrix& x0, int steps, OdeMethod method) {
  check_steps(steps);
  const double h = 1.0 / steps;
  std::vector<Matrix> states{x0};
  states.reserve(static_cast<std::size_t>(steps) + 1);
  for (int s = 0; s < steps; ++s) {
    Matrix next = advance(field, states.back(), s * h, h, method);
    if (!next.allFinite()) throw std::runtime_error("integrate: non-finite state at step " + std::to_string(s + 1));
    states.push_back(std::move(next));
  }
  return states;
}

Matrix integrate(const VelocityFn& field, const Matrix& x0, int steps, OdeMethod method) {
  check_steps(steps);
  const double h = 1.0 / steps;
  Matrix x = x0;
  for (int s = 0; s < steps; ++s) {
    x = advance(field, x, s * h, h, method);
    if (!x.allFinite()) throw std::runtime_error("integrate: non-finite state at step " + std::to_string(s + 1));
  }
  return x;
}

Matrix integrate(const Mlp& field, const Matrix& x0, int steps, OdeMethod method) {
  return integrate(velocity_of(field), x0, steps, method);
}

Vector integrate(const Mlp& field, const Vector& x0, int steps, OdeMethod method) {
  return integrate(field, Matrix(x0.transpose()), steps, method).row(0).transpose();
}

double transport_cost(const VelocityFn& field, const Matrix& test_points, int steps, OdeMethod method) {
  if (test_points.rows() == 0) throw std::invalid_argument("transport_cost: no test points");
  const Matrix end = integrate(field, test_points, steps, method);
  return (end - test_points).rowwise().norm().mean();
}

double transport_cost(const Mlp& field, const Matrix& test_points, int steps, OdeMethod method) {
  return transport_cost(velocity_of(field), test_points, steps, method);
}

}  // namespace uot
