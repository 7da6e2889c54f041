#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "uotkit/flow_matching.hpp"
#include "uotkit/measures.hpp"
#include "uotkit/metrics.hpp"
#include "uotkit/solver.hpp"

namespace uot {

enum class Estimator { fm, monge_gap, coupling_only };
const char* to_string(Estimator e);

/// How training pairs are built: `independent` is FM only; `unbalanced`
/// takes its taus from the grid.
enum class PairingMode { independent, balanced, unbalanced };
const char* to_string(PairingMode m);

struct TrainingSettings {
  int iterations = 1000;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::vector<int> hidden{128, 128, 128};
  double sigma = 0.0;
  int ode_steps = 100;
  OdeMethod ode_method = OdeMethod::rk4;
  double fit_weight = 1.0;
  double gap_weight = 1.0;
  double mg_epsilon_scale = 0.01;
  bool learn_rescaling = false;
};

struct ExperimentConfig {
  /// The per-run seed replaces dataset.seed.
  DatasetSpec dataset;
  /// Held-out evaluation samples come from seed + holdout_offset.
  std::uint64_t holdout_offset = 1000;
  Estimator estimator = Estimator::coupling_only;
  PairingMode coupling = PairingMode::unbalanced;
  std::vector<double> taus{1.0};
  std::vector<std::uint64_t> seeds{0};
  SolverConfig solver;
  TrainingSettings training;
  std::filesystem::path output = "uotkit_out";
};

/// Throws ConfigError naming the bad key.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& cfg);

struct RunOutcome {
  std::vector<EvalReport> reports;
  /// One line per failed cell.
  std::vector<std::string> failures;
  std::vector<std::filesystem::path> written;
};

/// Runs every seed x tau cell and writes metrics.csv, loss_history.csv,
/// plan_diag.csv and one SVG per cell into cfg.output.
RunOutcome run_experiment(const ExperimentConfig& cfg);

struct Fig2Options {
  std::filesystem::path output = "fig2_out";
  std::uint64_t seed = 0;
  int iterations = 5000;
  double epsilon = 0.1;
  int ode_steps = 100;
};

/// Mixture-of-uniforms experiment: couplings at tau in {1, 0.99, 0.9}, then
/// FM, OT-FM and UOT-FM (0.99, 0.9). Writes metrics.csv, loss_history.csv,
/// plan_diag.csv, eight panel SVGs and the combined fig2.svg.
RunOutcome reproduce_fig2(const Fig2Options& options);

/// Worker count: UOTKIT_THREADS when set (positive integer), otherwise the
/// hardware concurrency.
unsigned thread_budget();

}  // namespace uot
