#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uotkit/measures.hpp"
#include "uotkit/metrics.hpp"
#include "uotkit/solver.hpp"

namespace uot {

/// Fixed 12-significant-digit rendering used by every emitted CSV.
std::string format_number(double value);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Header `x0,...,x{d-1},weight,label`.
std::string measure_csv(const DiscreteMeasure& measure, std::span<const int> labels = {});
/// Accepts any header whose coordinate columns are named x0.. in order;
/// `weight` and `label` columns are optional (uniform weights, label 0).
LabeledMeasure parse_measure_csv(std::string_view text);

/// Header `t0,...,t{m-1}`, one row per source index.
std::string plan_csv(const Matrix& plan);
Matrix parse_plan_csv(std::string_view text);

/// `key = value` lines: iterations, converged, final_residual, epsilon,
/// lambda1, lambda2, total_mass, transported_cost, row_marginal, col_marginal
/// (marginals as space-separated lists).
std::string plan_diagnostics(const TransportPlan& plan);

/// Header `iter,loss`.
std::string loss_history_csv(std::span<const double> losses);
/// Header `point_id,t,x0,...`, one row per point per stored step.
std::string trajectory_csv(const std::vector<Matrix>& states);

/// Wide table: `dataset,estimator,mode,tau,seed` followed by the union of
/// metric names in first-seen order; missing metrics are left empty.
std::string reports_csv(const std::vector<EvalReport>& reports);

/// Splits a CSV document into rows of trimmed fields (no quoting support).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace uot
