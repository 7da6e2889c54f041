#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uotkit/types.hpp"

namespace uot {

/// Weighted point cloud. Row i of `points` carries mass `weights[i]`.
struct DiscreteMeasure {
  Matrix points;
  Vector weights;
  bool normalized = false;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
  double total_mass() const { return weights.sum(); }
};

/// Uniform weights 1/n when `weights` is empty (the result is then flagged
/// normalized); otherwise weights are taken verbatim and the flag reflects
/// whether they sum to one within 1e-12.
DiscreteMeasure make_measure(Matrix points, std::optional<Vector> weights = std::nullopt);
DiscreteMeasure make_measure(const std::vector<std::vector<double>>& points,
                             std::optional<std::vector<double>> weights = std::nullopt);

enum class GroundCost { sq_euclidean };

struct CostMatrix {
  Matrix entries;
  double mean_cost = 0.0;
};

CostMatrix cost_matrix(const Matrix& x, const Matrix& y, GroundCost cost = GroundCost::sq_euclidean);
CostMatrix cost_matrix(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                       GroundCost cost = GroundCost::sq_euclidean);

// ---------------------------------------------------------------------------
// Synthetic datasets

enum class DatasetKind { uniform_mixture, gaussian_imbalance, gaussian_outliers };
enum class Role { source, target };

struct UniformBox {
  std::vector<double> lo, hi;
  int count = 0;
  int label = 0;
};

struct GaussianBlob {
  std::vector<double> center;
  int count = 0;
  int label = 0;
};

/// Label assigned to injected outliers.
inline constexpr int kOutlierLabel = -1;

struct DatasetSpec {
  DatasetKind kind = DatasetKind::uniform_mixture;
  std::uint64_t seed = 0;
  std::vector<UniformBox> source_boxes, target_boxes;
  std::vector<GaussianBlob> source_blobs, target_blobs;
  double noise_scale = 0.3;
  /// Outliers per role, as a fraction of that role's inlier count.
  double outlier_fraction = 0.0;

  /// Two-box mixture: 180 bottom-left + 120 bottom-right sources, 180
  /// top-right + 120 top-left targets. Label 0 = left column, 1 = right.
  static DatasetSpec uniform_mixture_default(std::uint64_t seed = 0);
  /// Two classes whose proportions flip between source (150/50) and
  /// target (50/150). Label 0 = class A, 1 = class B.
  static DatasetSpec gaussian_imbalance_default(std::uint64_t seed = 0);
  /// Two balanced classes plus far-away outliers in both roles.
  static DatasetSpec gaussian_outliers_default(std::uint64_t seed = 0);
};

/// Throws std::invalid_argument on non-positive counts, bad box bounds,
/// dimension mismatches or outlier_fraction outside [0, 1).
void validate(const DatasetSpec& spec);

/// Cluster labels travel next to the measure, index-aligned with its points.
struct LabeledMeasure {
  DiscreteMeasure measure;
  std::vector<int> labels;
};

LabeledMeasure sample_uniform_mixture(const DatasetSpec& spec, Role role);
LabeledMeasure sample_synthetic(const DatasetSpec& spec, Role role);
/// Dispatches on spec.kind.
LabeledMeasure sample_dataset(const DatasetSpec& spec, Role role);

const char* to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& name);

}  // namespace uot
