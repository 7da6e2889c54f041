#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uotkit/types.hpp"

namespace uot {

/// (||P1 - a||_inf, ||P^T 1 - b||_inf)
std::pair<double, double> marginal_deviation(const Matrix& plan, const Vector& a, const Vector& b);

/// Share of the plan's mass moved between differently labelled points.
double cross_cluster_mass(const Matrix& plan, std::span<const int> source_labels, std::span<const int> target_labels);

/// Fraction of mapped points whose nearest target-cluster center carries the
/// partner label of their source label. Target outliers do not form a center;
/// source outliers are skipped. `partner` defaults to the identity pairing.
/// Throws std::invalid_argument when a source label has no partner center.
double map_class_consistency(const Matrix& mapped, std::span<const int> source_labels, const Matrix& target_points,
                             std::span<const int> target_labels, const std::map<int, int>& partner = {});

/// Named scalar metrics with their provenance.
struct EvalReport {
  std::string dataset;
  std::string estimator;
  std::string mode;
  double tau = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::pair<std::string, std::string>> diagnostics;

  /// Throws on a duplicate name or a non-finite value.
  void add(const std::string& name, double value);
  std::optional<double> get(const std::string& name) const;
  void note(const std::string& key, std::string value) { diagnostics.emplace_back(key, std::move(value)); }
};

/// Mean and population standard deviation per metric across reports that
/// share dataset, estimator, mode and tau. The result lists `<name>` (mean)
/// followed by `<name>_std` for every metric and records the seed count in
/// its diagnostics.
EvalReport summarize(const std::vector<EvalReport>& reports);

}  // namespace uot
