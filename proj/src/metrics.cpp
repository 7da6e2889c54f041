#include "uotkit/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace uot {

std::pair<double, double> marginal_deviation(const Matrix& plan, const Vector& a, const Vector& b) {
  if (plan.rows() != a.size() || plan.cols() != b.size()) throw std::invalid_argument("marginal_deviation: shape mismatch");
  return {(plan.rowwise().sum() - a).lpNorm<Eigen::Infinity>(),
          (plan.colwise().sum().transpose() - b).lpNorm<Eigen::Infinity>()};
}

double cross_cluster_mass(const Matrix& plan, std::span<const int> source_labels, std::span<const int> target_labels) {
  if (source_labels.size() != static_cast<std::size_t>(plan.rows()) ||
      target_labels.size() != static_cast<std::size_t>(plan.cols())) {
    throw std::invalid_argument("cross_cluster_mass: label counts do not match the plan shape");
  }
  double cross = 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
      const double p = plan(i, j);
      total += p;
      if (source_labels[static_cast<std::size_t>(i)] != target_labels[static_cast<std::size_t>(j)]) cross += p;
    }
  }
  if (!(total > 0.0)) throw std::invalid_argument("cross_cluster_mass: plan has zero mass");
  return cross / total;
}

double map_class_consistency(const Matrix& mapped, std::span<const int> source_labels, const Matrix& target_points,
                             std::span<const int> target_labels, const std::map<int, int>& partner) {
  if (mapped.rows() == 0) throw std::invalid_argument("map_class_consistency: no mapped points");
  if (source_labels.size() != static_cast<std::size_t>(mapped.rows()) ||
      target_labels.size() != static_cast<std::size_t>(target_points.rows())) {
    throw std::invalid_argument("map_class_consistency: label count mismatch");
  }
  if (mapped.cols() != target_points.cols()) throw std::invalid_argument("map_class_consistency: dimension mismatch");

  std::map<int, std::pair<Vector, int>> sums;
  for (Eigen::Index j = 0; j < target_points.rows(); ++j) {
    const int label = target_labels[static_cast<std::size_t>(j)];
    if (label < 0) continue;
    auto [it, inserted] = sums.try_emplace(label, Vector::Zero(target_points.cols()), 0);
    it->second.first += target_points.row(j).transpose();
    ++it->second.second;
  }
  std::vector<std::pair<int, Vector>> centers;
  for (const auto& [label, acc] : sums) centers.emplace_back(label, acc.first / acc.second);

  int hits = 0;
  int counted = 0;
  for (Eigen::Index i = 0; i < mapped.rows(); ++i) {
    const int label = source_labels[static_cast<std::size_t>(i)];
    if (label < 0) continue;
    const auto p = partner.find(label);
    const int wanted = p == partner.end() ? label : p->second;
    if (!sums.contains(wanted)) {
      throw std::invalid_argument("map_class_consistency: source label " + std::to_string(label) +
                                  " has no partner cluster in the target");
    }
    int nearest = centers.front().first;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [c_label, center] : centers) {
      const double d = (mapped.row(i).transpose() - center).squaredNorm();
      if (d < best) {
        best = d;
        nearest = c_label;
      }
    }
    hits += nearest == wanted ? 1 : 0;
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("map_class_consistency: no labelled source points");
  return static_cast<double>(hits) / counted;
}

void EvalReport::add(const std::string& name, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("EvalReport: metric '" + name + "' is not finite");
  if (get(name)) throw std::invalid_argument("EvalReport: duplicate metric '" + name + "'");
  metrics.emplace_back(name, value);
}

std::optional<double> EvalReport::get(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  return std::nullopt;
}

EvalReport summarize(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("summarize: no reports");
  const EvalReport& first = reports.front();
  EvalReport out;
  out.dataset = first.dataset;
  out.estimator = first.estimator;
  out.mode = first.mode;
  out.tau = first.tau;
  out.seed = first.seed;
  for (const auto& r : reports) {
    if (r.dataset != first.dataset || r.estimator != first.estimator || r.mode != first.mode || r.tau != first.tau) {
      throw std::invalid_argument("summarize: reports describe different experiments");
    }
    if (r.metrics.size() != first.metrics.size()) throw std::invalid_argument("summarize: metric sets differ");
  }
  const double n = static_cast<double>(reports.size());
  for (const auto& [name, unused] : first.metrics) {
    double sum = 0.0;
    for (const auto& r : reports) {
      const auto v = r.get(name);
      if (!v) throw std::invalid_argument("summarize: metric '" + name + "' missing from a report");
      sum += *v;
    }
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& r : reports) sq += (*r.get(name) - mean) * (*r.get(name) - mean);
    out.add(name, mean);
    out.add(name + "_std", std::sqrt(sq / n));
  }
  out.note("seeds", std::to_string(reports.size()));
  return out;
}

}  // namespace uot
