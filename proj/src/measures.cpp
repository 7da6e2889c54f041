#include "uotkit/measures.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "uotkit/rng.hpp"

namespace uot {

DiscreteMeasure make_measure(Matrix points, std::optional<Vector> weights) {
  if (points.rows() == 0) throw std::invalid_argument("make_measure: empty point set");
  if (points.cols() < 1) throw std::invalid_argument("make_measure: points must have dimension >= 1");
  if (!points.allFinite()) throw std::invalid_argument("make_measure: non-finite coordinate");
  const auto n = points.rows();

  DiscreteMeasure m;
  if (!weights) {
    m.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
    m.normalized = true;
  } else {
    if (weights->size() != n) {
      throw std::invalid_argument("make_measure: " + std::to_string(weights->size()) + " weights for " +
                                  std::to_string(n) + " points");
    }
    bool any_positive = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = (*weights)[i];
      if (!std::isfinite(w)) throw std::invalid_argument("make_measure: non-finite weight");
      if (w < 0.0) throw std::invalid_argument("make_measure: negative weight at index " + std::to_string(i));
      any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) throw std::invalid_argument("make_measure: all weights are zero");
    m.weights = std::move(*weights);
    m.normalized = std::abs(m.weights.sum() - 1.0) <= 1e-12;
  }
  m.points = std::move(points);
  return m;
}

DiscreteMeasure make_measure(const std::vector<std::vector<double>>& points,
                             std::optional<std::vector<double>> weights) {
  if (points.empty()) throw std::invalid_argument("make_measure: empty point set");
  const auto d = points.front().size();
  Matrix pts(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) {
      throw std::invalid_argument("make_measure: dimension mismatch at point " + std::to_string(i));
    }
    for (std::size_t k = 0; k < d; ++k) pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = points[i][k];
  }
  std::optional<Vector> w;
  if (weights) w = Eigen::Map<const Vector>(weights->data(), static_cast<Eigen::Index>(weights->size()));
  return make_measure(std::move(pts), std::move(w));
}

CostMatrix cost_matrix(const Matrix& x, const Matrix& y, GroundCost) {
  if (x.cols() != y.cols()) {
    throw std::invalid_argument("cost_matrix: dimension mismatch (" + std::to_string(x.cols()) + " vs " +
                                std::to_string(y.cols()) + ")");
  }
  CostMatrix c;
  c.entries.resize(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      c.entries(i, j) = (x.row(i) - y.row(j)).squaredNorm();
    }
  }
  c.mean_cost = c.entries.size() > 0 ? c.entries.mean() : 0.0;
  return c;
}

CostMatrix cost_matrix(const DiscreteMeasure& src, const DiscreteMeasure& tgt, GroundCost cost) {
  return cost_matrix(src.points, tgt.points, cost);
}

// ---------------------------------------------------------------------------

DatasetSpec DatasetSpec::uniform_mixture_default(std::uint64_t seed) {
  DatasetSpec s;
  s.kind = DatasetKind::uniform_mixture;
  s.seed = seed;
  // Dense bottom-left source and top-right target clusters (README, Datasets).
  s.source_boxes = {{{-0.5, -1.5}, {0.5, -0.5}, 180, 0}, {{4.5, -1.5}, {5.5, -0.5}, 120, 1}};
  s.target_boxes = {{{4.5, 0.5}, {5.5, 1.5}, 180, 1}, {{-0.5, 0.5}, {0.5, 1.5}, 120, 0}};
  return s;
}

DatasetSpec DatasetSpec::gaussian_imbalance_default(std::uint64_t seed) {
  DatasetSpec s;
  s.kind = DatasetKind::gaussian_imbalance;
  s.seed = seed;
  s.noise_scale = 0.3;
  s.source_blobs = {{{0.0, 0.0}, 150, 0}, {{0.0, 4.0}, 50, 1}};
  s.target_blobs = {{{2.0, 0.0}, 50, 0}, {{2.0, 4.0}, 150, 1}};
  return s;
}

DatasetSpec DatasetSpec::gaussian_outliers_default(std::uint64_t seed) {
  DatasetSpec s;
  s.kind = DatasetKind::gaussian_outliers;
  s.seed = seed;
  s.noise_scale = 0.3;
  s.outlier_fraction = 0.05;
  s.source_blobs = {{{0.0, 0.0}, 100, 0}, {{0.0, 3.0}, 100, 1}};
  s.target_blobs = {{{1.0, 0.0}, 100, 0}, {{1.0, 3.0}, 100, 1}};
  return s;
}

namespace {

std::size_t spec_dim(const DatasetSpec& spec) {
  if (spec.kind == DatasetKind::uniform_mixture) {
    return spec.source_boxes.empty() ? 0 : spec.source_boxes.front().lo.size();
  }
  return spec.source_blobs.empty() ? 0 : spec.source_blobs.front().center.size();
}

}  // namespace

void validate(const DatasetSpec& spec) {
  const std::size_t d = spec_dim(spec);
  if (d == 0) throw std::invalid_argument("dataset: no clusters configured for " + std::string(to_string(spec.kind)));
  if (spec.kind == DatasetKind::uniform_mixture) {
    for (const auto* boxes : {&spec.source_boxes, &spec.target_boxes}) {
      if (boxes->empty()) throw std::invalid_argument("dataset: uniform_mixture needs source and target boxes");
      for (const auto& b : *boxes) {
        if (b.count <= 0) throw std::invalid_argument("dataset: box count must be positive");
        if (b.lo.size() != d || b.hi.size() != d) throw std::invalid_argument("dataset: box dimension mismatch");
        for (std::size_t k = 0; k < d; ++k) {
          if (!(b.lo[k] <= b.hi[k])) throw std::invalid_argument("dataset: box lower bound exceeds upper bound");
        }
      }
    }
    return;
  }
  for (const auto* blobs : {&spec.source_blobs, &spec.target_blobs}) {
    if (blobs->empty()) throw std::invalid_argument("dataset: gaussian kinds need source and target blobs");
    for (const auto& b : *blobs) {
      if (b.count <= 0) throw std::invalid_argument("dataset: blob count must be positive");
      if (b.center.size() != d) throw std::invalid_argument("dataset: blob dimension mismatch");
    }
  }
  if (!(spec.noise_scale > 0.0)) throw std::invalid_argument("dataset: noise_scale must be positive");
  if (!(spec.outlier_fraction >= 0.0 && spec.outlier_fraction < 1.0)) {
    throw std::invalid_argument("dataset: outlier_fraction must lie in [0, 1)");
  }
}

namespace {

// Source and target draw from disjoint child streams of the spec seed.
Rng role_rng(const DatasetSpec& spec, Role role) {
  Rng base(spec.seed);
  Rng source = base.split();
  Rng target = base.split();
  return role == Role::source ? source : target;
}

LabeledMeasure finish(std::vector<std::vector<double>> rows, std::vector<int> labels) {
  LabeledMeasure out;
  out.measure = make_measure(rows);
  out.labels = std::move(labels);
  return out;
}


int inlier_count(const std::vector<GaussianBlob>& blobs) {
  int n = 0;
  for (const auto& b : blobs) n += b.count;
  return n;
}

// Outliers of both roles come from one shared stream so they can be kept
// apart: each lands in [10 sigma, 40 sigma] off a random center, clear of
// every center and of the other role's outliers. Otherwise a source outlier
// sitting next to a target outlier is cheap to transport and not an outlier
// at all for the coupling.
std::array<std::vector<std::vector<double>>, 2> place_outliers(const DatasetSpec& spec, double sigma) {
  Rng base(spec.seed);
  base.split();
  base.split();
  Rng rng = base.split();

  std::vector<const std::vector<double>*> centers;
  for (const auto* group : {&spec.source_blobs, &spec.target_blobs}) {
    for (const auto& b : *group) centers.push_back(&b.center);
  }
  const std::size_t d = centers.front()->size();
  const double min_dist = 10.0 * sigma;
  auto far_from = [&](const std::vector<double>& p, const std::vector<double>& q) {
    double dist2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) dist2 += (p[k] - q[k]) * (p[k] - q[k]);
    return dist2 >= min_dist * min_dist;
  };

  std::array<std::vector<std::vector<double>>, 2> out;
  const int counts[2] = {
      static_cast<int>(std::llround(spec.outlier_fraction * inlier_count(spec.source_blobs))),
      static_cast<int>(std::llround(spec.outlier_fraction * inlier_count(spec.target_blobs)))};
  for (int role = 0; role < 2; ++role) {
    for (int o = 0; o < counts[role]; ++o) {
      for (;;) {
        const auto& c = *centers[rng.index(centers.size())];
        std::vector<double> dir(d);
        double norm = 0.0;
        for (auto& v : dir) {
          v = rng.normal();
          norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double radius = rng.uniform(min_dist, 4.0 * min_dist);
        std::vector<double> p(d);
        for (std::size_t k = 0; k < d; ++k) p[k] = c[k] + radius * dir[k] / norm;
        bool clear = true;
        for (const auto* other : centers) clear = clear && far_from(p, *other);
        for (const auto& q : out[1 - role]) clear = clear && far_from(p, q);
        if (clear) {
          out[role].push_back(std::move(p));
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace

LabeledMeasure sample_uniform_mixture(const DatasetSpec& spec, Role role) {
  if (spec.kind != DatasetKind::uniform_mixture) {
    throw std::invalid_argument("sample_uniform_mixture: dataset kind is " + std::string(to_string(spec.kind)));
  }
  validate(spec);
  Rng rng = role_rng(spec, role);
  const auto& boxes = role == Role::source ? spec.source_boxes : spec.target_boxes;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& box : boxes) {
    for (int i = 0; i < box.count; ++i) {
      std::vector<double> p(box.lo.size());
      for (std::size_t k = 0; k < p.size(); ++k) p[k] = rng.uniform(box.lo[k], box.hi[k]);
      rows.push_back(std::move(p));
      labels.push_back(box.label);
    }
  }
  return finish(std::move(rows), std::move(labels));
}

LabeledMeasure sample_synthetic(const DatasetSpec& spec, Role role) {
  if (spec.kind == DatasetKind::uniform_mixture) {
    throw std::invalid_argument("sample_synthetic: expects a gaussian dataset kind, got uniform_mixture");
  }
  validate(spec);
  Rng rng = role_rng(spec, role);
  const auto& blobs = role == Role::source ? spec.source_blobs : spec.target_blobs;
  const std::size_t d = blobs.front().center.size();
  const double sigma = spec.noise_scale;

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& blob : blobs) {
    for (int i = 0; i < blob.count; ++i) {
      std::vector<double> p(d);
      for (std::size_t k = 0; k < d; ++k) p[k] = blob.center[k] + sigma * rng.normal();
      rows.push_back(std::move(p));
      labels.push_back(blob.label);
    }
  }

  if (spec.kind == DatasetKind::gaussian_outliers && spec.outlier_fraction > 0.0) {
    auto outliers = place_outliers(spec, sigma);
    for (auto& p : outliers[role == Role::source ? 0 : 1]) {
      rows.push_back(std::move(p));
      labels.push_back(kOutlierLabel);
    }
  }
  return finish(std::move(rows), std::move(labels));
}

LabeledMeasure sample_dataset(const DatasetSpec& spec, Role role) {
  return spec.kind == DatasetKind::uniform_mixture ? sample_uniform_mixture(spec, role)
                                                    : sample_synthetic(spec, role);
}

const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::uniform_mixture: return "uniform_mixture";
    case DatasetKind::gaussian_imbalance: return "gaussian_imbalance";
    case DatasetKind::gaussian_outliers: return "gaussian_outliers";
  }
  return "unknown";
}

DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "uniform_mixture") return DatasetKind::uniform_mixture;
  if (name == "gaussian_imbalance") return DatasetKind::gaussian_imbalance;
  if (name == "gaussian_outliers") return DatasetKind::gaussian_outliers;
  throw std::invalid_argument("unknown dataset kind '" + name + "'");
}

}  // namespace uot
