#include <doctest.h>

#include <cmath>

#include "uotkit/measures.hpp"

using namespace uot;

TEST_CASE("make_measure defaults to uniform weights") {
  const auto m = make_measure(std::vector<std::vector<double>>{{0, 0}, {1, 1}});
  CHECK(m.weights[0] == doctest::Approx(0.5));
  CHECK(m.weights[1] == doctest::Approx(0.5));
  CHECK(m.normalized);
  CHECK(m.dim() == 2);
}

TEST_CASE("make_measure keeps explicit mass") {
  const auto m = make_measure(std::vector<std::vector<double>>{{0}}, std::vector<double>{2.0});
  CHECK(m.size() == 1);
  CHECK(m.total_mass() == 2.0);
  CHECK_FALSE(m.normalized);
}

TEST_CASE("make_measure rejects bad input") {
  using P = std::vector<std::vector<double>>;
  CHECK_THROWS_AS(make_measure(P{{0, 0}}, std::vector<double>{-1.0}), std::invalid_argument);
  CHECK_THROWS_AS(make_measure(P{}), std::invalid_argument);
  CHECK_THROWS_AS(make_measure(P{{0, 0}, {1}}), std::invalid_argument);
  CHECK_THROWS_AS(make_measure(P{{0}, {1}}, std::vector<double>{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(make_measure(P{{0}, {1}}, std::vector<double>{0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("cost matrix examples") {
  using P = std::vector<std::vector<double>>;
  auto c = cost_matrix(make_measure(P{{0}}), make_measure(P{{3}}));
  CHECK(c.entries(0, 0) == 9.0);
  CHECK(c.mean_cost == 9.0);

  const auto xy = make_measure(P{{0}, {1}});
  c = cost_matrix(xy, xy);
  CHECK(c.entries(0, 0) == 0.0);
  CHECK(c.entries(0, 1) == 1.0);
  CHECK(c.entries(1, 0) == 1.0);
  CHECK(c.entries(1, 1) == 0.0);
  CHECK(c.mean_cost == doctest::Approx(0.5).epsilon(1e-12));

  c = cost_matrix(make_measure(P{{0, 0}}), make_measure(P{{3, 4}}));
  CHECK(c.entries(0, 0) == 25.0);

  CHECK_THROWS_AS(cost_matrix(make_measure(P{{0, 0}}), make_measure(P{{3}})), std::invalid_argument);
}

TEST_CASE("uniform mixture has the configured cluster sizes") {
  const auto spec = DatasetSpec::uniform_mixture_default(7);
  const auto src = sample_uniform_mixture(spec, Role::source);
  const auto tgt = sample_uniform_mixture(spec, Role::target);
  REQUIRE(src.measure.size() == 300);
  REQUIRE(tgt.measure.size() == 300);
  int src_left = 0, tgt_right = 0;
  for (Eigen::Index i = 0; i < 300; ++i) {
    const double sx = src.measure.points(i, 0), sy = src.measure.points(i, 1);
    const double tx = tgt.measure.points(i, 0), ty = tgt.measure.points(i, 1);
    src_left += sx >= -0.5 && sx <= 0.5;
    tgt_right += tx >= 4.5 && tx <= 5.5;
    CHECK((sy >= -1.5 && sy <= -0.5));
    CHECK((ty >= 0.5 && ty <= 1.5));
    CHECK(src.labels[static_cast<std::size_t>(i)] == (sx > 2.5 ? 1 : 0));
    CHECK(tgt.labels[static_cast<std::size_t>(i)] == (tx > 2.5 ? 1 : 0));
  }
  CHECK(src_left == 180);
  CHECK(tgt_right == 180);
  CHECK(src.measure.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sampling is deterministic per seed") {
  for (auto spec : {DatasetSpec::uniform_mixture_default(3), DatasetSpec::gaussian_imbalance_default(3),
                    DatasetSpec::gaussian_outliers_default(3)}) {
    spec.outlier_fraction = spec.kind == DatasetKind::gaussian_outliers ? 0.05 : 0.0;
    const auto a = sample_dataset(spec, Role::source);
    const auto b = sample_dataset(spec, Role::source);
    CHECK(a.measure.points == b.measure.points);
    CHECK(a.labels == b.labels);
    spec.seed = 4;
    const auto c = sample_dataset(spec, Role::source);
    CHECK(a.measure.points != c.measure.points);
  }
}

TEST_CASE("gaussian imbalance counts") {
  const auto spec = DatasetSpec::gaussian_imbalance_default(1);
  const auto src = sample_synthetic(spec, Role::source);
  const auto tgt = sample_synthetic(spec, Role::target);
  auto count = [](const std::vector<int>& labels, int l) { return std::count(labels.begin(), labels.end(), l); };
  CHECK(count(src.labels, 0) == 150);
  CHECK(count(src.labels, 1) == 50);
  CHECK(count(tgt.labels, 0) == 50);
  CHECK(count(tgt.labels, 1) == 150);
}

TEST_CASE("outliers sit far from every cluster center") {
  auto spec = DatasetSpec::gaussian_outliers_default(5);
  for (const auto role : {Role::source, Role::target}) {
    const auto m = sample_synthetic(spec, role);
    int outliers = 0;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      if (m.labels[i] != kOutlierLabel) continue;
      ++outliers;
      for (const auto* blobs : {&spec.source_blobs, &spec.target_blobs}) {
        for (const auto& blob : *blobs) {
          const double dx = m.measure.points(static_cast<Eigen::Index>(i), 0) - blob.center[0];
          const double dy = m.measure.points(static_cast<Eigen::Index>(i), 1) - blob.center[1];
          CHECK(std::hypot(dx, dy) >= 10.0 * spec.noise_scale);
        }
      }
    }
    CHECK(outliers == 10);
  }

  spec.outlier_fraction = 0.0;
  const auto clean = sample_synthetic(spec, Role::source);
  CHECK(std::count(clean.labels.begin(), clean.labels.end(), kOutlierLabel) == 0);
  CHECK(clean.measure.size() == 200);
}

TEST_CASE("dataset kind and parameter checks") {
  CHECK_THROWS_AS(sample_uniform_mixture(DatasetSpec::gaussian_imbalance_default(), Role::source),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_synthetic(DatasetSpec::uniform_mixture_default(), Role::source), std::invalid_argument);
  auto spec = DatasetSpec::gaussian_outliers_default();
  spec.outlier_fraction = 1.0;
  CHECK_THROWS_AS(sample_synthetic(spec, Role::source), std::invalid_argument);
  spec.outlier_fraction = -0.1;
  CHECK_THROWS_AS(sample_synthetic(spec, Role::source), std::invalid_argument);
  CHECK(dataset_kind_from_string(to_string(DatasetKind::gaussian_outliers)) == DatasetKind::gaussian_outliers);
  CHECK_THROWS(dataset_kind_from_string("spiral"));
}
