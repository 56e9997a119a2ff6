// Copyright 2026 The actscan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>

#include "actscan/error.hpp"
#include "actscan/layer_divergence.hpp"
#include "actscan/rng.hpp"
#include "actscan/synth_bench.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace actscan;
using actscan::testing::TempDir;
using doctest::Approx;

namespace {

PointSet random_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  PointSet p(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) p(i, j) = rng.normal() * scale;
  return p;
}

PointSet col(std::initializer_list<double> v) {
  PointSet p(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) p(i++, 0) = x;
  return p;
}

Eigen::MatrixXd random_rotation(Eigen::Index d, std::uint64_t seed) {
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_points(d, d, seed));
  return qr.householderQ();
}

std::vector<oracle::Matrix> clusters(const PointSet& a, const PointSet& b) {
  return {oracle::from_eigen(a), oracle::from_eigen(b)};
}

}  // namespace

TEST_CASE("separation metrics on the two-pair example") {
  const SeparationMetrics m = separation_metrics(col({0, 1}), col({10, 11}));
  CHECK(m.calinski_harabasz == Approx(200.0).epsilon(1e-12));
  CHECK(m.davies_bouldin == Approx(0.1).epsilon(1e-12));
  CHECK(std::abs(m.silhouette - 0.899749) < 1e-6);
  CHECK(m.centroid_distance == Approx(10.0).epsilon(1e-12));
  CHECK_FALSE(m.calinski_harabasz_infinite);
}

TEST_CASE("separation metrics agree with textbook definitions") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(s % 3);
    PointSet a = random_points(7 + s % 5, d, 100 + s);
    PointSet b = random_points(9, d, 200 + s);
    b.col(0).array() += 1.5;
    const SeparationMetrics m = separation_metrics(a, b);
    const auto c = clusters(a, b);
    CHECK(m.silhouette == Approx(oracle::silhouette(c)).epsilon(1e-10));
    CHECK(m.calinski_harabasz == Approx(oracle::calinski_harabasz(c)).epsilon(1e-10));
    CHECK(m.davies_bouldin == Approx(oracle::davies_bouldin(c)).epsilon(1e-10));
  }
}

TEST_CASE("identical clouds") {
  const PointSet a = random_points(10, 3, 4);
  const SeparationMetrics m = separation_metrics(a, a);
  CHECK(m.silhouette <= 0.0);
  CHECK(m.centroid_distance == 0.0);
  CHECK(std::isinf(m.davies_bouldin));
}

TEST_CASE("zero within-cluster dispersion gives infinite CH with a flag") {
  const SeparationMetrics m = separation_metrics(col({0, 0}), col({3, 3}));
  CHECK(m.calinski_harabasz_infinite);
  CHECK(std::isinf(m.calinski_harabasz));
  CHECK(m.davies_bouldin == 0.0);
  CHECK(m.silhouette == Approx(1.0));
}

TEST_CASE("separation metrics reject small or mismatched sets") {
  CHECK_THROWS_AS(separation_metrics(col({1}), col({0, 2})), InvalidArgument);
  CHECK_THROWS_AS(separation_metrics(random_points(3, 2, 1), random_points(3, 3, 2)),
                  InvalidArgument);
}

TEST_CASE("metric invariances") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(s % 3);
    PointSet a = random_points(12, d, 300 + s);
    PointSet b = random_points(15, d, 400 + s);
    b.col(0).array() += 2.0;
    const SeparationMetrics base = separation_metrics(a, b);

    SUBCASE("rigid motion") {
      const Eigen::MatrixXd r = random_rotation(d, 500 + s);
      const Eigen::RowVectorXd t = random_points(1, d, 600 + s, 5.0);
      const PointSet ra = (a * r).rowwise() + t, rb = (b * r).rowwise() + t;
      const SeparationMetrics m = separation_metrics(ra, rb);
      CHECK(std::abs(m.silhouette - base.silhouette) < 1e-6);
      CHECK(std::abs(m.calinski_harabasz - base.calinski_harabasz) < 1e-6 * base.calinski_harabasz);
      CHECK(std::abs(m.davies_bouldin - base.davies_bouldin) < 1e-6);
      CHECK(std::abs(m.centroid_distance - base.centroid_distance) < 1e-6);
    }
    SUBCASE("permutation") {
      PointSet pa = a.colwise().reverse(), pb = b;
      pb.row(0).swap(pb.row(pb.rows() - 1));
      const SeparationMetrics m = separation_metrics(pa, pb);
      CHECK(std::abs(m.silhouette - base.silhouette) < 1e-12);
      CHECK(std::abs(m.calinski_harabasz - base.calinski_harabasz) < 1e-9 * base.calinski_harabasz);
      CHECK(std::abs(m.davies_bouldin - base.davies_bouldin) < 1e-12);
      CHECK(std::abs(m.centroid_distance - base.centroid_distance) < 1e-12);
    }
    SUBCASE("scaling") {
      const double c = 3.7;
      const SeparationMetrics m = separation_metrics(a * c, b * c);
      CHECK(m.centroid_distance == Approx(c * base.centroid_distance).epsilon(1e-9));
      CHECK(std::abs(m.silhouette - base.silhouette) < 1e-9);
      CHECK(std::abs(m.davies_bouldin - base.davies_bouldin) < 1e-9);
      CHECK(std::abs(m.calinski_harabasz - base.calinski_harabasz) < 1e-9 * base.calinski_harabasz);
    }
  }
}

TEST_CASE("hull centroid distance on the shifted square") {
  PointSet q(5, 2);
  q << 0, 0, 0, 1, 1, 0, 1, 1, 0.5, 0.5;
  PointSet shifted = q;
  shifted.col(0).array() += 10.0;
  const auto v = convex_hull_vertices(q);
  REQUIRE(v.has_value());
  CHECK(*v == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(std::abs(hull_centroid_distance(q, shifted) - 10.0) < 1e-9);
  CHECK(hull_centroid_distance(q, q) == 0.0);

  // The interior point must not pull the centroid.
  PointSet skewed(6, 2);
  skewed << 0, 0, 0, 1, 1, 0, 1, 1, 0.9, 0.9, 0.8, 0.9;
  const Eigen::VectorXd c = hull_centroid(skewed);
  CHECK(c(0) == Approx(0.5));
  CHECK(c(1) == Approx(0.5));
}

TEST_CASE("hull vertices match the brute-force oracle") {
  for (std::uint64_t s = 0; s < 60; ++s) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(s % 3);
    const PointSet pts = random_points(6 + static_cast<Eigen::Index>(s % 9), d, 700 + s);
    const auto v = convex_hull_vertices(pts);
    REQUIRE(v.has_value());
    CHECK(*v == oracle::hull_vertices(oracle::from_eigen(pts)));
  }
}

TEST_CASE("hull handles boundary and duplicate points") {
  SUBCASE("cube with face centres and a duplicate corner") {
    PointSet cube(16, 3);
    int r = 0;
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y)
        for (int z = 0; z < 2; ++z) cube.row(r++) << x, y, z;
    cube.row(r++) << 0.5, 0.5, 0;
    cube.row(r++) << 0.5, 0.5, 1;
    cube.row(r++) << 0, 0.5, 0.5;
    cube.row(r++) << 1, 0.5, 0.5;
    cube.row(r++) << 0.5, 0, 0.5;
    cube.row(r++) << 0.5, 0.5, 0.5;
    cube.row(r++) << 0.5, 0, 0;  // edge midpoint
    cube.row(r++) << 1, 1, 1;    // duplicate of row 7
    const auto v = convex_hull_vertices(cube);
    REQUIRE(v.has_value());
    CHECK(*v == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
    const Eigen::VectorXd c = hull_centroid(cube);
    CHECK((c - Eigen::Vector3d(0.5, 0.5, 0.5)).norm() < 1e-12);
  }
  SUBCASE("collinear points on a square edge") {
    PointSet sq(6, 2);
    sq << 0, 0, 2, 0, 2, 2, 0, 2, 1, 0, 2, 1;
    CHECK(*convex_hull_vertices(sq) == std::vector<std::size_t>{0, 1, 2, 3});
  }
}

TEST_CASE("degenerate hulls fall back to the plain mean") {
  PointSet line(4, 2);
  line << 0, 0, 1, 2, 2, 4, 10, 20;
  CHECK_FALSE(convex_hull_vertices(line).has_value());
  const Eigen::VectorXd c = hull_centroid(line);
  CHECK(c(0) == Approx(13.0 / 4));
  CHECK(c(1) == Approx(26.0 / 4));

  PointSet plane(5, 3);
  plane << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0.2, 0.2, 0;
  CHECK_FALSE(convex_hull_vertices(plane).has_value());
  CHECK(hull_centroid(plane)(0) == Approx(2.2 / 5));

  PointSet same(3, 1);
  same << 4, 4, 4;
  CHECK_FALSE(convex_hull_vertices(same).has_value());
  CHECK(hull_centroid_distance(same, col({1, 1})) == Approx(3.0));
}

TEST_CASE("centroid distance grows with the planted shift") {
  const PointSet a = random_points(30, 3, 900), b0 = random_points(30, 3, 901);
  double last = -1.0;
  for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    PointSet b = b0;
    b.col(1).array() += shift;
    const double dist = hull_centroid_distance(a, b);
    CHECK(dist > last);
    last = dist;
  }
}

TEST_CASE("pca matches the Jacobi oracle") {
  for (std::uint64_t s = 0; s < 25; ++s) {
    const PointSet x = random_points(50, 8, 1000 + s) * (1.0 + static_cast<double>(s % 4));
    const std::size_t k = 1 + s % 8;
    const PcaModel m = fit_pca(x, k);
    const oracle::Pca o = oracle::pca(oracle::from_eigen(x), k);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(m.explained_variance_ratio(i) - o.ratios[i]) < 1e-8);
      double dot = 0;
      for (int j = 0; j < 8; ++j) dot += m.components(i, j) * o.components[i][j];
      const double sign = dot < 0 ? -1.0 : 1.0;
      for (int j = 0; j < 8; ++j) CHECK(std::abs(m.components(i, j) - sign * o.components[i][j]) < 1e-8);
    }
    for (int j = 0; j < 8; ++j) CHECK(std::abs(m.mean(j) - o.mean[j]) < 1e-12);
  }
}

TEST_CASE("pca model invariants") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const PointSet x = random_points(20, 12, 1100 + s);
    const PcaModel m = fit_pca(x, 6);
    const Eigen::MatrixXd gram = m.components * m.components.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-6);
    for (int i = 1; i < 6; ++i)
      CHECK(m.explained_variance_ratio(i) <= m.explained_variance_ratio(i - 1) + 1e-15);
    CHECK(m.explained_variance_ratio.sum() <= 1.0 + 1e-6);
    for (int i = 0; i < 6; ++i) {
      Eigen::Index arg;
      m.components.row(i).cwiseAbs().maxCoeff(&arg);
      CHECK(m.components(i, arg) > 0);
    }
    const PointSet origin = project(m, m.mean.transpose());
    CHECK(origin.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("pca wide data uses the Gram route consistently") {
  // 10 rows, 40 columns: the oracle works on the 40x40 covariance.
  const PointSet x = random_points(10, 40, 77);
  const PcaModel m = fit_pca(x, 5);
  const oracle::Pca o = oracle::pca(oracle::from_eigen(x), 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(m.explained_variance_ratio(i) - o.ratios[i]) < 1e-9);
    double dot = 0;
    for (int j = 0; j < 40; ++j) dot += m.components(i, j) * o.components[i][j];
    CHECK(std::abs(std::abs(dot) - 1.0) < 1e-8);
  }
}

TEST_CASE("pca analytic cases") {
  SUBCASE("collinear") {
    PointSet x(5, 2);
    x << 0, 0, 1, 2, 2, 4, 3, 6, -1, -2;
    const PcaModel m = fit_pca(x, 2);
    CHECK(m.explained_variance_ratio(0) == Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(m.explained_variance_ratio(1)) < 1e-15);
    CHECK(std::abs(m.components(0, 0) - 1 / std::sqrt(5.0)) < 1e-12);
    CHECK(std::abs(m.components(0, 1) - 2 / std::sqrt(5.0)) < 1e-12);
    const PcaModel one = fit_pca(x, 1);
    const PointSet proj = project(one, x);
    const double mean_t = (0 + 1 + 2 + 3 - 1) / 5.0;
    for (int i = 0; i < 5; ++i)
      CHECK(proj(i, 0) == Approx((x(i, 0) - mean_t) * std::sqrt(5.0)).epsilon(1e-12));
  }
  SUBCASE("symmetric cross") {
    PointSet x(4, 2);
    x << 1, 0, -1, 0, 0, 1, 0, -1;
    const PcaModel m = fit_pca(x, 2);
    CHECK(m.explained_variance_ratio(0) == Approx(0.5).epsilon(1e-15));
    CHECK(m.explained_variance_ratio(1) == Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("zero variance") {
    const PointSet x = PointSet::Constant(6, 4, 2.5);
    const PcaModel m = fit_pca(x, 3);
    CHECK(m.explained_variance_ratio.cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXd gram = m.components * m.components.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("full basis reconstructs rows") {
    const PointSet x = random_points(30, 6, 5);
    const PcaModel m = fit_pca(x, 6);
    const PointSet back = (project(m, x) * m.components).rowwise() + m.mean.transpose();
    CHECK((back - x).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("k out of range") {
    const PointSet x = random_points(4, 6, 5);
    CHECK_THROWS_AS(fit_pca(x, 0), InvalidArgument);
    CHECK_THROWS_AS(fit_pca(x, 4), InvalidArgument);
    CHECK_THROWS_AS(project(fit_pca(x, 2), random_points(2, 5, 1)), InvalidArgument);
  }
  SUBCASE("standardize gives unit-variance columns") {
    PointSet x = random_points(40, 3, 8);
    x.col(2) *= 1000.0;
    PcaOptions opt;
    opt.standardize = true;
    const PcaModel m = fit_pca(x, 3, opt);
    CHECK(m.explained_variance.sum() == Approx(3.0).epsilon(1e-9));
  }
}

TEST_CASE("summaries") {
  CHECK(summarize({2.0}) == MetricSummary{2.0, 0.0});
  const MetricSummary s = summarize({1.0, 3.0});
  CHECK(s.mean == 2.0);
  CHECK(s.std == 1.0);
}

TEST_CASE("layer sweep on a planted dataset") {
  TempDir dir("layers");
  auto cfg = actscan::testing::small_dataset(300, 16, 3);
  cfg.mu = 20.0;
  const DatasetManifest m = load_manifest(write_synthetic_dataset(dir.path(), cfg));

  LayerSweepOptions opt;
  opt.jobs = 1;
  std::vector<PcaScatter> scatter;
  const LayerDivergenceReport r = layer_sweep(m, "agreeableness", opt, &scatter);
  REQUIRE(r.layers.size() == 3);
  CHECK(r.k == 3);
  CHECK(r.n == 100);
  CHECK(r.layers[0].centroid_distance.mean < r.layers[1].centroid_distance.mean);
  CHECK(r.layers[1].centroid_distance.mean < r.layers[2].centroid_distance.mean);
  CHECK(r.layers[2].silhouette.mean > r.layers[0].silhouette.mean);
  for (const auto& l : r.layers) CHECK(l.runs.size() == 5);
  REQUIRE(scatter.size() == 3);
  CHECK(scatter[0].q_plus.rows() == 100);
  CHECK(scatter[0].q_plus.cols() == 3);

  opt.jobs = 4;
  const LayerDivergenceReport par = layer_sweep(m, "agreeableness", opt);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(par.layers[i].silhouette == r.layers[i].silhouette);
    CHECK(par.layers[i].calinski_harabasz == r.layers[i].calinski_harabasz);
    CHECK(par.layers[i].centroid_distance == r.layers[i].centroid_distance);
  }

  LayerSweepOptions single;
  single.seeds = {3};
  single.layers = {2};
  const LayerDivergenceReport one = layer_sweep(m, "agreeableness", single);
  REQUIRE(one.layers.size() == 1);
  CHECK(one.layers[0].layer == 2);
  CHECK(one.layers[0].silhouette.std == 0.0);
  CHECK(one.layers[0].calinski_harabasz.std == 0.0);
  CHECK(one.layers[0].davies_bouldin.std == 0.0);
  CHECK(one.layers[0].centroid_distance.std == 0.0);

  single.raw_space_metrics = true;
  const LayerDivergenceReport raw = layer_sweep(m, "agreeableness", single);
  CHECK(raw.layers[0].silhouette.mean != one.layers[0].silhouette.mean);
  CHECK(raw.layers[0].centroid_distance.mean == one.layers[0].centroid_distance.mean);

  single.layers = {7};
  CHECK_THROWS(layer_sweep(m, "agreeableness", single));
  CHECK_THROWS(layer_sweep(m, "nobody", opt));
}
