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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "actscan/activation_store.hpp"

namespace actscan {

// Rows are points.
using PointSet = Eigen::MatrixXd;

PointSet to_points(const ActivationMatrix& m);

struct PcaOptions {
  // z-score each column before the eigendecomposition.
  bool standardize = false;
};

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;       // per-column divisor; all ones unless standardized
  Eigen::MatrixXd components;  // k x J, orthonormal rows, descending variance
  Eigen::VectorXd explained_variance;
  Eigen::VectorXd explained_variance_ratio;

  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(components.cols()); }
};

// Top-k eigenvectors of the sample covariance (n - 1 denominator). Uses the
// n x n Gram matrix when rows < columns. Each component's largest-magnitude
// coordinate is made positive. Zero-variance data yields all-zero ratios and
// the leading unit vectors as components.
PcaModel fit_pca(const PointSet& x, std::size_t k, const PcaOptions& options = {});

// (x - mean) / scale * components^T
PointSet project(const PcaModel& model, const PointSet& x);

struct SeparationMetrics {
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  double davies_bouldin = 0.0;
  double centroid_distance = 0.0;
  // Within-cluster dispersion was zero; calinski_harabasz holds +infinity.
  bool calinski_harabasz_infinite = false;
};

// Two-cluster silhouette, Calinski-Harabasz and Davies-Bouldin on the given
// coordinates, plus hull_centroid_distance on the first min(d, 3) columns.
SeparationMetrics separation_metrics(const PointSet& q_plus, const PointSet& q_minus);

// Indices of the convex-hull vertices of a point set in 1, 2 or 3
// dimensions, ascending. Points lying on a hull edge or facet without being
// extreme are excluded, as are duplicates of a vertex. Returns nullopt when
// the points are affinely degenerate (rank < d).
std::optional<std::vector<std::size_t>> convex_hull_vertices(const PointSet& points);

// Mean of the hull vertices, or of all points when the set is degenerate.
Eigen::VectorXd hull_centroid(const PointSet& points);

double hull_centroid_distance(const PointSet& q_plus, const PointSet& q_minus);

struct LayerSweepOptions {
  std::size_t k = 3;
  std::size_t n = 100;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<int> layers;  // empty: every layer with both directions present
  PcaOptions pca;
  // Compute silhouette, CH and DB on raw activations instead of PC scores.
  bool raw_space_metrics = false;
  std::size_t jobs = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds

  bool operator==(const MetricSummary&) const = default;
};

MetricSummary summarize(const std::vector<double>& values);

struct LayerMetrics {
  int layer = 0;
  MetricSummary silhouette;
  MetricSummary calinski_harabasz;
  MetricSummary davies_bouldin;
  MetricSummary centroid_distance;
  MetricSummary explained_variance_ratio;  // sum over the k components
  std::vector<SeparationMetrics> runs;     // one per seed, in seed order
};

struct LayerDivergenceReport {
  std::string persona;
  std::string model_id;
  std::size_t k = 0;
  std::size_t n = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<LayerMetrics> layers;
};

// PC scores of one seeded draw, for scatter plots.
struct PcaScatter {
  int layer = 0;
  std::uint64_t seed = 0;
  PointSet q_plus;
  PointSet q_minus;
  std::vector<double> explained_variance_ratio;
};

// Per layer and seed: draw n matching and n notmatching rows, fit PCA on
// their union, project, and score the two groups. Row draws depend only on
// (seed, direction), so every layer sees the same sentences for one seed.
LayerDivergenceReport layer_sweep(const DatasetManifest& manifest, const std::string& persona,
                                  const LayerSweepOptions& options = {},
                                  std::vector<PcaScatter>* scatter = nullptr);

}  // namespace actscan
