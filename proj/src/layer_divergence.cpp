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

#include "actscan/layer_divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "actscan/error.hpp"
#include "actscan/parallel.hpp"
#include "actscan/rng.hpp"

namespace actscan {

PointSet to_points(const ActivationMatrix& m) {
  PointSet p(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) p(r, c) = m(r, c);
  return p;
}

namespace {

void fix_sign(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  if (v(best) < 0) v = -v;
}

// Fills rows [from, k) with unit vectors orthogonal to the rows above.
void complete_basis(Eigen::MatrixXd& comps, Eigen::Index from) {
  const Eigen::Index dim = comps.cols();
  Eigen::Index row = from;
  for (Eigen::Index e = 0; e < dim && row < comps.rows(); ++e) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Unit(dim, e);
    for (Eigen::Index i = 0; i < row; ++i) v -= v.dot(comps.row(i)) * comps.row(i);
    const double norm = v.norm();
    if (norm < 1e-6) continue;
    comps.row(row++) = v / norm;
  }
}

}  // namespace

PcaModel fit_pca(const PointSet& x, std::size_t k, const PcaOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  if (n < 2) throw InvalidArgument("PCA needs at least 2 rows");
  if (k < 1 || static_cast<Eigen::Index>(k) > std::min(n - 1, dim))
    throw InvalidArgument("component count " + std::to_string(k) + " outside 1.." +
                          std::to_string(std::min(n - 1, dim)));
  const Eigen::Index kk = static_cast<Eigen::Index>(k);

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();
  model.scale = Eigen::VectorXd::Ones(dim);
  if (options.standardize) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      const double sd = std::sqrt(centered.col(c).squaredNorm() / static_cast<double>(n - 1));
      if (sd > 0) model.scale(c) = sd;
    }
    centered = centered.array().rowwise() / model.scale.transpose().array();
  }

  model.components = Eigen::MatrixXd::Zero(kk, dim);
  model.explained_variance = Eigen::VectorXd::Zero(kk);
  model.explained_variance_ratio = Eigen::VectorXd::Zero(kk);
  const double denom = static_cast<double>(n - 1);

  double trace = 0.0;
  Eigen::Index filled = 0;
  if (dim <= n) {
    const Eigen::MatrixXd cov = centered.transpose() * centered / denom;
    trace = cov.trace();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw DataError("covariance eigendecomposition failed");
    for (Eigen::Index i = 0; i < kk; ++i) {
      const Eigen::Index src = dim - 1 - i;
      model.explained_variance(i) = std::max(0.0, eig.eigenvalues()(src));
      model.components.row(i) = eig.eigenvectors().col(src).transpose();
    }
    filled = kk;
  } else {
    const Eigen::MatrixXd gram = centered * centered.transpose() / denom;
    trace = gram.trace();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw DataError("Gram eigendecomposition failed");
    const double tol = 1e-12 * std::max(trace, std::numeric_limits<double>::min());
    for (Eigen::Index i = 0; i < kk; ++i) {
      const Eigen::Index src = n - 1 - i;
      const double lambda = eig.eigenvalues()(src);
      if (!(lambda > tol)) break;
      model.explained_variance(i) = lambda;
      model.components.row(i) =
          (centered.transpose() * eig.eigenvectors().col(src)).transpose() /
          std::sqrt(denom * lambda);
      ++filled;
    }
  }
  if (!(trace > 0)) {
    model.components.setZero();
    model.explained_variance.setZero();
    filled = 0;
  }
  if (filled < kk) complete_basis(model.components, filled);
  for (Eigen::Index i = 0; i < kk; ++i) {
    fix_sign(model.components.row(i));
    model.explained_variance_ratio(i) = trace > 0 ? model.explained_variance(i) / trace : 0.0;
  }
  return model;
}

PointSet project(const PcaModel& model, const PointSet& x) {
  if (static_cast<std::size_t>(x.cols()) != model.dim())
    throw InvalidArgument("projection input has " + std::to_string(x.cols()) +
                          " columns, model expects " + std::to_string(model.dim()));
  Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();
  centered = centered.array().rowwise() / model.scale.transpose().array();
  return centered * model.components.transpose();
}

// ---------------------------------------------------------------------------
// Convex hull

namespace {

Eigen::Index affine_rank(const PointSet& points) {
  if (points.rows() < 2) return 0;
  const Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double tol = 1e-10 * sv(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  return rank;
}

std::vector<std::size_t> hull_1d(const PointSet& p) {
  std::size_t lo = 0, hi = 0;
  for (Eigen::Index i = 1; i < p.rows(); ++i) {
    if (p(i, 0) < p(lo, 0)) lo = static_cast<std::size_t>(i);
    if (p(i, 0) > p(hi, 0)) hi = static_cast<std::size_t>(i);
  }
  return lo < hi ? std::vector<std::size_t>{lo, hi} : std::vector<std::size_t>{hi, lo};
}

// Andrew's monotone chain; strict turns drop collinear boundary points.
std::vector<std::size_t> hull_2d(const PointSet& p) {
  const std::size_t n = static_cast<std::size_t>(p.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p(a, 0) != p(b, 0)) return p(a, 0) < p(b, 0);
    if (p(a, 1) != p(b, 1)) return p(a, 1) < p(b, 1);
    return a < b;
  });
  const double extent = (p.colwise().maxCoeff() - p.colwise().minCoeff()).norm();
  const double eps = 1e-12 * extent * extent;
  auto cross = [&](std::size_t o, std::size_t a, std::size_t b) {
    return (p(a, 0) - p(o, 0)) * (p(b, 1) - p(o, 1)) - (p(a, 1) - p(o, 1)) * (p(b, 0) - p(o, 0));
  };
  std::vector<std::size_t> hull(2 * n);
  std::size_t h = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (h >= 2 && cross(hull[h - 2], hull[h - 1], order[i]) <= eps) --h;
    hull[h++] = order[i];
  }
  for (std::size_t i = n - 1, lower = h + 1; i-- > 0;) {
    while (h >= lower && cross(hull[h - 2], hull[h - 1], order[i]) <= eps) --h;
    hull[h++] = order[i];
  }
  hull.resize(h - 1);
  std::sort(hull.begin(), hull.end());
  hull.erase(std::unique(hull.begin(), hull.end()), hull.end());
  return hull;
}

// Incremental hull. Faces are index triples with outward normals.
std::vector<std::size_t> hull_3d(const PointSet& p) {
  using V3 = Eigen::Vector3d;
  const std::size_t n = static_cast<std::size_t>(p.rows());
  auto pt = [&](std::size_t i) { return V3(p(i, 0), p(i, 1), p(i, 2)); };
  const double extent = (p.colwise().maxCoeff() - p.colwise().minCoeff()).norm();
  const double eps = 1e-10 * extent;

  // Initial tetrahedron from extreme points.
  std::size_t a = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (p(i, 0) < p(a, 0)) a = i;
  std::size_t b = a;
  double best = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (pt(i) - pt(a)).norm();
    if (d > best) best = d, b = i;
  }
  std::size_t c = a;
  best = -1;
  const V3 ab = (pt(b) - pt(a)).normalized();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = ab.cross(pt(i) - pt(a)).norm();
    if (d > best) best = d, c = i;
  }
  std::size_t d = a;
  best = -1;
  const V3 nabc = (pt(b) - pt(a)).cross(pt(c) - pt(a)).normalized();
  for (std::size_t i = 0; i < n; ++i) {
    const double dist = std::abs(nabc.dot(pt(i) - pt(a)));
    if (dist > best) best = dist, d = i;
  }
  if (best <= eps) return {};

  struct Face {
    std::size_t v[3];
    V3 normal;
    double offset;
  };
  auto make_face = [&](std::size_t i, std::size_t j, std::size_t k, const V3& inside) {
    Face f{{i, j, k}, (pt(j) - pt(i)).cross(pt(k) - pt(i)).normalized(), 0.0};
    f.offset = f.normal.dot(pt(i));
    if (f.normal.dot(inside) - f.offset > 0) {
      std::swap(f.v[1], f.v[2]);
      f.normal = -f.normal;
      f.offset = -f.offset;
    }
    return f;
  };
  const V3 inside = (pt(a) + pt(b) + pt(c) + pt(d)) / 4.0;
  std::vector<Face> faces = {make_face(a, b, c, inside), make_face(a, b, d, inside),
                             make_face(a, c, d, inside), make_face(b, c, d, inside)};

  for (std::size_t i = 0; i < n; ++i) {
    if (i == a || i == b || i == c || i == d) continue;
    const V3 q = pt(i);
    std::vector<bool> visible(faces.size());
    bool any = false;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      visible[f] = faces[f].normal.dot(q) - faces[f].offset > eps;
      any = any || visible[f];
    }
    if (!any) continue;
    std::map<std::pair<std::size_t, std::size_t>, int> edges;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!visible[f]) continue;
      for (int e = 0; e < 3; ++e) ++edges[{faces[f].v[e], faces[f].v[(e + 1) % 3]}];
    }
    std::vector<Face> next;
    for (std::size_t f = 0; f < faces.size(); ++f)
      if (!visible[f]) next.push_back(faces[f]);
    for (const auto& [edge, count] : edges) {
      if (edges.count({edge.second, edge.first})) continue;
      Face nf{{edge.first, edge.second, i},
              (pt(edge.second) - pt(edge.first)).cross(q - pt(edge.first)).normalized(), 0.0};
      nf.offset = nf.normal.dot(q);
      next.push_back(nf);
    }
    faces = std::move(next);
  }
  std::vector<std::size_t> out;
  for (const auto& f : faces) out.insert(out.end(), f.v, f.v + 3);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::optional<std::vector<std::size_t>> convex_hull_vertices(const PointSet& points) {
  const Eigen::Index dim = points.cols();
  if (points.rows() == 0) throw InvalidArgument("convex hull of an empty point set");
  if (dim < 1 || dim > 3)
    throw InvalidArgument("convex hull supports 1 to 3 dimensions, got " + std::to_string(dim));
  if (points.rows() < dim + 1 || affine_rank(points) < dim) return std::nullopt;
  std::vector<std::size_t> v;
  if (dim == 1) v = hull_1d(points);
  if (dim == 2) v = hull_2d(points);
  if (dim == 3) v = hull_3d(points);
  if (v.empty()) return std::nullopt;
  return v;
}

Eigen::VectorXd hull_centroid(const PointSet& points) {
  const auto vertices = convex_hull_vertices(points);
  if (!vertices) return points.colwise().mean().transpose();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(points.cols());
  for (std::size_t i : *vertices) sum += points.row(static_cast<Eigen::Index>(i)).transpose();
  return sum / static_cast<double>(vertices->size());
}

double hull_centroid_distance(const PointSet& q_plus, const PointSet& q_minus) {
  if (q_plus.rows() == 0 || q_minus.rows() == 0)
    throw InvalidArgument("hull centroid distance of an empty point set");
  if (q_plus.cols() != q_minus.cols())
    throw InvalidArgument("point sets differ in dimensionality");
  return (hull_centroid(q_plus) - hull_centroid(q_minus)).norm();
}

// ---------------------------------------------------------------------------
// Cluster metrics

SeparationMetrics separation_metrics(const PointSet& q_plus, const PointSet& q_minus) {
  if (q_plus.rows() < 2 || q_minus.rows() < 2)
    throw InvalidArgument("each cluster needs at least 2 points");
  if (q_plus.cols() != q_minus.cols())
    throw InvalidArgument("point sets differ in dimensionality");
  const PointSet* sets[2] = {&q_plus, &q_minus};
  const double n_total = static_cast<double>(q_plus.rows() + q_minus.rows());

  Eigen::RowVectorXd centroid[2] = {q_plus.colwise().mean(), q_minus.colwise().mean()};
  const Eigen::RowVectorXd overall =
      (q_plus.colwise().sum() + q_minus.colwise().sum()) / n_total;

  SeparationMetrics out;

  // Calinski-Harabasz with K = 2: (BCD / 1) / (WCD / (N - 2)).
  double between = 0.0, within = 0.0;
  for (int s = 0; s < 2; ++s) {
    between += static_cast<double>(sets[s]->rows()) * (centroid[s] - overall).squaredNorm();
    within += (sets[s]->rowwise() - centroid[s]).rowwise().squaredNorm().sum();
  }
  if (within == 0.0) {
    out.calinski_harabasz = std::numeric_limits<double>::infinity();
    out.calinski_harabasz_infinite = true;
  } else {
    out.calinski_harabasz = between * (n_total - 2.0) / within;
  }

  // Davies-Bouldin with K = 2: (s_plus + s_minus) / |c_plus - c_minus|.
  double spread[2];
  for (int s = 0; s < 2; ++s)
    spread[s] = (sets[s]->rowwise() - centroid[s]).rowwise().norm().mean();
  const double gap = (centroid[0] - centroid[1]).norm();
  if (gap > 0.0)
    out.davies_bouldin = (spread[0] + spread[1]) / gap;
  else
    out.davies_bouldin =
        spread[0] + spread[1] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;

  // Silhouette: mean over points of (b - a) / max(a, b).
  double total = 0.0;
  for (int s = 0; s < 2; ++s) {
    const PointSet& own = *sets[s];
    const PointSet& other = *sets[1 - s];
    for (Eigen::Index i = 0; i < own.rows(); ++i) {
      const double a = (own.rowwise() - own.row(i)).rowwise().norm().sum() /
                       static_cast<double>(own.rows() - 1);
      const double b = (other.rowwise() - own.row(i)).rowwise().norm().mean();
      const double m = std::max(a, b);
      total += m > 0.0 ? (b - a) / m : 0.0;
    }
  }
  out.silhouette = total / n_total;

  const Eigen::Index hull_dims = std::min<Eigen::Index>(q_plus.cols(), 3);
  out.centroid_distance =
      hull_centroid_distance(q_plus.leftCols(hull_dims), q_minus.leftCols(hull_dims));
  return out;
}

// ---------------------------------------------------------------------------
// Layer sweep

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (!std::isfinite(s.mean)) {
    s.std = 0.0;
    return s;
  }
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

LayerDivergenceReport layer_sweep(const DatasetManifest& manifest, const std::string& persona,
                                  const LayerSweepOptions& options,
                                  std::vector<PcaScatter>* scatter) {
  if (!manifest.has_persona(persona)) throw InvalidArgument("unknown persona '" + persona + "'");
  if (options.seeds.empty()) throw InvalidArgument("layer sweep needs at least one seed");
  const std::vector<int> available = manifest.layers_for(persona);
  std::vector<int> layers = options.layers.empty() ? available : options.layers;
  for (int layer : layers)
    if (!std::binary_search(available.begin(), available.end(), layer))
      throw InvalidArgument("persona '" + persona + "' has no matrices for layer " +
                            std::to_string(layer));
  if (layers.empty()) throw DataError("persona '" + persona + "' has no complete layers");

  LayerDivergenceReport report;
  report.persona = persona;
  report.model_id = manifest.model_id;
  report.k = options.k;
  report.n = options.n;
  report.seeds = options.seeds;
  report.layers.resize(layers.size());
  std::vector<PcaScatter> scatters(layers.size());

  parallel_for(layers.size(), options.jobs, [&](std::size_t li) {
    const int layer = layers[li];
    const ActivationMatrix plus = manifest.load(*manifest.find({persona, Direction::kMatching, layer}));
    const ActivationMatrix minus =
        manifest.load(*manifest.find({persona, Direction::kNotMatching, layer}));
    LayerMetrics& lm = report.layers[li];
    lm.layer = layer;
    std::vector<double> sh, ch, db, cd, evr;
    for (std::size_t si = 0; si < options.seeds.size(); ++si) {
      const std::uint64_t seed = options.seeds[si];
      const PointSet e_plus = to_points(sample(plus, options.n, Rng::derive({seed, 1}).next()));
      const PointSet e_minus = to_points(sample(minus, options.n, Rng::derive({seed, 2}).next()));
      PointSet all(e_plus.rows() + e_minus.rows(), e_plus.cols());
      all << e_plus, e_minus;
      const PcaModel model = fit_pca(all, options.k, options.pca);
      const PointSet q_plus = project(model, e_plus);
      const PointSet q_minus = project(model, e_minus);
      SeparationMetrics m = options.raw_space_metrics ? separation_metrics(e_plus, e_minus)
                                                      : separation_metrics(q_plus, q_minus);
      if (options.raw_space_metrics) {
        const Eigen::Index d = std::min<Eigen::Index>(q_plus.cols(), 3);
        m.centroid_distance = hull_centroid_distance(q_plus.leftCols(d), q_minus.leftCols(d));
      }
      lm.runs.push_back(m);
      sh.push_back(m.silhouette);
      ch.push_back(m.calinski_harabasz);
      db.push_back(m.davies_bouldin);
      cd.push_back(m.centroid_distance);
      evr.push_back(model.explained_variance_ratio.sum());
      if (si == 0) {
        scatters[li] = {layer, seed, q_plus, q_minus,
                        std::vector<double>(model.explained_variance_ratio.data(),
                                            model.explained_variance_ratio.data() +
                                                model.explained_variance_ratio.size())};
      }
    }
    lm.silhouette = summarize(sh);
    lm.calinski_harabasz = summarize(ch);
    lm.davies_bouldin = summarize(db);
    lm.centroid_distance = summarize(cd);
    lm.explained_variance_ratio = summarize(evr);
  });
  if (scatter) *scatter = std::move(scatters);
  return report;
}

}  // namespace actscan
