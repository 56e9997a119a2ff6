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

#include "actscan/subset_scan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "actscan/error.hpp"
#include "actscan/parallel.hpp"
#include "actscan/rng.hpp"

namespace actscan {

PValueMatrix::PValueMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                           std::size_t background_size)
    : rows_(rows), cols_(cols), background_size_(background_size), values_(std::move(values)) {
  if (values_.size() != rows * cols) throw InvalidArgument("p-value payload size mismatch");
  for (double v : values_)
    if (!(v > 0.0 && v <= 1.0)) throw InvalidArgument("p-value outside (0, 1]");
}

PValueMatrix empirical_pvalues(const ActivationMatrix& background, const ActivationMatrix& test,
                               const PValueOptions& options) {
  if (background.rows() == 0) throw InvalidArgument("empty background");
  if (background.cols() != test.cols())
    throw InvalidArgument("background has " + std::to_string(background.cols()) +
                          " columns, test has " + std::to_string(test.cols()));
  const std::size_t n = background.rows();
  const std::size_t cols = test.cols();
  const double denom = static_cast<double>(n + 1);
  std::vector<double> values(test.rows() * cols);
  std::vector<float> column(n);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t b = 0; b < n; ++b) column[b] = background(b, j);
    std::sort(column.begin(), column.end());
    for (std::size_t m = 0; m < test.rows(); ++m) {
      const float e = test(m, j);
      const auto it = options.strict ? std::upper_bound(column.begin(), column.end(), e)
                                     : std::lower_bound(column.begin(), column.end(), e);
      const auto exceed = static_cast<std::size_t>(column.end() - it);
      double pv = static_cast<double>(exceed + 1) / denom;
      if (options.tail == TailMode::kTwoSided) {
        const double lower = 1.0 - pv + 1.0 / denom;
        pv = std::min(1.0, 2.0 * std::min(pv, lower));
      }
      values[m * cols + j] = pv;
    }
  }
  return PValueMatrix(test.rows(), cols, std::move(values), n);
}

std::string_view to_string(ScoreKind kind) {
  return kind == ScoreKind::kBerkJones ? "berk-jones" : "higher-criticism";
}

ScoreKind parse_score_kind(std::string_view s) {
  if (s == "berk-jones" || s == "bj" || s == "BerkJones") return ScoreKind::kBerkJones;
  if (s == "higher-criticism" || s == "hc" || s == "HigherCriticism")
    return ScoreKind::kHigherCriticism;
  throw InvalidArgument("unknown score kind '" + std::string(s) + "'");
}

double npss_score(std::size_t n_total, std::size_t n_alpha, double alpha, ScoreKind kind) {
  if (n_total < 1) throw InvalidArgument("score needs N >= 1");
  if (n_alpha > n_total) throw InvalidArgument("N_alpha exceeds N");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  const double n = static_cast<double>(n_total);
  const double na = static_cast<double>(n_alpha);
  if (kind == ScoreKind::kBerkJones) {
    const double x = na / n;
    if (!(x > alpha)) return 0.0;
    double kl = x * std::log(x / alpha);
    if (x < 1.0) kl += (1.0 - x) * std::log((1.0 - x) / (1.0 - alpha));
    return n * kl;
  }
  const double hc = (na - n * alpha) / std::sqrt(n * alpha * (1.0 - alpha));
  return hc > 0.0 ? hc : 0.0;
}

void ScanConfig::validate() const {
  if (!(alpha_max > 0.0 && alpha_max <= 1.0)) throw InvalidArgument("alpha_max must lie in (0, 1]");
  if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
  if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
  if (!(init_fraction > 0.0 && init_fraction <= 1.0))
    throw InvalidArgument("init_fraction must lie in (0, 1]");
}

namespace {

// A subset whose threshold is not below 1 counts every p-value, so it can
// never exceed its null proportion.
double grid_score(std::size_t n_total, std::size_t n_alpha, double alpha, ScoreKind kind) {
  return alpha >= 1.0 ? 0.0 : npss_score(n_total, n_alpha, alpha, kind);
}

std::vector<double> alpha_grid(std::vector<double> observed, double alpha_max) {
  std::vector<double> grid;
  grid.reserve(observed.size() + 1);
  for (double v : observed)
    if (v <= alpha_max && v < 1.0) grid.push_back(v);
  grid.push_back(alpha_max);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.size() > 1 && grid.back() >= 1.0) grid.pop_back();
  return grid;
}

std::vector<std::size_t> normalized(std::span<const std::size_t> idx, std::size_t bound,
                                    const char* what) {
  if (idx.empty()) throw InvalidArgument(std::string("empty fixed ") + what + " set");
  std::vector<std::size_t> out(idx.begin(), idx.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.back() >= bound)
    throw InvalidArgument(std::string(what) + " index " + std::to_string(out.back()) +
                          " out of range");
  return out;
}

}  // namespace

AxisOptimum ltss_optimize(const PValueMatrix& p, std::span<const std::size_t> fixed,
                          ScanAxis axis_to_optimize, const ScanConfig& config) {
  if (p.rows() == 0 || p.cols() == 0) throw InvalidArgument("empty p-value matrix");
  const bool free_rows = axis_to_optimize == ScanAxis::kSentences;
  const std::size_t n_free = free_rows ? p.rows() : p.cols();
  const std::vector<std::size_t> fix =
      normalized(fixed, free_rows ? p.cols() : p.rows(), free_rows ? "position" : "sentence");

  // Sorted slice values per free element.
  std::vector<std::vector<double>> slice(n_free, std::vector<double>(fix.size()));
  std::vector<double> observed;
  observed.reserve(n_free * fix.size());
  for (std::size_t i = 0; i < n_free; ++i) {
    for (std::size_t k = 0; k < fix.size(); ++k)
      slice[i][k] = free_rows ? p(i, fix[k]) : p(fix[k], i);
    std::sort(slice[i].begin(), slice[i].end());
    observed.insert(observed.end(), slice[i].begin(), slice[i].end());
  }
  const std::vector<double> grid = alpha_grid(std::move(observed), config.alpha_max);

  AxisOptimum best;
  best.score = -std::numeric_limits<double>::infinity();
  std::size_t best_len = 0;

  std::vector<std::size_t> counts(n_free, 0);
  std::vector<std::size_t> order(n_free);
  auto rank_by_count = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  };
  for (double alpha : grid) {
    for (std::size_t i = 0; i < n_free; ++i) {
      std::size_t c = counts[i];
      while (c < slice[i].size() && slice[i][c] <= alpha) ++c;
      counts[i] = c;
    }
    rank_by_count();
    std::size_t cum = 0;
    for (std::size_t len = 1; len <= n_free; ++len) {
      cum += counts[order[len - 1]];
      const double s = grid_score(len * fix.size(), cum, alpha, config.score_kind);
      if (s > best.score) {
        best.score = s;
        best.alpha = alpha;
        best_len = len;
      }
    }
  }
  for (std::size_t i = 0; i < n_free; ++i)
    counts[i] = static_cast<std::size_t>(
        std::upper_bound(slice[i].begin(), slice[i].end(), best.alpha) - slice[i].begin());
  rank_by_count();
  best.subset.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(best_len));
  std::sort(best.subset.begin(), best.subset.end());
  return best;
}

double subset_score(const PValueMatrix& p, std::span<const std::size_t> sentences,
                    std::span<const std::size_t> positions, double alpha, ScoreKind kind) {
  if (sentences.empty() || positions.empty()) throw InvalidArgument("empty subset");
  std::size_t n_alpha = 0;
  for (std::size_t r : sentences)
    for (std::size_t c : positions)
      if (p(r, c) <= alpha) ++n_alpha;
  return grid_score(sentences.size() * positions.size(), n_alpha, alpha, kind);
}

namespace {

struct RestartOutcome {
  AxisOptimum rows;
  AxisOptimum cols;
  std::size_t iterations = 0;
};

RestartOutcome run_restart(const PValueMatrix& p, const ScanConfig& config, std::size_t r) {
  Rng rng = Rng::derive({config.seed, static_cast<std::uint64_t>(r)});
  std::vector<std::size_t> positions;
  while (positions.empty()) {
    for (std::size_t j = 0; j < p.cols(); ++j)
      if (rng.bernoulli(config.init_fraction)) positions.push_back(j);
  }

  RestartOutcome out;
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < config.max_iters; ++it) {
    AxisOptimum rows = ltss_optimize(p, positions, ScanAxis::kSentences, config);
    AxisOptimum cols = ltss_optimize(p, rows.subset, ScanAxis::kPositions, config);
    // A step can only lose score for higher criticism with alpha_max > 0.5,
    // where the candidate grid is not lossless; keep the previous state.
    if (it > 0 && cols.score < previous) break;
    out.rows = std::move(rows);
    out.cols = std::move(cols);
    out.iterations = it + 1;
    const double gain = out.cols.score - previous;
    previous = out.cols.score;
    positions = out.cols.subset;
    if (gain < 1e-12) break;
  }
  return out;
}

}  // namespace

ScanResult scan(const PValueMatrix& p, const ScanConfig& config) {
  config.validate();
  if (p.rows() == 0 || p.cols() == 0) throw InvalidArgument("empty p-value matrix");
  std::vector<RestartOutcome> outcomes(config.restarts);
  parallel_for(config.restarts, config.jobs,
               [&](std::size_t r) { outcomes[r] = run_restart(p, config, r); });

  ScanResult result;
  std::size_t winner = 0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    result.restart_scores.push_back(outcomes[r].cols.score);
    if (outcomes[r].cols.score > outcomes[winner].cols.score) winner = r;
  }
  const RestartOutcome& best = outcomes[winner];
  result.sentences = best.rows.subset;
  result.positions = best.cols.subset;
  result.score = best.cols.score;
  result.alpha_star = best.cols.alpha;
  result.iterations_used = best.iterations;
  return result;
}

ScanResult brute_force_scan(const PValueMatrix& p, const ScanConfig& config) {
  config.validate();
  if (p.rows() == 0 || p.cols() == 0) throw InvalidArgument("empty p-value matrix");
  if (p.rows() > kBruteForceLimit || p.cols() > kBruteForceLimit)
    throw InvalidArgument("brute-force scan limited to " + std::to_string(kBruteForceLimit) + "x" +
                          std::to_string(kBruteForceLimit) + " instances, got " +
                          std::to_string(p.rows()) + "x" + std::to_string(p.cols()));
  const std::size_t m = p.rows();
  const std::size_t j = p.cols();
  const std::vector<double> grid =
      alpha_grid(std::vector<double>(p.values().begin(), p.values().end()), config.alpha_max);

  const std::size_t row_masks = std::size_t{1} << m;
  const std::size_t col_masks = std::size_t{1} << j;
  std::vector<std::size_t> col_count(row_masks * j);
  std::vector<std::size_t> cell_count(col_masks);

  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_rows = 1, best_cols = 1;
  double best_alpha = grid.front();
  for (double alpha : grid) {
    std::fill(col_count.begin(), col_count.begin() + static_cast<std::ptrdiff_t>(j), 0);
    for (std::size_t rm = 1; rm < row_masks; ++rm) {
      const std::size_t low = static_cast<std::size_t>(__builtin_ctzll(rm));
      const std::size_t prev = rm & (rm - 1);
      for (std::size_t c = 0; c < j; ++c)
        col_count[rm * j + c] = col_count[prev * j + c] + (p(low, c) <= alpha ? 1 : 0);
      const std::size_t n_rows = static_cast<std::size_t>(__builtin_popcountll(rm));
      cell_count[0] = 0;
      for (std::size_t cm = 1; cm < col_masks; ++cm) {
        const std::size_t lc = static_cast<std::size_t>(__builtin_ctzll(cm));
        cell_count[cm] = cell_count[cm & (cm - 1)] + col_count[rm * j + lc];
        const std::size_t n_cols = static_cast<std::size_t>(__builtin_popcountll(cm));
        const double s = grid_score(n_rows * n_cols, cell_count[cm], alpha, config.score_kind);
        if (s > best) {
          best = s;
          best_rows = rm;
          best_cols = cm;
          best_alpha = alpha;
        }
      }
    }
  }
  ScanResult result;
  for (std::size_t r = 0; r < m; ++r)
    if (best_rows >> r & 1) result.sentences.push_back(r);
  for (std::size_t c = 0; c < j; ++c)
    if (best_cols >> c & 1) result.positions.push_back(c);
  result.score = best;
  result.alpha_star = best_alpha;
  result.restart_scores = {best};
  return result;
}

}  // namespace actscan
