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
#include <span>
#include <string_view>
#include <vector>

#include "actscan/activation_store.hpp"

namespace actscan {

enum class TailMode {
  kUpper,     // p = (#{b >= e} + 1) / (N + 1)
  kTwoSided,  // p' = min(1, 2 * min(p, 1 - p + 1 / (N + 1)))
};

struct PValueOptions {
  TailMode tail = TailMode::kUpper;
  // Count only background values strictly greater than the test value.
  bool strict = false;
};

// Empirical p-values of test activations against per-column background
// samples. Row-major, rows x cols.
class PValueMatrix {
 public:
  PValueMatrix() = default;
  PValueMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
               std::size_t background_size);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t background_size() const { return background_size_; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t background_size_ = 0;
  std::vector<double> values_;
};

PValueMatrix empirical_pvalues(const ActivationMatrix& background, const ActivationMatrix& test,
                               const PValueOptions& options = {});

enum class ScoreKind { kBerkJones, kHigherCriticism };

std::string_view to_string(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view s);

// Score of a subset holding n_total p-values of which n_alpha are <= alpha.
// Berk-Jones: N * KL(N_a / N || alpha) when N_a / N > alpha, else 0.
// Higher criticism: (N_a - N alpha) / sqrt(N alpha (1 - alpha)), floored at 0.
double npss_score(std::size_t n_total, std::size_t n_alpha, double alpha, ScoreKind kind);

struct ScanConfig {
  ScoreKind score_kind = ScoreKind::kBerkJones;
  double alpha_max = 0.5;
  std::size_t restarts = 10;
  std::size_t max_iters = 20;
  double init_fraction = 0.5;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;  // restarts run concurrently when > 1

  void validate() const;
};

enum class ScanAxis { kSentences, kPositions };

struct AxisOptimum {
  std::vector<std::size_t> subset;  // ascending
  double score = 0.0;
  double alpha = 0.0;
};

// Exact maximizer over all subsets of the free axis and every candidate
// alpha, for a fixed non-empty index set on the other axis.
AxisOptimum ltss_optimize(const PValueMatrix& p, std::span<const std::size_t> fixed,
                          ScanAxis axis_to_optimize, const ScanConfig& config);

struct ScanResult {
  std::vector<std::size_t> sentences;  // ascending row indices
  std::vector<std::size_t> positions;  // ascending column indices
  double score = 0.0;
  double alpha_star = 0.0;
  std::vector<double> restart_scores;
  std::size_t iterations_used = 0;  // alternation steps of the winning restart

  bool operator==(const ScanResult&) const = default;
};

// Score recomputed from the subset's aggregated counts.
double subset_score(const PValueMatrix& p, std::span<const std::size_t> sentences,
                    std::span<const std::size_t> positions, double alpha, ScoreKind kind);

// Iterative ascent alternating ltss_optimize over sentences and positions,
// from `restarts` random position subsets. Returns the best restart (lowest
// index on ties).
ScanResult scan(const PValueMatrix& p, const ScanConfig& config);

inline constexpr std::size_t kBruteForceLimit = 8;

// Exhaustive maximum over every non-empty sentence and position subset.
// Both axes must have at most kBruteForceLimit elements. Ties go to the
// smallest alpha, then the smallest sentence mask, then the smallest
// position mask.
ScanResult brute_force_scan(const PValueMatrix& p, const ScanConfig& config);

}  // namespace actscan
