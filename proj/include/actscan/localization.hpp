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
#include <string>
#include <vector>

#include "actscan/activation_store.hpp"
#include "actscan/layer_divergence.hpp"
#include "actscan/subset_scan.hpp"

namespace actscan {

// What a scan task contrasts:
//   2: persona matching (H1) against the same persona's notmatching (H0)
//   1: persona matching against the matching rows of the other personas in
//      its topic
//   0: every matching row of a topic against the matching rows of all other
//      topics
struct ScanTask {
  int level = 2;
  std::string target;  // persona for levels 1 and 2, topic for level 0
  int layer = 0;
  ActivationMatrix background;    // H0 rows used as the expectation
  ActivationMatrix test_pool_h0;  // held-out H0 rows, disjoint from background
  ActivationMatrix test_pool_h1;
};

struct TaskOptions {
  double background_fraction = 2.0 / 3.0;
};

ScanTask build_level_task(const DatasetManifest& manifest, int level, const std::string& target,
                          int layer, std::uint64_t split_seed, const TaskOptions& options = {});

// Splits an H0 pool into (background, held-out test rows), seeded.
void split_h0_pool(const ActivationMatrix& pool, double background_fraction, std::uint64_t seed,
                   ActivationMatrix& background, ActivationMatrix& test_pool_h0);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  // Nothing was detected; precision is reported as 1.
  bool empty_detection = false;
};

PrecisionRecall precision_recall(std::span<const std::string> detected,
                                 std::span<const std::string> truth_h1,
                                 std::span<const std::string> test_universe);

enum class ConsensusMode { kFrequency, kUnion, kIntersection };

std::string_view to_string(ConsensusMode mode);
ConsensusMode parse_consensus_mode(std::string_view s);

struct LocalizationOptions {
  std::size_t n_runs = 100;
  std::size_t test_size = 200;
  double h1_fraction = 0.5;
  double tau = 0.5;
  ConsensusMode consensus = ConsensusMode::kFrequency;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  PValueOptions pvalues;
};

struct LocalizationRun {
  double precision = 0.0;
  double recall = 0.0;
  double score = 0.0;
  std::size_t detected_sentences = 0;
  std::size_t detected_positions = 0;
  bool empty_detection = false;
  // The test set held no H1 rows, so every detection is spurious.
  bool spurious = false;

  bool operator==(const LocalizationRun&) const = default;
};

struct LocalizationReport {
  int level = 0;
  std::string target;
  int layer = 0;
  std::size_t n_runs = 0;
  std::size_t test_size = 0;
  double h1_fraction = 0.0;
  double tau = 0.0;
  ConsensusMode consensus_mode = ConsensusMode::kFrequency;
  ScanConfig scan_config;
  MetricSummary precision;
  MetricSummary recall;
  MetricSummary score;
  std::vector<double> selection_frequency;  // one entry per position
  std::vector<std::size_t> consensus;
  bool empty_consensus = false;
  std::vector<LocalizationRun> runs;
};

// {j : frequency[j] >= tau}, ascending.
std::vector<std::size_t> consensus_set(std::span<const double> frequency, double tau);

LocalizationReport run_localization(const ScanTask& task, const ScanConfig& scan_config,
                                    const LocalizationOptions& options = {});

struct KMeansOptions {
  std::size_t max_iters = 300;
  double tol = 1e-6;  // relative to the mean per-column variance
};

// Two-means on full rows with k-means++ seeding. The cluster labelled H1 is
// the one whose assignment maximizes accuracy against truth_h1.
PrecisionRecall baseline_kmeans(const ActivationMatrix& test, std::span<const std::string> truth_h1,
                                std::uint64_t seed, const KMeansOptions& options = {});

struct BaselineReport {
  MetricSummary precision;
  MetricSummary recall;
  std::size_t n_runs = 0;
};

// KMeans over the same seeded test draws run_localization uses.
BaselineReport run_kmeans_baseline(const ScanTask& task, const LocalizationOptions& options,
                                   const KMeansOptions& kmeans = {});

}  // namespace actscan
