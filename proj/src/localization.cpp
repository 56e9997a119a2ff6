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

#include "actscan/localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "actscan/error.hpp"
#include "actscan/parallel.hpp"
#include "actscan/rng.hpp"

namespace actscan {

void split_h0_pool(const ActivationMatrix& pool, double background_fraction, std::uint64_t seed,
                   ActivationMatrix& background, ActivationMatrix& test_pool_h0) {
  if (!(background_fraction > 0.0 && background_fraction < 1.0))
    throw InvalidArgument("background fraction must lie in (0, 1)");
  const std::size_t n = pool.rows();
  const auto n_bg = static_cast<std::size_t>(std::llround(background_fraction * static_cast<double>(n)));
  if (n_bg < 1 || n_bg >= n)
    throw DataError("H0 pool of " + std::to_string(n) + " rows is too small to split");
  Rng rng(seed);
  std::vector<std::size_t> perm = rng.sample_without_replacement(n, n);
  std::vector<std::size_t> bg(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_bg));
  std::vector<std::size_t> held(perm.begin() + static_cast<std::ptrdiff_t>(n_bg), perm.end());
  // Keep source order inside each part.
  std::sort(bg.begin(), bg.end());
  std::sort(held.begin(), held.end());
  background = take_rows(pool, bg);
  test_pool_h0 = take_rows(pool, held);
}

ScanTask build_level_task(const DatasetManifest& manifest, int level, const std::string& target,
                          int layer, std::uint64_t split_seed, const TaskOptions& options) {
  ScanTask task;
  task.level = level;
  task.target = target;
  task.layer = layer;
  const std::vector<Direction> plus = {Direction::kMatching};
  ActivationMatrix h0;
  switch (level) {
    case 2: {
      if (!manifest.has_persona(target)) throw InvalidArgument("unknown persona '" + target + "'");
      task.test_pool_h1 = select(manifest, {{target}, plus, layer});
      h0 = select(manifest, {{target}, {Direction::kNotMatching}, layer});
      break;
    }
    case 1: {
      if (!manifest.has_persona(target)) throw InvalidArgument("unknown persona '" + target + "'");
      std::vector<std::string> others;
      for (const auto& p : manifest.personas_in_topic(manifest.topic_of(target)))
        if (p != target) others.push_back(p);
      if (others.empty())
        throw DataError("persona '" + target + "' is alone in its topic; level 1 needs peers");
      task.test_pool_h1 = select(manifest, {{target}, plus, layer});
      h0 = select(manifest, {others, plus, layer});
      break;
    }
    case 0: {
      if (!manifest.has_topic(target)) throw InvalidArgument("unknown topic '" + target + "'");
      std::vector<std::string> inside, outside;
      for (const auto& p : manifest.personas())
        (manifest.topic_of(p) == target ? inside : outside).push_back(p);
      if (outside.empty()) throw DataError("level 0 needs at least two topics");
      task.test_pool_h1 = select(manifest, {inside, plus, layer});
      h0 = select(manifest, {outside, plus, layer});
      break;
    }
    default:
      throw InvalidArgument("level must be 0, 1 or 2, got " + std::to_string(level));
  }
  split_h0_pool(h0, options.background_fraction, split_seed, task.background, task.test_pool_h0);
  return task;
}

PrecisionRecall precision_recall(std::span<const std::string> detected,
                                 std::span<const std::string> truth_h1,
                                 std::span<const std::string> test_universe) {
  if (truth_h1.empty()) throw InvalidArgument("precision/recall needs a non-empty truth set");
  const std::unordered_set<std::string> universe(test_universe.begin(), test_universe.end());
  const std::unordered_set<std::string> truth(truth_h1.begin(), truth_h1.end());
  const std::unordered_set<std::string> found(detected.begin(), detected.end());
  for (const auto& id : truth)
    if (!universe.count(id)) throw InvalidArgument("truth id '" + id + "' not in test universe");
  std::size_t hits = 0;
  for (const auto& id : found) {
    if (!universe.count(id)) throw InvalidArgument("detected id '" + id + "' not in test universe");
    hits += truth.count(id);
  }
  PrecisionRecall pr;
  pr.recall = static_cast<double>(hits) / static_cast<double>(truth.size());
  if (found.empty()) {
    pr.precision = 1.0;
    pr.empty_detection = true;
  } else {
    pr.precision = static_cast<double>(hits) / static_cast<double>(found.size());
  }
  return pr;
}

std::string_view to_string(ConsensusMode mode) {
  switch (mode) {
    case ConsensusMode::kUnion:
      return "union";
    case ConsensusMode::kIntersection:
      return "intersection";
    default:
      return "frequency";
  }
}

ConsensusMode parse_consensus_mode(std::string_view s) {
  if (s == "frequency") return ConsensusMode::kFrequency;
  if (s == "union") return ConsensusMode::kUnion;
  if (s == "intersection") return ConsensusMode::kIntersection;
  throw InvalidArgument("unknown consensus mode '" + std::string(s) + "'");
}

std::vector<std::size_t> consensus_set(std::span<const double> frequency, double tau) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < frequency.size(); ++j)
    if (frequency[j] >= tau) out.push_back(j);
  return out;
}

namespace {

struct TestDraw {
  ActivationMatrix test;
  std::vector<std::string> truth;
};

// Pool rows without ids get positional ones so truth can still be tracked.
std::vector<std::string> pick_ids(const ActivationMatrix& pool, std::span<const std::size_t> rows,
                                  const char* prefix) {
  std::vector<std::string> ids;
  for (std::size_t r : rows)
    ids.push_back(pool.sentence_ids.size() == pool.rows() ? pool.sentence_ids[r]
                                                          : prefix + std::to_string(r));
  return ids;
}

void check_test_options(const ScanTask& task, const LocalizationOptions& options) {
  if (options.n_runs < 1) throw InvalidArgument("n_runs must be >= 1");
  if (!(options.h1_fraction >= 0.0 && options.h1_fraction <= 1.0))
    throw InvalidArgument("h1_fraction must lie in [0, 1]");
  const auto n_h1 = static_cast<std::size_t>(
      std::llround(options.h1_fraction * static_cast<double>(options.test_size)));
  const std::size_t n_h0 = options.test_size - n_h1;
  if (options.test_size < 1) throw InvalidArgument("test_size must be >= 1");
  if (n_h1 > task.test_pool_h1.rows() || n_h0 > task.test_pool_h0.rows())
    throw DataError("test composition " + std::to_string(n_h1) + " H1 + " + std::to_string(n_h0) +
                    " H0 exceeds pools of " + std::to_string(task.test_pool_h1.rows()) + " and " +
                    std::to_string(task.test_pool_h0.rows()) + " rows");
  if (task.background.rows() == 0) throw DataError("scan task has an empty background");
}

TestDraw draw_test(const ScanTask& task, const LocalizationOptions& options, std::size_t run) {
  const auto n_h1 = static_cast<std::size_t>(
      std::llround(options.h1_fraction * static_cast<double>(options.test_size)));
  const std::size_t n_h0 = options.test_size - n_h1;
  Rng rng = Rng::derive({options.seed, static_cast<std::uint64_t>(run), 0x7e57});

  const auto pick_h1 = rng.sample_without_replacement(task.test_pool_h1.rows(), n_h1);
  const auto pick_h0 = rng.sample_without_replacement(task.test_pool_h0.rows(), n_h0);
  ActivationMatrix parts[2] = {take_rows(task.test_pool_h1, pick_h1),
                               take_rows(task.test_pool_h0, pick_h0)};
  parts[0].sentence_ids = pick_ids(task.test_pool_h1, pick_h1, "h1:");
  parts[1].sentence_ids = pick_ids(task.test_pool_h0, pick_h0, "h0:");
  const ActivationMatrix joined = concat_rows(parts);
  const auto shuffle = rng.sample_without_replacement(joined.rows(), joined.rows());
  TestDraw draw;
  draw.test = take_rows(joined, shuffle);
  draw.truth = parts[0].sentence_ids;
  return draw;
}

}  // namespace

LocalizationReport run_localization(const ScanTask& task, const ScanConfig& scan_config,
                                    const LocalizationOptions& options) {
  scan_config.validate();
  check_test_options(task, options);
  if (!(options.tau >= 0.0 && options.tau <= 1.0)) throw InvalidArgument("tau must lie in [0, 1]");
  const std::size_t width = task.background.cols();

  LocalizationReport report;
  report.level = task.level;
  report.target = task.target;
  report.layer = task.layer;
  report.n_runs = options.n_runs;
  report.test_size = options.test_size;
  report.h1_fraction = options.h1_fraction;
  report.tau = options.tau;
  report.consensus_mode = options.consensus;
  report.scan_config = scan_config;
  report.runs.resize(options.n_runs);

  std::vector<std::vector<std::size_t>> positions(options.n_runs);
  parallel_for(options.n_runs, options.jobs, [&](std::size_t r) {
    const TestDraw draw = draw_test(task, options, r);
    const PValueMatrix p = empirical_pvalues(task.background, draw.test, options.pvalues);
    ScanConfig cfg = scan_config;
    cfg.seed = Rng::derive({scan_config.seed, static_cast<std::uint64_t>(r)}).next();
    cfg.jobs = 1;
    const ScanResult result = scan(p, cfg);

    std::vector<std::string> detected;
    for (std::size_t row : result.sentences) detected.push_back(draw.test.sentence_ids[row]);
    LocalizationRun& run = report.runs[r];
    run.score = result.score;
    run.detected_sentences = result.sentences.size();
    run.detected_positions = result.positions.size();
    if (draw.truth.empty()) {
      run.spurious = true;
      run.precision = detected.empty() ? 1.0 : 0.0;
      run.recall = 0.0;
      run.empty_detection = detected.empty();
    } else {
      const PrecisionRecall pr = precision_recall(detected, draw.truth, draw.test.sentence_ids);
      run.precision = pr.precision;
      run.recall = pr.recall;
      run.empty_detection = pr.empty_detection;
    }
    positions[r] = result.positions;
  });

  std::vector<double> precision, recall, score;
  std::vector<std::size_t> hits(width, 0);
  for (std::size_t r = 0; r < options.n_runs; ++r) {
    precision.push_back(report.runs[r].precision);
    recall.push_back(report.runs[r].recall);
    score.push_back(report.runs[r].score);
    for (std::size_t j : positions[r]) ++hits[j];
  }
  report.precision = summarize(precision);
  report.recall = summarize(recall);
  report.score = summarize(score);
  report.selection_frequency.resize(width);
  for (std::size_t j = 0; j < width; ++j)
    report.selection_frequency[j] =
        static_cast<double>(hits[j]) / static_cast<double>(options.n_runs);
  switch (options.consensus) {
    case ConsensusMode::kFrequency:
      report.consensus = consensus_set(report.selection_frequency, options.tau);
      break;
    case ConsensusMode::kUnion:
      for (std::size_t j = 0; j < width; ++j)
        if (hits[j] > 0) report.consensus.push_back(j);
      break;
    case ConsensusMode::kIntersection:
      for (std::size_t j = 0; j < width; ++j)
        if (hits[j] == options.n_runs) report.consensus.push_back(j);
      break;
  }
  report.empty_consensus = report.consensus.empty();
  return report;
}

// ---------------------------------------------------------------------------
// KMeans baseline

PrecisionRecall baseline_kmeans(const ActivationMatrix& test, std::span<const std::string> truth_h1,
                                std::uint64_t seed, const KMeansOptions& options) {
  if (test.rows() < 2) throw InvalidArgument("k-means baseline needs at least 2 rows");
  if (test.sentence_ids.size() != test.rows())
    throw InvalidArgument("k-means baseline needs sentence ids on every row");
  const PointSet x = to_points(test);
  const Eigen::Index n = x.rows();

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double mean_var = (x.rowwise() - mean).squaredNorm() / static_cast<double>(n * x.cols());
  if (!(mean_var > 0.0)) throw DataError("k-means baseline: all rows are identical");
  const double tol = options.tol * mean_var;

  // k-means++ seeding.
  Rng rng(seed);
  Eigen::MatrixXd centers(2, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  const double total = d2.sum();
  double target = rng.uniform() * total;
  Eigen::Index pick = n - 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d2(i) <= 0.0) continue;
    if (target < d2(i)) {
      pick = i;
      break;
    }
    target -= d2(i);
  }
  while (d2(pick) <= 0.0) --pick;
  centers.row(1) = x.row(pick);

  std::vector<int> label(static_cast<std::size_t>(n), 0);
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = (x.row(i) - centers.row(0)).squaredNorm();
      const double b = (x.row(i) - centers.row(1)).squaredNorm();
      label[static_cast<std::size_t>(i)] = b < a ? 1 : 0;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(2, x.cols());
    Eigen::Index count[2] = {0, 0};
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = label[static_cast<std::size_t>(i)];
      next.row(l) += x.row(i);
      ++count[l];
    }
    for (int c = 0; c < 2; ++c) {
      if (count[c] > 0) {
        next.row(c) /= static_cast<double>(count[c]);
      } else {
        // Re-seed an empty cluster at the point farthest from the other center.
        Eigen::Index far = 0;
        (x.rowwise() - centers.row(1 - c)).rowwise().squaredNorm().maxCoeff(&far);
        next.row(c) = x.row(far);
      }
    }
    const double shift = (next - centers).squaredNorm();
    centers = next;
    if (shift <= tol) break;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = (x.row(i) - centers.row(0)).squaredNorm();
    const double b = (x.row(i) - centers.row(1)).squaredNorm();
    label[static_cast<std::size_t>(i)] = b < a ? 1 : 0;
  }

  const std::unordered_set<std::string> truth(truth_h1.begin(), truth_h1.end());
  std::size_t agree = 0;  // rows where (label == 1) == (row in truth)
  for (std::size_t i = 0; i < label.size(); ++i)
    agree += (label[i] == 1) == (truth.count(test.sentence_ids[i]) > 0);
  const int h1_cluster = 2 * agree >= label.size() ? 1 : 0;

  std::vector<std::string> detected;
  for (std::size_t i = 0; i < label.size(); ++i)
    if (label[i] == h1_cluster) detected.push_back(test.sentence_ids[i]);
  return precision_recall(detected, truth_h1, test.sentence_ids);
}

BaselineReport run_kmeans_baseline(const ScanTask& task, const LocalizationOptions& options,
                                   const KMeansOptions& kmeans) {
  check_test_options(task, options);
  std::vector<PrecisionRecall> out(options.n_runs);
  parallel_for(options.n_runs, options.jobs, [&](std::size_t r) {
    const TestDraw draw = draw_test(task, options, r);
    out[r] = baseline_kmeans(draw.test, draw.truth,
                             Rng::derive({options.seed, static_cast<std::uint64_t>(r), 0x6b6d}).next(),
                             kmeans);
  });
  std::vector<double> precision, recall;
  for (const auto& pr : out) {
    precision.push_back(pr.precision);
    recall.push_back(pr.recall);
  }
  BaselineReport report;
  report.precision = summarize(precision);
  report.recall = summarize(recall);
  report.n_runs = options.n_runs;
  return report;
}

}  // namespace actscan
