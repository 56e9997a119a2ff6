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

#include "actscan/reports.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "actscan/error.hpp"

namespace actscan {

using nlohmann::json;

json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

namespace {

json summary(const MetricSummary& s) { return {{"mean", number(s.mean)}, {"std", number(s.std)}}; }

double as_double(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    return NAN;
  }
  return v.get<double>();
}

std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

std::string require_kind(const json& report) {
  if (!report.is_object() || !report.contains("kind"))
    throw InvalidArgument("report has no \"kind\" field");
  return report.at("kind").get<std::string>();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

json to_json(const LayerDivergenceReport& report) {
  json layers = json::array();
  for (const auto& l : report.layers) {
    layers.push_back({{"layer", l.layer},
                      {"silhouette", summary(l.silhouette)},
                      {"calinski_harabasz", summary(l.calinski_harabasz)},
                      {"davies_bouldin", summary(l.davies_bouldin)},
                      {"centroid_distance", summary(l.centroid_distance)},
                      {"explained_variance_ratio", summary(l.explained_variance_ratio)}});
  }
  return {{"kind", "layer-divergence"},
          {"persona", report.persona},
          {"model_id", report.model_id},
          {"k", report.k},
          {"n", report.n},
          {"seeds", report.seeds},
          {"layers", std::move(layers)}};
}

json to_json(const std::vector<PcaScatter>& scatter, const std::string& persona) {
  json layers = json::array();
  for (const auto& s : scatter) {
    json points = json::array();
    auto add = [&](const PointSet& q, const char* direction) {
      for (Eigen::Index i = 0; i < q.rows(); ++i) {
        json coords = json::array();
        for (Eigen::Index c = 0; c < q.cols(); ++c) coords.push_back(q(i, c));
        points.push_back({{"pc", std::move(coords)}, {"direction", direction}});
      }
    };
    add(s.q_plus, "matching");
    add(s.q_minus, "notmatching");
    layers.push_back({{"layer", s.layer},
                      {"seed", s.seed},
                      {"explained_variance_ratio", s.explained_variance_ratio},
                      {"points", std::move(points)}});
  }
  return {{"kind", "pca-scatter"}, {"persona", persona}, {"layers", std::move(layers)}};
}

json to_json(const ScanConfig& config) {
  return {{"score_kind", std::string(to_string(config.score_kind))},
          {"alpha_max", config.alpha_max},
          {"restarts", config.restarts},
          {"max_iters", config.max_iters},
          {"init_fraction", config.init_fraction},
          {"seed", config.seed}};
}

json to_json(const ScanResult& result, const ScanConfig& config) {
  return {{"kind", "scan-result"},
          {"score", number(result.score)},
          {"alpha_star", result.alpha_star},
          {"sentences", result.sentences},
          {"positions", result.positions},
          {"restart_scores", result.restart_scores},
          {"iterations_used", result.iterations_used},
          {"config", to_json(config)}};
}

json to_json(const LocalizationReport& report, const std::string& selection_frequency_path) {
  json runs = json::array();
  for (const auto& r : report.runs) {
    runs.push_back({{"precision", r.precision},
                    {"recall", r.recall},
                    {"score", number(r.score)},
                    {"detected_sentences", r.detected_sentences},
                    {"detected_positions", r.detected_positions},
                    {"empty_detection", r.empty_detection},
                    {"spurious", r.spurious}});
  }
  return {{"kind", "localization"},
          {"level", report.level},
          {"target", report.target},
          {"layer", report.layer},
          {"n_runs", report.n_runs},
          {"test_size", report.test_size},
          {"h1_fraction", report.h1_fraction},
          {"tau", report.tau},
          {"consensus_mode", std::string(to_string(report.consensus_mode))},
          {"precision", summary(report.precision)},
          {"recall", summary(report.recall)},
          {"score", summary(report.score)},
          {"consensus", report.consensus},
          {"empty_consensus", report.empty_consensus},
          {"selection_frequency_path", selection_frequency_path},
          {"scan_config", to_json(report.scan_config)},
          {"runs", std::move(runs)}};
}

json to_json(const BaselineReport& report) {
  return {{"method", "kmeans"},
          {"n_runs", report.n_runs},
          {"precision", summary(report.precision)},
          {"recall", summary(report.recall)}};
}

json to_json(const PowerReport& report) {
  json per_seed = json::array();
  for (const auto& s : report.per_seed) {
    per_seed.push_back({{"seed", s.seed},
                        {"sentence_precision", s.sentence_precision},
                        {"sentence_recall", s.sentence_recall},
                        {"position_precision", s.position_precision},
                        {"position_recall", s.position_recall},
                        {"score", number(s.score)}});
  }
  const SynthConfig& c = report.synth;
  json synth = {{"n_background", c.n_background},
                {"n_signal", c.n_signal},
                {"n_null", c.n_null},
                {"dim", c.dim},
                {"mu", c.mu},
                {"seed", c.seed}};
  if (c.planted_positions.empty())
    synth["planted_count"] = c.planted_count;
  else
    synth["planted_positions"] = c.planted_positions;
  return {{"kind", "synth-power"},
          {"config", {{"synth", std::move(synth)}, {"scan", to_json(report.scan)}, {"n_seeds", report.n_seeds}}},
          {"per_metric",
           {{"sentence_precision", summary(report.sentence_precision)},
            {"sentence_recall", summary(report.sentence_recall)},
            {"position_precision", summary(report.position_precision)},
            {"position_recall", summary(report.position_recall)}}},
          {"per_seed", std::move(per_seed)}};
}

json to_json(const UpsetData& upset, const std::vector<std::vector<double>>& jaccard) {
  json regions = json::array();
  for (const auto& r : upset.regions) {
    std::vector<std::string> key = r.members;
    std::sort(key.begin(), key.end());
    regions.push_back({{"sets", key},
                       {"count", r.count},
                       {"fraction", r.fraction},
                       {"percent", fmt::format("{:.2f}", 100.0 * r.fraction)}});
  }
  json totals = json::object(), unique = json::object();
  for (std::size_t i = 0; i < upset.names.size(); ++i) {
    totals[upset.names[i]] = upset.totals[i];
    unique[upset.names[i]] = upset.unique_counts[i];
  }
  const double denom = upset.universe ? static_cast<double>(upset.universe) : 1.0;
  return {{"kind", "upset"},
          {"names", upset.names},
          {"universe", upset.universe},
          {"regions", std::move(regions)},
          {"totals", std::move(totals)},
          {"unique_counts", std::move(unique)},
          {"shared_all_count", upset.shared_all_count},
          {"shared_all_percent",
           fmt::format("{:.2f}", 100.0 * static_cast<double>(upset.shared_all_count) / denom)},
          {"union_count", upset.union_count},
          {"jaccard", jaccard}};
}

json to_json(const std::vector<CrossLevelPairing>& pairings, std::size_t universe) {
  json out = json::array();
  for (const auto& p : pairings) {
    out.push_back({{"level0", p.level0_name},
                   {"level2", p.level2_name},
                   {"overlap_count", p.overlap.overlap_count},
                   {"level0_size", p.overlap.level0_size},
                   {"level2_size", p.overlap.level2_size},
                   {"fraction_of_level2", p.overlap.fraction_of_level2},
                   {"fraction_of_level0", p.overlap.fraction_of_level0}});
  }
  return {{"kind", "cross-level-overlap"}, {"universe", universe}, {"pairings", std::move(out)}};
}

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::kLayerCurves:
      return "layer-curves";
    case PlotKind::kUpset:
      return "upset";
    case PlotKind::kVenn:
      return "venn";
    case PlotKind::kSankey:
      return "sankey";
    default:
      return "pca-scatter";
  }
}

PlotKind parse_plot_kind(std::string_view s) {
  for (PlotKind k : {PlotKind::kLayerCurves, PlotKind::kUpset, PlotKind::kVenn, PlotKind::kSankey,
                     PlotKind::kPcaScatter})
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown plot kind '" + std::string(s) + "'");
}

std::string emit_plot_data(const json& report, PlotKind kind) {
  const std::string rk = require_kind(report);
  auto expect = [&](const char* want) {
    if (rk != want)
      throw InvalidArgument(std::string(to_string(kind)) + " plot needs a " + want +
                            " report, got " + rk);
  };
  std::string out;
  switch (kind) {
    case PlotKind::kLayerCurves: {
      expect("layer-divergence");
      out = "metric,layer,mean,std\n";
      for (const char* metric :
           {"silhouette", "calinski_harabasz", "davies_bouldin", "centroid_distance"}) {
        for (const auto& l : report.at("layers")) {
          const auto& m = l.at(metric);
          out += fmt::format("{},{},{},{}\n", metric, l.at("layer").get<int>(),
                             fmt_num(as_double(m.at("mean"))), fmt_num(as_double(m.at("std"))));
        }
      }
      break;
    }
    case PlotKind::kUpset: {
      expect("upset");
      out = "region,degree,count,percent\n";
      for (const auto& r : report.at("regions")) {
        const auto sets = r.at("sets").get<std::vector<std::string>>();
        std::string name;
        for (std::size_t i = 0; i < sets.size(); ++i) name += (i ? "&" : "") + sets[i];
        out += fmt::format("{},{},{},{}\n", csv_field(name), sets.size(),
                           r.at("count").get<std::size_t>(), r.at("percent").get<std::string>());
      }
      break;
    }
    case PlotKind::kVenn: {
      expect("upset");
      const auto names = report.at("names").get<std::vector<std::string>>();
      if (names.size() > 3)
        throw InvalidArgument("venn export supports at most 3 sets, got " +
                              std::to_string(names.size()));
      for (const auto& n : names) out += csv_field(n) + ",";
      out += "count\n";
      for (const auto& r : report.at("regions")) {
        const auto sets = r.at("sets").get<std::vector<std::string>>();
        for (const auto& n : names)
          out += std::find(sets.begin(), sets.end(), n) != sets.end() ? "1," : "0,";
        out += std::to_string(r.at("count").get<std::size_t>()) + "\n";
      }
      break;
    }
    case PlotKind::kSankey: {
      expect("cross-level-overlap");
      out = "source,target,value\n";
      for (const auto& p : report.at("pairings"))
        out += fmt::format("{},{},{}\n", csv_field(p.at("level0").get<std::string>()),
                           csv_field(p.at("level2").get<std::string>()),
                           p.at("overlap_count").get<std::size_t>());
      break;
    }
    case PlotKind::kPcaScatter: {
      expect("pca-scatter");
      out = "layer,pc1,pc2,pc3,direction\n";
      for (const auto& l : report.at("layers")) {
        const int layer = l.at("layer").get<int>();
        for (const auto& p : l.at("points")) {
          const auto pc = p.at("pc").get<std::vector<double>>();
          out += std::to_string(layer);
          for (std::size_t c = 0; c < 3; ++c) out += "," + (c < pc.size() ? fmt_num(pc[c]) : "");
          out += "," + p.at("direction").get<std::string>() + "\n";
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace actscan
