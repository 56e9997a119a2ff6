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

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "actscan/layer_divergence.hpp"
#include "actscan/localization.hpp"
#include "actscan/overlap.hpp"
#include "actscan/subset_scan.hpp"
#include "actscan/synth_bench.hpp"

namespace actscan {

// Every report carries a "kind" tag so plot-data can check what it got.
nlohmann::json to_json(const LayerDivergenceReport& report);
nlohmann::json to_json(const std::vector<PcaScatter>& scatter, const std::string& persona);
nlohmann::json to_json(const ScanConfig& config);
nlohmann::json to_json(const ScanResult& result, const ScanConfig& config);
nlohmann::json to_json(const LocalizationReport& report, const std::string& selection_frequency_path);
nlohmann::json to_json(const BaselineReport& report);
nlohmann::json to_json(const PowerReport& report);
nlohmann::json to_json(const UpsetData& upset, const std::vector<std::vector<double>>& jaccard);

struct CrossLevelPairing {
  std::string level0_name;
  std::string level2_name;
  CrossLevelOverlap overlap;
};
nlohmann::json to_json(const std::vector<CrossLevelPairing>& pairings, std::size_t universe);

// Non-finite values are written as the strings "inf", "-inf" and "nan".
nlohmann::json number(double v);

// Canonical serialization: sorted keys, two-space indent, trailing newline.
std::string dump(const nlohmann::json& doc);

enum class PlotKind { kLayerCurves, kUpset, kVenn, kSankey, kPcaScatter };

std::string_view to_string(PlotKind kind);
PlotKind parse_plot_kind(std::string_view s);

// CSV tables behind each figure type:
//   layer-curves: metric,layer,mean,std
//   upset:        region,degree,count,percent
//   venn:         one 0/1 column per set name, then count
//   sankey:       source,target,value
//   pca-scatter:  layer,pc1,pc2,pc3,direction
// Throws InvalidArgument when the report kind does not fit the plot kind.
std::string emit_plot_data(const nlohmann::json& report, PlotKind kind);

}  // namespace actscan
