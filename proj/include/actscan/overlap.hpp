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

namespace actscan {

inline constexpr std::size_t kMaxUpsetSets = 16;

// Up to 16 labelled index sets over positions [0, universe).
struct NamedSetFamily {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> sets;
  std::size_t universe = 0;

  void validate() const;
};

struct UpsetRegion {
  std::uint32_t mask = 0;            // bit i set: position belongs to set i
  std::vector<std::string> members;  // names in family order
  std::size_t count = 0;             // positions in exactly these sets
  double fraction = 0.0;             // count / universe
};

struct UpsetData {
  std::vector<std::string> names;
  std::size_t universe = 0;
  std::vector<UpsetRegion> regions;  // all 2^k - 1 masks, ascending
  std::vector<std::size_t> totals;
  std::vector<std::size_t> unique_counts;
  std::size_t shared_all_count = 0;
  std::size_t union_count = 0;

  const UpsetRegion& region(std::uint32_t mask) const { return regions.at(mask - 1); }
};

UpsetData intersection_counts(const NamedSetFamily& family);

// |S_i ∩ S_j| / |S_i ∪ S_j|; 0 when both sets are empty, 1 on the diagonal
// otherwise.
std::vector<std::vector<double>> jaccard_matrix(const NamedSetFamily& family);

struct CrossLevelOverlap {
  std::size_t overlap_count = 0;
  std::size_t level0_size = 0;
  std::size_t level2_size = 0;
  double fraction_of_level2 = 0.0;
  double fraction_of_level0 = 0.0;
};

CrossLevelOverlap cross_level_overlap(std::span<const std::size_t> level0_set,
                                      std::span<const std::size_t> level2_set,
                                      std::size_t universe);

}  // namespace actscan
