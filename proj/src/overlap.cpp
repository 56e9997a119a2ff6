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

#include "actscan/overlap.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "actscan/error.hpp"

namespace actscan {

void NamedSetFamily::validate() const {
  if (names.empty()) throw InvalidArgument("set family is empty");
  if (names.size() > kMaxUpsetSets)
    throw InvalidArgument("set family has " + std::to_string(names.size()) +
                          " sets; at most " + std::to_string(kMaxUpsetSets) + " supported");
  if (names.size() != sets.size()) throw InvalidArgument("set family names/sets size mismatch");
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw InvalidArgument("duplicate set name '" + n + "'");
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t v : sets[i])
      if (v >= universe)
        throw InvalidArgument("set '" + names[i] + "' holds index " + std::to_string(v) +
                              " outside universe of " + std::to_string(universe));
}

UpsetData intersection_counts(const NamedSetFamily& family) {
  family.validate();
  const std::size_t k = family.names.size();
  std::vector<std::uint32_t> membership(family.universe, 0);
  UpsetData out;
  out.names = family.names;
  out.universe = family.universe;
  out.totals.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::size_t> s = family.sets[i];
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    out.totals[i] = s.size();
    for (std::size_t v : s) membership[v] |= std::uint32_t{1} << i;
  }
  const std::uint32_t n_masks = std::uint32_t{1} << k;
  std::vector<std::size_t> counts(n_masks, 0);
  for (std::uint32_t m : membership) ++counts[m];

  out.regions.reserve(n_masks - 1);
  for (std::uint32_t mask = 1; mask < n_masks; ++mask) {
    UpsetRegion r;
    r.mask = mask;
    for (std::size_t i = 0; i < k; ++i)
      if (mask >> i & 1) r.members.push_back(family.names[i]);
    r.count = counts[mask];
    r.fraction = family.universe ? static_cast<double>(r.count) / static_cast<double>(family.universe)
                                 : 0.0;
    out.union_count += r.count;
    out.regions.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < k; ++i)
    out.unique_counts.push_back(counts[std::uint32_t{1} << i]);
  out.shared_all_count = counts[n_masks - 1];
  return out;
}

std::vector<std::vector<double>> jaccard_matrix(const NamedSetFamily& family) {
  family.validate();
  const std::size_t k = family.sets.size();
  std::vector<std::unordered_set<std::size_t>> sets;
  for (const auto& s : family.sets) sets.emplace_back(s.begin(), s.end());
  std::vector<std::vector<double>> out(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      std::size_t inter = 0;
      for (std::size_t v : sets[i]) inter += sets[j].count(v);
      const std::size_t uni = sets[i].size() + sets[j].size() - inter;
      const double value = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
      out[i][j] = out[j][i] = value;
    }
  }
  return out;
}

CrossLevelOverlap cross_level_overlap(std::span<const std::size_t> level0_set,
                                      std::span<const std::size_t> level2_set,
                                      std::size_t universe) {
  const std::set<std::size_t> a(level0_set.begin(), level0_set.end());
  const std::set<std::size_t> b(level2_set.begin(), level2_set.end());
  if ((!a.empty() && *a.rbegin() >= universe) || (!b.empty() && *b.rbegin() >= universe))
    throw InvalidArgument("overlap index outside universe of " + std::to_string(universe));
  CrossLevelOverlap out;
  out.level0_size = a.size();
  out.level2_size = b.size();
  for (std::size_t v : b) out.overlap_count += a.count(v);
  const double ov = static_cast<double>(out.overlap_count);
  out.fraction_of_level2 = b.empty() ? 0.0 : ov / static_cast<double>(b.size());
  out.fraction_of_level0 = a.empty() ? 0.0 : ov / static_cast<double>(a.size());
  return out;
}

}  // namespace actscan
