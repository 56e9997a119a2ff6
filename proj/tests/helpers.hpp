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

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <unistd.h>

#include "actscan/rng.hpp"
#include "actscan/synth_bench.hpp"

namespace actscan::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng = Rng::derive({std::hash<std::string>{}(tag), static_cast<std::uint64_t>(::getpid())});
    path_ = std::filesystem::temp_directory_path() /
            ("actscan-" + tag + "-" + std::to_string(rng.next() % 1000000007ULL));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

// Small synthetic dataset: Politics has four personas, Personality two.
inline SynthDatasetConfig small_dataset(std::size_t per_direction = 300, std::size_t dim = 16,
                                        int layers = 3) {
  SynthDatasetConfig cfg;
  cfg.personas = {{"politically-conservative", "Politics"},
                  {"politically-liberal", "Politics"},
                  {"anti-immigration", "Politics"},
                  {"anti-LGBTQ-rights", "Politics"},
                  {"agreeableness", "Personality"},
                  {"openness", "Personality"}};
  cfg.per_direction = per_direction;
  cfg.dim = dim;
  cfg.layers = layers;
  cfg.planted = 3;
  cfg.mu = 3.0;
  cfg.seed = 5;
  return cfg;
}

}  // namespace actscan::testing
