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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace actscan {

enum class Direction { kMatching, kNotMatching };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);

struct SentenceRecord {
  std::string id;
  std::string text;
  std::string persona;
  std::string topic;
  Direction direction = Direction::kMatching;
  double label_confidence = 0.0;

  bool operator==(const SentenceRecord&) const = default;
};

// Rows are sentences, columns are activation positions of one layer.
// Values are stored row-major in single precision.
class ActivationMatrix {
 public:
  ActivationMatrix() = default;
  ActivationMatrix(std::size_t rows, std::size_t cols);
  ActivationMatrix(std::size_t rows, std::size_t cols, std::vector<float> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  float operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const float> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<float> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const float> values() const { return values_; }

  // Throws DataError naming the first non-finite cell, or a row/id count
  // mismatch when sentence_ids is populated.
  void validate() const;

  // Bitwise comparison of payload plus metadata.
  bool operator==(const ActivationMatrix& other) const;

  std::string model_id;
  int layer = -1;
  std::vector<std::string> sentence_ids;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
};

// ACTV layout: "ACTV", u32 version, u32 rows, u32 cols, u8 dtype, then the
// row-major little-endian f32 payload.
inline constexpr std::uint32_t kActvVersion = 1;
inline constexpr std::uint8_t kActvDtypeF32 = 1;
inline constexpr std::size_t kActvHeaderBytes = 17;

void write_matrix(const ActivationMatrix& matrix, const std::filesystem::path& path);

// Only dimensions live in the file; model_id, layer and sentence_ids are
// left empty and filled in by the manifest loader.
ActivationMatrix load_matrix(const std::filesystem::path& path);

ActivationMatrix take_rows(const ActivationMatrix& m, std::span<const std::size_t> rows);
ActivationMatrix concat_rows(std::span<const ActivationMatrix> parts);

// n distinct rows drawn uniformly without replacement, in draw order.
ActivationMatrix sample(const ActivationMatrix& m, std::size_t n, std::uint64_t seed);

struct MatrixKey {
  std::string persona;
  Direction direction = Direction::kMatching;
  int layer = 0;

  auto operator<=>(const MatrixKey&) const = default;
};

struct MatrixEntry {
  MatrixKey key;
  std::filesystem::path path;  // relative paths resolve against the manifest dir
  // Row provenance. When empty, rows are the (persona, direction) records in
  // record order.
  std::vector<std::string> sentence_ids;
};

struct DatasetManifest {
  std::string model_id;
  int layer_count = 0;
  std::vector<SentenceRecord> records;
  std::vector<MatrixEntry> matrices;
  std::filesystem::path base_dir;

  // Personas in order of first appearance in records.
  std::vector<std::string> personas() const;
  std::vector<std::string> topics() const;
  std::vector<std::string> personas_in_topic(std::string_view topic) const;
  // Throws InvalidArgument for an unknown persona.
  const std::string& topic_of(std::string_view persona) const;
  bool has_persona(std::string_view persona) const;
  bool has_topic(std::string_view topic) const;

  // Layers that have a matrix for the persona in both directions, ascending.
  std::vector<int> layers_for(std::string_view persona) const;

  const MatrixEntry* find(const MatrixKey& key) const;
  std::vector<std::string> row_ids(const MatrixEntry& entry) const;
  std::filesystem::path resolve(const MatrixEntry& entry) const;

  // Loads the entry's file and attaches model_id, layer and row ids.
  ActivationMatrix load(const MatrixEntry& entry) const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct ManifestCheck {
  double min_confidence = 0.85;
  // Required records per (persona, direction); 0 disables the count check.
  std::size_t per_direction = 300;
  bool load_matrices = true;
};

// Throws DataError on the first violated invariant.
void validate_manifest(const DatasetManifest& manifest, const ManifestCheck& check = {});

struct Selection {
  std::vector<std::string> personas;
  std::vector<Direction> directions;
  int layer = 0;
};

// Concatenates every matrix entry matching the selection, in manifest order.
ActivationMatrix select(const DatasetManifest& manifest, const Selection& selection);

}  // namespace actscan
