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

#include "actscan/activation_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "actscan/error.hpp"
#include "actscan/rng.hpp"

namespace actscan {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Direction d) {
  return d == Direction::kMatching ? "matching" : "notmatching";
}

Direction parse_direction(std::string_view s) {
  if (s == "matching" || s == "+") return Direction::kMatching;
  if (s == "notmatching" || s == "-") return Direction::kNotMatching;
  throw InvalidArgument("unknown direction '" + std::string(s) +
                        "' (expected matching or notmatching)");
}

ActivationMatrix::ActivationMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0f) {}

ActivationMatrix::ActivationMatrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols)
    throw InvalidArgument("matrix payload has " + std::to_string(values_.size()) +
                          " values, expected " + std::to_string(rows * cols));
}

void ActivationMatrix::validate() const {
  if (!sentence_ids.empty() && sentence_ids.size() != rows_)
    throw DataError("matrix has " + std::to_string(rows_) + " rows but " +
                    std::to_string(sentence_ids.size()) + " sentence ids");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]))
      throw DataError("non-finite activation at (row " + std::to_string(i / cols_) + ", col " +
                      std::to_string(i % cols_) + ")");
  }
}

bool ActivationMatrix::operator==(const ActivationMatrix& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  if (model_id != other.model_id || layer != other.layer || sentence_ids != other.sentence_ids)
    return false;
  return values_.empty() ||
         std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_file_atomically(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

void write_matrix(const ActivationMatrix& matrix, const fs::path& path) {
  matrix.validate();
  if (matrix.rows() > UINT32_MAX || matrix.cols() > UINT32_MAX)
    throw InvalidArgument("matrix dimensions exceed the ACTV u32 range");
  std::string bytes;
  bytes.reserve(kActvHeaderBytes + matrix.values().size() * 4);
  bytes.append("ACTV", 4);
  put_u32(bytes, kActvVersion);
  put_u32(bytes, static_cast<std::uint32_t>(matrix.rows()));
  put_u32(bytes, static_cast<std::uint32_t>(matrix.cols()));
  bytes.push_back(static_cast<char>(kActvDtypeF32));
  for (float v : matrix.values()) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  write_file_atomically(path, bytes);
}

ActivationMatrix load_matrix(const fs::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || std::memcmp(p, "ACTV", 4) != 0)
    throw FormatError(path.string() + ": not an ACTV file (bad magic)");
  if (bytes.size() < kActvHeaderBytes)
    throw TruncatedError(path.string() + ": truncated header");
  const std::uint32_t version = get_u32(p + 4);
  if (version != kActvVersion)
    throw VersionError(path.string() + ": unsupported ACTV version " + std::to_string(version));
  const std::uint32_t rows = get_u32(p + 8);
  const std::uint32_t cols = get_u32(p + 12);
  const std::uint8_t dtype = p[16];
  if (dtype != kActvDtypeF32)
    throw FormatError(path.string() + ": unsupported dtype code " + std::to_string(dtype));
  const std::uint64_t expected = static_cast<std::uint64_t>(rows) * cols * 4;
  const std::uint64_t payload = bytes.size() - kActvHeaderBytes;
  if (payload < expected)
    throw TruncatedError(path.string() + ": truncated payload (" + std::to_string(payload) +
                         " of " + std::to_string(expected) + " bytes)");
  if (payload > expected)
    throw FormatError(path.string() + ": " + std::to_string(payload - expected) +
                      " trailing bytes after payload");
  std::vector<float> values(static_cast<std::size_t>(rows) * cols);
  const unsigned char* q = p + kActvHeaderBytes;
  for (std::size_t i = 0; i < values.size(); ++i, q += 4)
    values[i] = std::bit_cast<float>(get_u32(q));
  ActivationMatrix m(rows, cols, std::move(values));
  m.validate();
  return m;
}

ActivationMatrix take_rows(const ActivationMatrix& m, std::span<const std::size_t> rows) {
  ActivationMatrix out(rows.size(), m.cols());
  out.model_id = m.model_id;
  out.layer = m.layer;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw InvalidArgument("row index out of range");
    std::copy_n(m.row(rows[i]).data(), m.cols(), out.row(i).data());
    if (!m.sentence_ids.empty()) out.sentence_ids.push_back(m.sentence_ids[rows[i]]);
  }
  return out;
}

ActivationMatrix concat_rows(std::span<const ActivationMatrix> parts) {
  if (parts.empty()) throw DataError("nothing to concatenate");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool ids = true;
  for (const auto& part : parts) {
    if (part.cols() != cols)
      throw DataError("column count mismatch: " + std::to_string(part.cols()) + " vs " +
                      std::to_string(cols));
    rows += part.rows();
    ids = ids && part.sentence_ids.size() == part.rows();
  }
  std::vector<float> values;
  values.reserve(rows * cols);
  ActivationMatrix out;
  std::vector<std::string> row_ids;
  for (const auto& part : parts) {
    values.insert(values.end(), part.values().begin(), part.values().end());
    if (ids) row_ids.insert(row_ids.end(), part.sentence_ids.begin(), part.sentence_ids.end());
  }
  out = ActivationMatrix(rows, cols, std::move(values));
  out.model_id = parts.front().model_id;
  out.layer = parts.front().layer;
  out.sentence_ids = std::move(row_ids);
  return out;
}

ActivationMatrix sample(const ActivationMatrix& m, std::size_t n, std::uint64_t seed) {
  if (n > m.rows())
    throw InvalidArgument("cannot sample " + std::to_string(n) + " rows from " +
                          std::to_string(m.rows()));
  Rng rng(seed);
  const auto idx = rng.sample_without_replacement(m.rows(), n);
  return take_rows(m, idx);
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<std::string> DatasetManifest::personas() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.persona).second) out.push_back(r.persona);
  return out;
}

std::vector<std::string> DatasetManifest::topics() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.topic).second) out.push_back(r.topic);
  return out;
}

std::vector<std::string> DatasetManifest::personas_in_topic(std::string_view topic) const {
  std::vector<std::string> out;
  for (const auto& p : personas())
    if (topic_of(p) == topic) out.push_back(p);
  return out;
}

const std::string& DatasetManifest::topic_of(std::string_view persona) const {
  for (const auto& r : records)
    if (r.persona == persona) return r.topic;
  throw InvalidArgument("unknown persona '" + std::string(persona) + "'");
}

bool DatasetManifest::has_persona(std::string_view persona) const {
  return std::any_of(records.begin(), records.end(),
                     [&](const SentenceRecord& r) { return r.persona == persona; });
}

bool DatasetManifest::has_topic(std::string_view topic) const {
  return std::any_of(records.begin(), records.end(),
                     [&](const SentenceRecord& r) { return r.topic == topic; });
}

std::vector<int> DatasetManifest::layers_for(std::string_view persona) const {
  std::set<int> plus, minus;
  for (const auto& e : matrices) {
    if (e.key.persona != persona) continue;
    (e.key.direction == Direction::kMatching ? plus : minus).insert(e.key.layer);
  }
  std::vector<int> out;
  std::set_intersection(plus.begin(), plus.end(), minus.begin(), minus.end(),
                        std::back_inserter(out));
  return out;
}

const MatrixEntry* DatasetManifest::find(const MatrixKey& key) const {
  for (const auto& e : matrices)
    if (e.key == key) return &e;
  return nullptr;
}

std::vector<std::string> DatasetManifest::row_ids(const MatrixEntry& entry) const {
  if (!entry.sentence_ids.empty()) return entry.sentence_ids;
  std::vector<std::string> ids;
  for (const auto& r : records)
    if (r.persona == entry.key.persona && r.direction == entry.key.direction) ids.push_back(r.id);
  return ids;
}

fs::path DatasetManifest::resolve(const MatrixEntry& entry) const {
  return entry.path.is_absolute() ? entry.path : base_dir / entry.path;
}

ActivationMatrix DatasetManifest::load(const MatrixEntry& entry) const {
  ActivationMatrix m = load_matrix(resolve(entry));
  m.model_id = model_id;
  m.layer = entry.key.layer;
  m.sentence_ids = row_ids(entry);
  if (m.sentence_ids.size() != m.rows())
    throw DataError(resolve(entry).string() + ": " + std::to_string(m.rows()) +
                    " rows but manifest lists " + std::to_string(m.sentence_ids.size()) +
                    " sentences for " + entry.key.persona + "/" +
                    std::string(to_string(entry.key.direction)));
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid manifest JSON: " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    m.model_id = doc.at("model_id").get<std::string>();
    m.layer_count = doc.at("layer_count").get<int>();
    for (const auto& r : doc.at("records")) {
      SentenceRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.text = r.value("text", "");
      rec.persona = r.at("persona").get<std::string>();
      rec.topic = r.at("topic").get<std::string>();
      rec.direction = parse_direction(r.at("direction").get<std::string>());
      rec.label_confidence = r.at("label_confidence").get<double>();
      m.records.push_back(std::move(rec));
    }
    for (const auto& e : doc.at("matrices")) {
      MatrixEntry entry;
      entry.key.persona = e.at("persona").get<std::string>();
      entry.key.direction = parse_direction(e.at("direction").get<std::string>());
      entry.key.layer = e.at("layer").get<int>();
      entry.path = e.at("path").get<std::string>();
      if (e.contains("sentence_ids"))
        entry.sentence_ids = e.at("sentence_ids").get<std::vector<std::string>>();
      m.matrices.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json doc;
  doc["model_id"] = manifest.model_id;
  doc["layer_count"] = manifest.layer_count;
  json records = json::array();
  for (const auto& r : manifest.records) {
    records.push_back({{"id", r.id},
                       {"text", r.text},
                       {"persona", r.persona},
                       {"topic", r.topic},
                       {"direction", std::string(to_string(r.direction))},
                       {"label_confidence", r.label_confidence}});
  }
  doc["records"] = std::move(records);
  json matrices = json::array();
  for (const auto& e : manifest.matrices) {
    json j = {{"persona", e.key.persona},
              {"direction", std::string(to_string(e.key.direction))},
              {"layer", e.key.layer},
              {"path", e.path.generic_string()}};
    if (!e.sentence_ids.empty()) j["sentence_ids"] = e.sentence_ids;
    matrices.push_back(std::move(j));
  }
  doc["matrices"] = std::move(matrices);
  write_file_atomically(path, doc.dump(2) + "\n");
}

void validate_manifest(const DatasetManifest& manifest, const ManifestCheck& check) {
  std::unordered_map<std::string, const SentenceRecord*> by_id;
  std::unordered_map<std::string, std::string> topic;
  std::map<std::pair<std::string, Direction>, std::size_t> counts;
  for (const auto& r : manifest.records) {
    if (!by_id.emplace(r.id, &r).second) throw DataError("duplicate sentence id '" + r.id + "'");
    auto [it, fresh] = topic.emplace(r.persona, r.topic);
    if (!fresh && it->second != r.topic)
      throw DataError("persona '" + r.persona + "' maps to topics '" + it->second + "' and '" +
                      r.topic + "'");
    if (!(r.label_confidence >= check.min_confidence) || r.label_confidence > 1.0)
      throw DataError("record '" + r.id + "' has label confidence " +
                      std::to_string(r.label_confidence) + " outside [" +
                      std::to_string(check.min_confidence) + ", 1]");
    ++counts[{r.persona, r.direction}];
  }
  if (check.per_direction > 0) {
    for (const auto& p : manifest.personas()) {
      for (Direction d : {Direction::kMatching, Direction::kNotMatching}) {
        const std::size_t n = counts[{p, d}];
        if (n != check.per_direction)
          throw DataError("persona '" + p + "' has " + std::to_string(n) + " " +
                          std::string(to_string(d)) + " records, expected " +
                          std::to_string(check.per_direction));
      }
    }
  }
  std::set<MatrixKey> keys;
  std::size_t width = 0;
  for (const auto& e : manifest.matrices) {
    if (!keys.insert(e.key).second)
      throw DataError("duplicate matrix entry for " + e.key.persona + "/" +
                      std::string(to_string(e.key.direction)) + "/layer " +
                      std::to_string(e.key.layer));
    if (e.key.layer < 0 || e.key.layer >= manifest.layer_count)
      throw DataError("matrix layer " + std::to_string(e.key.layer) + " outside 0.." +
                      std::to_string(manifest.layer_count - 1));
    for (const auto& id : manifest.row_ids(e)) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("matrix row id '" + id + "' not in records");
      if (it->second->persona != e.key.persona || it->second->direction != e.key.direction)
        throw DataError("matrix row id '" + id + "' belongs to a different persona/direction");
    }
    if (!check.load_matrices) continue;
    if (!fs::exists(manifest.resolve(e)))
      throw DataError("missing matrix file " + manifest.resolve(e).string());
    const ActivationMatrix m = manifest.load(e);
    if (width == 0) width = m.cols();
    if (m.cols() != width)
      throw DataError(manifest.resolve(e).string() + ": width " + std::to_string(m.cols()) +
                      " differs from " + std::to_string(width));
  }
}

ActivationMatrix select(const DatasetManifest& manifest, const Selection& selection) {
  for (const auto& p : selection.personas)
    if (!manifest.has_persona(p)) throw InvalidArgument("unknown persona '" + p + "'");
  if (selection.layer < 0 || selection.layer >= manifest.layer_count)
    throw InvalidArgument("layer " + std::to_string(selection.layer) + " outside 0.." +
                          std::to_string(manifest.layer_count - 1));
  std::vector<ActivationMatrix> parts;
  for (const auto& e : manifest.matrices) {
    if (e.key.layer != selection.layer) continue;
    if (std::find(selection.personas.begin(), selection.personas.end(), e.key.persona) ==
        selection.personas.end())
      continue;
    if (std::find(selection.directions.begin(), selection.directions.end(), e.key.direction) ==
        selection.directions.end())
      continue;
    parts.push_back(manifest.load(e));
  }
  if (parts.empty()) throw DataError("selection matched no matrices");
  ActivationMatrix out = concat_rows(parts);
  if (out.rows() == 0) throw DataError("selection is empty");
  return out;
}

}  // namespace actscan
