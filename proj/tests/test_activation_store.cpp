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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "actscan/activation_store.hpp"
#include "actscan/error.hpp"
#include "helpers.hpp"

using namespace actscan;
using actscan::testing::TempDir;

namespace {

ActivationMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  ActivationMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = static_cast<float>(rng.normal() * 10.0);
  return m;
}

// Row r of the matrix holds the value r in every column.
ActivationMatrix indexed_rows(std::size_t rows, std::size_t cols) {
  ActivationMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = static_cast<float>(r);
  return m;
}

}  // namespace

TEST_CASE("zero matrix file layout") {
  TempDir dir("store");
  ActivationMatrix m(2, 3);
  write_matrix(m, dir / "z.actv");
  const std::string bytes = actscan::testing::slurp(dir / "z.actv");
  REQUIRE(bytes.size() == kActvHeaderBytes + 24);
  CHECK(bytes.substr(0, 4) == "ACTV");
  std::uint32_t version = 0, rows = 0, cols = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&rows, bytes.data() + 8, 4);
  std::memcpy(&cols, bytes.data() + 12, 4);
  CHECK(version == 1);
  CHECK(rows == 2);
  CHECK(cols == 3);
  CHECK(static_cast<unsigned char>(bytes[16]) == kActvDtypeF32);
  CHECK(load_matrix(dir / "z.actv") == m);
}

TEST_CASE("full-width matrix payload size") {
  TempDir dir("store");
  const ActivationMatrix m = random_matrix(300, 4096, 3);
  write_matrix(m, dir / "big.actv");
  CHECK(std::filesystem::file_size(dir / "big.actv") == kActvHeaderBytes + 300ull * 4096 * 4);
  CHECK(load_matrix(dir / "big.actv") == m);
}

TEST_CASE("round trip is bit exact for random shapes and special values") {
  TempDir dir("store");
  Rng shapes(11);
  for (int t = 0; t < 40; ++t) {
    const std::size_t rows = 1 + shapes.below(20), cols = 1 + shapes.below(33);
    ActivationMatrix m = random_matrix(rows, cols, 100 + t);
    m(0, 0) = -0.0f;
    m(rows - 1, cols - 1) = std::numeric_limits<float>::denorm_min();
    write_matrix(m, dir / "m.actv");
    const ActivationMatrix back = load_matrix(dir / "m.actv");
    REQUIRE(back.rows() == rows);
    CHECK(std::memcmp(back.values().data(), m.values().data(), rows * cols * 4) == 0);
    CHECK(std::signbit(back(0, 0)));
  }
}

TEST_CASE("non-finite values are rejected with their position") {
  TempDir dir("store");
  ActivationMatrix m(3, 4);
  m(2, 1) = std::nanf("");
  try {
    write_matrix(m, dir / "nan.actv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 2") != std::string::npos);
    CHECK(what.find("col 1") != std::string::npos);
  }
  CHECK_FALSE(std::filesystem::exists(dir / "nan.actv"));
  m(2, 1) = INFINITY;
  CHECK_THROWS_AS(write_matrix(m, dir / "inf.actv"), DataError);
}

TEST_CASE("load errors are distinct") {
  TempDir dir("store");
  write_matrix(random_matrix(4, 5, 1), dir / "ok.actv");
  const std::string good = actscan::testing::slurp(dir / "ok.actv");

  actscan::testing::spit(dir / "short.actv", good.substr(0, good.size() - 1));
  CHECK_THROWS_AS(load_matrix(dir / "short.actv"), TruncatedError);

  std::string magic = good;
  magic.replace(0, 4, "XXXX");
  actscan::testing::spit(dir / "magic.actv", magic);
  CHECK_THROWS_AS(load_matrix(dir / "magic.actv"), FormatError);

  std::string version = good;
  version[4] = 2;
  actscan::testing::spit(dir / "version.actv", version);
  CHECK_THROWS_AS(load_matrix(dir / "version.actv"), VersionError);

  std::string dtype = good;
  dtype[16] = 7;
  actscan::testing::spit(dir / "dtype.actv", dtype);
  CHECK_THROWS_AS(load_matrix(dir / "dtype.actv"), FormatError);

  actscan::testing::spit(dir / "long.actv", good + "x");
  CHECK_THROWS_AS(load_matrix(dir / "long.actv"), FormatError);

  actscan::testing::spit(dir / "header.actv", good.substr(0, 9));
  CHECK_THROWS_AS(load_matrix(dir / "header.actv"), TruncatedError);

  CHECK_THROWS_AS(load_matrix(dir / "missing.actv"), IoError);
}

TEST_CASE("sample: determinism, permutation and bounds") {
  const ActivationMatrix m = indexed_rows(300, 2);
  const ActivationMatrix a = sample(m, 100, 7), b = sample(m, 100, 7);
  CHECK(a == b);
  CHECK_FALSE(sample(m, 100, 8) == a);

  std::set<float> seen;
  for (std::size_t r = 0; r < a.rows(); ++r) seen.insert(a(r, 0));
  CHECK(seen.size() == 100);

  const ActivationMatrix all = sample(m, 300, 3);
  std::vector<float> firsts;
  for (std::size_t r = 0; r < all.rows(); ++r) firsts.push_back(all(r, 0));
  std::sort(firsts.begin(), firsts.end());
  for (std::size_t r = 0; r < 300; ++r) CHECK(firsts[r] == static_cast<float>(r));

  CHECK_THROWS_AS(sample(m, 301, 0), InvalidArgument);
}

TEST_CASE("sample frequencies are uniform") {
  // Each row's inclusion count over T draws of n from M is Binomial(T, n/M).
  const std::size_t M = 30, n = 10, T = 10000;
  const ActivationMatrix m = indexed_rows(M, 1);
  std::vector<std::size_t> hits(M, 0);
  for (std::size_t t = 0; t < T; ++t) {
    const ActivationMatrix s = sample(m, n, 1000 + t);
    for (std::size_t r = 0; r < n; ++r) ++hits[static_cast<std::size_t>(s(r, 0))];
  }
  const double p = static_cast<double>(n) / M;
  const double mean = T * p, sd = std::sqrt(T * p * (1 - p));
  for (std::size_t r = 0; r < M; ++r) CHECK(std::abs(hits[r] - mean) < 5 * sd);
}

TEST_CASE("take_rows and concat_rows") {
  ActivationMatrix m = indexed_rows(5, 3);
  m.sentence_ids = {"a", "b", "c", "d", "e"};
  const std::vector<std::size_t> pick{4, 0};
  const ActivationMatrix t = take_rows(m, pick);
  CHECK(t(0, 0) == 4.0f);
  CHECK(t(1, 2) == 0.0f);
  CHECK(t.sentence_ids == std::vector<std::string>{"e", "a"});
  const std::vector<ActivationMatrix> parts{t, m};
  const ActivationMatrix c = concat_rows(parts);
  CHECK(c.rows() == 7);
  CHECK(c.sentence_ids.size() == 7);
  const std::vector<ActivationMatrix> bad{t, ActivationMatrix(1, 4)};
  CHECK_THROWS_AS(concat_rows(bad), DataError);
}

TEST_CASE("manifest round trip and selection") {
  TempDir dir("store");
  const auto path = write_synthetic_dataset(dir.path(), actscan::testing::small_dataset(300, 8, 2));
  const DatasetManifest m = load_manifest(path);
  validate_manifest(m);
  CHECK(m.layer_count == 2);
  CHECK(m.personas().size() == 6);
  CHECK(m.topic_of("anti-immigration") == "Politics");
  CHECK(m.personas_in_topic("Politics").size() == 4);
  CHECK(m.layers_for("openness") == std::vector<int>{0, 1});

  save_manifest(m, dir / "copy.json");
  const DatasetManifest again = load_manifest(dir / "copy.json");
  CHECK(again.records == m.records);
  CHECK(again.matrices.size() == m.matrices.size());

  const ActivationMatrix cons =
      select(m, {{"politically-conservative"}, {Direction::kMatching}, 1});
  CHECK(cons.rows() == 300);
  CHECK(cons.layer == 1);
  REQUIRE(cons.sentence_ids.size() == 300);
  const auto ids = m.row_ids(*m.find({"politically-conservative", Direction::kMatching, 1}));
  CHECK(cons.sentence_ids == ids);

  const auto politics = m.personas_in_topic("Politics");
  const ActivationMatrix pol = select(m, {politics, {Direction::kMatching}, 1});
  CHECK(pol.rows() == 1200);
  const ActivationMatrix both =
      select(m, {{"openness"}, {Direction::kMatching, Direction::kNotMatching}, 0});
  CHECK(both.rows() == 600);

  CHECK_THROWS_AS(select(m, {{"nobody"}, {Direction::kMatching}, 0}), InvalidArgument);
  CHECK_THROWS_AS(select(m, {{"openness"}, {Direction::kMatching}, 5}), InvalidArgument);
  CHECK_THROWS_AS(select(m, {{"openness"}, {}, 0}), DataError);
}

TEST_CASE("manifest validation") {
  TempDir dir("store");
  const auto path = write_synthetic_dataset(dir.path(), actscan::testing::small_dataset(300, 6, 1));
  const DatasetManifest base = load_manifest(path);

  SUBCASE("confidence tie at the threshold is accepted") {
    DatasetManifest m = base;
    m.records[0].label_confidence = 0.85;
    CHECK_NOTHROW(validate_manifest(m));
    m.records[0].label_confidence = 0.8499;
    CHECK_THROWS_AS(validate_manifest(m), DataError);
  }
  SUBCASE("per-direction count") {
    DatasetManifest m = base;
    ManifestCheck check;
    check.per_direction = 299;
    CHECK_THROWS_AS(validate_manifest(m, check), DataError);
    check.per_direction = 0;
    CHECK_NOTHROW(validate_manifest(m, check));
  }
  SUBCASE("persona maps to one topic") {
    DatasetManifest m = base;
    m.records[1].topic = "Ethics";
    CHECK_THROWS_AS(validate_manifest(m), DataError);
  }
  SUBCASE("duplicate ids") {
    DatasetManifest m = base;
    m.records[1].id = m.records[0].id;
    CHECK_THROWS_AS(validate_manifest(m), DataError);
  }
  SUBCASE("matrix ids must be known records") {
    DatasetManifest m = base;
    m.matrices[0].sentence_ids = m.row_ids(m.matrices[0]);
    m.matrices[0].sentence_ids[3] = "ghost";
    CHECK_THROWS_AS(validate_manifest(m), DataError);
  }
  SUBCASE("missing matrix file") {
    DatasetManifest m = base;
    std::filesystem::remove(m.resolve(m.matrices[0]));
    CHECK_THROWS_AS(validate_manifest(m), DataError);
  }
}

TEST_CASE("direction names") {
  CHECK(parse_direction("matching") == Direction::kMatching);
  CHECK(parse_direction("-") == Direction::kNotMatching);
  CHECK(to_string(Direction::kNotMatching) == "notmatching");
  CHECK_THROWS_AS(parse_direction("sideways"), InvalidArgument);
}
