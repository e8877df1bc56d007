/*
 * Copyright 2026 The MPFL Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mpfl/data.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "gtest/gtest.h"
#include "test_util.h"

namespace mpfl {
namespace {

std::string WriteFixture(const std::string& name, const std::string& body) {
  const std::string path = ::testing::TempDir() + "/" + name;
  std::ofstream(path) << body;
  return path;
}

TEST(LoadCsvTest, ReadsNumericAndCategoricalColumns) {
  const std::string path = WriteFixture(
      "mixed.csv",
      "a,color,b,y\n"
      "1.5,red,2,0.25\r\n"
      "-3,blue,4e1,1\n"
      "\n"
      "0,red,0,-2\n");
  CsvSchema schema{{"b", "color", "a"}, {"y"}, {"color"}};
  ASSERT_OK_AND_ASSIGN(Dataset ds, LoadCsv(path, schema));
  EXPECT_EQ(ds.feature_dim, 4u);
  EXPECT_EQ(ds.target_dim, 1u);
  ASSERT_EQ(ds.samples.size(), 3u);
  // One-hot labels are ordered blue, red.
  EXPECT_EQ(ds.samples[0].x, (Vector{2, 0, 1, 1.5}));
  EXPECT_EQ(ds.samples[1].x, (Vector{40, 1, 0, -3}));
  EXPECT_EQ(ds.samples[2].target, Vector{-2});
}

TEST(LoadCsvTest, ReportsLocatedErrors) {
  CsvSchema schema{{"a"}, {"y"}, {}};
  auto missing = LoadCsv(::testing::TempDir() + "/nope.csv", schema);
  EXPECT_EQ(missing.status().code(), absl::StatusCode::kNotFound);

  auto bad_cell = LoadCsv(WriteFixture("bad.csv", "a,y\n1,2\nx,3\n"), schema);
  ASSERT_FALSE(bad_cell.ok());
  EXPECT_NE(bad_cell.status().message().find(":3:"), std::string::npos);
  EXPECT_NE(bad_cell.status().message().find("'a'"), std::string::npos);

  auto ragged = LoadCsv(WriteFixture("ragged.csv", "a,y\n1,2,3\n"), schema);
  ASSERT_FALSE(ragged.ok());
  EXPECT_NE(ragged.status().message().find(":2:"), std::string::npos);

  EXPECT_FALSE(LoadCsv(WriteFixture("nocol.csv", "b,y\n1,2\n"), schema).ok());
  EXPECT_FALSE(LoadCsv(WriteFixture("empty.csv", ""), schema).ok());
  EXPECT_FALSE(LoadCsv(WriteFixture("header.csv", "a,y\n"), schema).ok());
  EXPECT_FALSE(LoadCsv(WriteFixture("inf.csv", "a,y\ninf,1\n"), schema).ok());
  EXPECT_FALSE(LoadCsv(WriteFixture("ok.csv", "a,y\n1,2\n"), CsvSchema{{}, {"y"}, {}}).ok());
}

TEST(WriteCsvTest, RoundTripsExactly) {
  ASSERT_OK_AND_ASSIGN(Dataset ds, SynthRegression(3, 2, 20, 5));
  const std::string path = ::testing::TempDir() + "/round_trip.csv";
  ASSERT_OK(WriteCsv(ds, path));
  CsvSchema schema{{"f0", "f1", "f2"}, {"t0", "t1"}, {}};
  ASSERT_OK_AND_ASSIGN(Dataset back, LoadCsv(path, schema));
  EXPECT_EQ(back.samples, ds.samples);
}

TEST(NormalizerTest, MinMaxAndZScore) {
  std::vector<Sample> rows = {{Vector{0, 5, 1}, {}}, {Vector{10, 5, 3}, {}},
                              {Vector{5, 5, 2}, {}}};
  Normalizer mm = Normalizer::Fit(rows, 3, Normalization::kMinMax);
  std::vector<Sample> a = rows;
  mm.Apply(a);
  EXPECT_EQ(a[1].x, (Vector{1, 0, 1}));
  EXPECT_EQ(a[2].x, (Vector{0.5, 0, 0.5}));

  Normalizer z = Normalizer::Fit(rows, 3, Normalization::kZScore);
  std::vector<Sample> b = rows;
  z.Apply(b);
  for (size_t j : {0, 2}) {
    double mean = 0, sq = 0;
    for (const Sample& s : b) mean += s.x[j] / 3;
    for (const Sample& s : b) sq += (s.x[j] - mean) * (s.x[j] - mean) / 3;
    EXPECT_NEAR(mean, 0.0, 1e-15);
    EXPECT_NEAR(sq, 1.0, 1e-14);
  }
  for (const Sample& s : b) EXPECT_EQ(s.x[1], 0.0);
  EXPECT_FALSE(ParseNormalization("unit").ok());
  EXPECT_EQ(*ParseNormalization("zscore"), Normalization::kZScore);
}

TEST(SynthTest, ClassificationIsBalancedAndSeparable) {
  ASSERT_OK_AND_ASSIGN(Dataset ds, SynthClassification(20, 10, 503, 1));
  EXPECT_EQ(ds.samples.size(), 503u);
  std::vector<size_t> counts(10);
  std::vector<Vector> centroid(10, Vector(20, 0.0));
  for (const Sample& s : ds.samples) {
    size_t c = 0;
    double ones = 0;
    for (size_t k = 0; k < 10; ++k) {
      if (s.target[k] == 1.0) c = k;
      ones += s.target[k];
    }
    ASSERT_EQ(ones, 1.0);
    ++counts[c];
    for (size_t j = 0; j < 20; ++j) centroid[c][j] += s.x[j];
  }
  for (size_t k = 0; k < 10; ++k) {
    EXPECT_GE(counts[k], 50u);
    EXPECT_LE(counts[k], 51u);
    for (double& v : centroid[k]) v /= static_cast<double>(counts[k]);
  }
  size_t correct = 0;
  for (const Sample& s : ds.samples) {
    size_t best = 0;
    double best_d = INFINITY;
    for (size_t k = 0; k < 10; ++k) {
      double d = 0;
      for (size_t j = 0; j < 20; ++j) d += std::pow(s.x[j] - centroid[k][j], 2);
      if (d < best_d) best_d = d, best = k;
    }
    if (s.target[best] == 1.0) ++correct;
  }
  EXPECT_GE(static_cast<double>(correct) / 503, 0.95);
}

TEST(SynthTest, SeededAndDistinct) {
  EXPECT_EQ(SynthRegression(4, 1, 30, 7)->samples, SynthRegression(4, 1, 30, 7)->samples);
  EXPECT_NE(SynthRegression(4, 1, 30, 7)->samples, SynthRegression(4, 1, 30, 8)->samples);
  EXPECT_FALSE(SynthClassification(3, 1, 10, 1).ok());
  EXPECT_FALSE(SynthRegression(0, 1, 10, 1).ok());
}

TEST(ShardTest, SplitsAndShardsPartitionTheData) {
  Dataset ds;
  ds.feature_dim = 1;
  ds.target_dim = 1;
  for (int i = 0; i < 103; ++i) {
    ds.samples.push_back({Vector{static_cast<double>(i)}, Vector{0}});
  }
  ASSERT_OK_AND_ASSIGN(PreparedData p, PrepareSplits(ds, 7, 3, Normalization::kNone));
  EXPECT_EQ(p.splits.train.size(), 82u);
  EXPECT_EQ(p.splits.validation.size(), 10u);
  EXPECT_EQ(p.splits.test.size(), 11u);
  std::multiset<double> all;
  for (const auto* part : {&p.splits.train, &p.splits.validation, &p.splits.test}) {
    for (const Sample& s : *part) all.insert(s.x[0]);
  }
  EXPECT_EQ(std::set<double>(all.begin(), all.end()).size(), 103u);
  std::set<double> sharded;
  size_t lo = 1000, hi = 0;
  for (const auto& shard : p.shards) {
    lo = std::min(lo, shard.size());
    hi = std::max(hi, shard.size());
    for (const Sample& s : shard) EXPECT_TRUE(sharded.insert(s.x[0]).second);
  }
  EXPECT_EQ(sharded.size(), 82u);
  EXPECT_LE(hi - lo, 1u);

  ASSERT_OK_AND_ASSIGN(PreparedData again, PrepareSplits(ds, 7, 3, Normalization::kNone));
  EXPECT_EQ(again.plan.assignments, p.plan.assignments);
  EXPECT_FALSE(PrepareSplits(ds, 0, 3, Normalization::kNone).ok());
  EXPECT_FALSE(PrepareSplits(ds, 83, 3, Normalization::kNone).ok());
}

TEST(ShardTest, NormalizationFitsTrainingRowsOnly) {
  ASSERT_OK_AND_ASSIGN(Dataset ds, SynthRegression(3, 1, 200, 2));
  ASSERT_OK_AND_ASSIGN(PreparedData p, PrepareSplits(ds, 2, 1, Normalization::kMinMax));
  for (size_t j = 0; j < 3; ++j) {
    double lo = INFINITY, hi = -INFINITY;
    for (const Sample& s : p.splits.train) {
      lo = std::min(lo, s.x[j]);
      hi = std::max(hi, s.x[j]);
    }
    EXPECT_NEAR(lo, 0.0, 1e-15);
    EXPECT_NEAR(hi, 1.0, 1e-15);
  }
}

TEST(SelectBatchTest, DeterministicSubsets) {
  std::mt19937_64 rng(4);
  auto shard = testing::RandomSamples(40, 2, 1, rng);
  auto a = SelectBatch(shard, 8, 1, 3, 2);
  EXPECT_EQ(a.size(), 8u);
  EXPECT_EQ(a, SelectBatch(shard, 8, 1, 3, 2));
  EXPECT_NE(a, SelectBatch(shard, 8, 1, 4, 2));
  EXPECT_NE(a, SelectBatch(shard, 8, 1, 3, 1));
  EXPECT_EQ(SelectBatch(shard, 0, 1, 3, 2), shard);
  EXPECT_EQ(SelectBatch(shard, 100, 1, 3, 2), shard);
}

}  // namespace
}  // namespace mpfl
