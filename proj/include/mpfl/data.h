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

// Datasets: CSV ingestion, synthetic generators, train/val/test splitting,
// normalization fitted on the training split, and IID client sharding.

#ifndef MPFL_DATA_H_
#define MPFL_DATA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/model.h"

namespace mpfl {

struct Dataset {
  std::string name;
  size_t feature_dim = 0;
  size_t target_dim = 0;
  std::vector<Sample> samples;
};

enum class Normalization { kNone, kMinMax, kZScore };

absl::StatusOr<Normalization> ParseNormalization(std::string_view name);

struct CsvSchema {
  std::vector<std::string> feature_columns;
  std::vector<std::string> target_columns;
  // Subset of feature/target columns holding category labels; each is
  // expanded to a one-hot block ordered by sorted label.
  std::vector<std::string> categorical_columns;
};

// Reads a comma-separated file with a header row. Values are returned
// unnormalized; see PrepareSplits. Errors carry row/column context.
absl::StatusOr<Dataset> LoadCsv(const std::string& path,
                                const CsvSchema& schema);

// Writes features then targets, with generated column names f0.., t0...
absl::Status WriteCsv(const Dataset& dataset, const std::string& path);

// Gaussian cluster per class with one-hot targets; class counts differ by at
// most one.
absl::StatusOr<Dataset> SynthClassification(size_t num_features,
                                            size_t num_classes,
                                            size_t num_samples, uint64_t seed,
                                            double cluster_spread = 1.0);

// Targets from a fixed random two-layer ReLU teacher plus small noise.
absl::StatusOr<Dataset> SynthRegression(size_t num_features,
                                        size_t num_targets,
                                        size_t num_samples, uint64_t seed);

// Per-feature affine map fitted on training rows.
struct Normalizer {
  Normalization kind = Normalization::kNone;
  Vector offset;
  Vector scale;  // x' = (x - offset) * scale; zero for constant columns

  static Normalizer Fit(std::span<const Sample> rows, size_t feature_dim,
                        Normalization kind);
  void Apply(std::vector<Sample>& rows) const;
};

struct ShardPlan {
  uint64_t seed = 0;
  std::vector<std::vector<size_t>> assignments;  // indices into train split
};

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
};

struct PreparedData {
  Splits splits;
  ShardPlan plan;
  Normalizer normalizer;
  std::vector<std::vector<Sample>> shards;
};

// Shuffles with `seed`, splits 8:1:1 into train/val/test, IID-shards the
// training split into k parts whose sizes differ by at most one.
absl::StatusOr<std::pair<ShardPlan, Splits>> Shard(const Dataset& dataset,
                                                   size_t k, uint64_t seed);

// Shard + normalization fitted on the training split only.
absl::StatusOr<PreparedData> PrepareSplits(const Dataset& dataset, size_t k,
                                           uint64_t seed,
                                           Normalization normalization);

// Deterministic mini-batch of a shard for (seed, round, client).
// batch_size 0 or >= shard size returns the whole shard.
std::vector<Sample> SelectBatch(std::span<const Sample> shard,
                                size_t batch_size, uint64_t seed,
                                uint64_t round_id, uint32_t client_id);

}  // namespace mpfl

#endif  // MPFL_DATA_H_
