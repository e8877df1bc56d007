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

// Run configuration, read from a single JSON file. Plain and perturbed runs
// share every other field, so a pair of runs differing only in `mode` is a
// like-for-like comparison.

#ifndef MPFL_CONFIG_H_
#define MPFL_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/data.h"
#include "mpfl/perturbation.h"
#include "mpfl/server.h"
#include "mpfl/wire.h"

namespace mpfl {

struct DatasetSpec {
  // "synthetic_classification", "synthetic_regression" or "csv".
  std::string kind = "synthetic_classification";
  size_t features = 20;
  size_t outputs = 10;  // classes or regression targets
  size_t samples = 500;
  uint64_t seed = 1;
  double cluster_spread = 1.0;
  std::string path;
  CsvSchema schema;
  Normalization normalization = Normalization::kMinMax;
};

struct TransportSpec {
  bool tcp = false;
  std::string host = "127.0.0.1";
  uint16_t port = 0;
  int64_t connect_timeout_ms = 10000;
  int64_t accept_timeout_ms = 10000;
  int64_t round_timeout_ms = 60000;
  size_t max_frame_bytes = kDefaultMaxFrameBytes;
};

struct RunConfig {
  Mode mode = Mode::kPerturbed;
  DatasetSpec dataset;
  std::vector<size_t> dims;
  size_t clients = 1;
  uint64_t rounds = 10;
  double learning_rate = 0.01;
  size_t batch_size = 0;  // 0: full shard every round
  size_t m = 0;           // 0: m = n_L
  NoiseConfig noise;
  uint64_t seed = 42;
  double init_stddev = 0.01;
  bool parallel = true;
  // When false the wall_ms column is written as 0 so metrics files are
  // byte-for-byte reproducible.
  bool record_wall_clock = true;
  TransportSpec transport;
  std::string metrics_csv;
  std::string manifest;

  absl::Status Validate() const;
  // Canonical JSON echo of every field (used in the run manifest).
  std::string ToJson() const;
};

absl::StatusOr<RunConfig> ParseConfig(std::string_view json_text);
absl::StatusOr<RunConfig> LoadConfig(const std::string& path);

}  // namespace mpfl

#endif  // MPFL_CONFIG_H_
