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

// The round loop over a set of connections, the client loop, and the
// in-process simulation that wires K client threads to one server.

#ifndef MPFL_TRAINING_H_
#define MPFL_TRAINING_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/config.h"
#include "mpfl/data.h"
#include "mpfl/model.h"
#include "mpfl/server.h"
#include "mpfl/transport.h"

namespace mpfl {

// Called after every round with the pre-update model and the gradient that
// was applied to it.
using RoundObserver = std::function<void(
    uint64_t round_id, const MlpParams& before, const GradientSet& applied)>;

struct TrainingResult {
  MlpParams initial;
  MlpParams final_params;
  std::vector<RoundRecord> records;
};

// Builds the configured dataset and its client shards.
absl::StatusOr<PreparedData> LoadRunData(const RunConfig& config);

// normal(0, init_stddev) weights seeded from config.seed. Identical for the
// plain and perturbed modes.
absl::StatusOr<MlpParams> InitialParams(const RunConfig& config);

// Waits for one Hello per connection and returns the connections indexed by
// client id. A version mismatch is answered with Abort.
absl::StatusOr<std::vector<std::unique_ptr<Connection>>> Handshake(
    std::vector<std::unique_ptr<Connection>> connections, size_t num_clients,
    Millis timeout);

// Runs config.rounds rounds over connections indexed by client id, then
// closes them. `train` is used for the per-round loss column only.
absl::StatusOr<TrainingResult> RunServer(
    const RunConfig& config, std::span<const std::unique_ptr<Connection>> clients,
    std::span<const Sample> train, const RoundObserver& observer = nullptr);

struct ClientOptions {
  uint32_t client_id = 0;
  uint32_t proto_version = kProtocolVersion;
  size_t batch_size = 0;
  uint64_t seed = 0;
  Execution exec = Execution::kSerial;
  Millis timeout{60000};
};

// Hello, then answers each Broadcast with an Update until the server closes
// the connection.
absl::Status RunClient(Connection& connection, std::span<const Sample> shard,
                       const ClientOptions& options);

ClientOptions ClientOptionsFor(const RunConfig& config, uint32_t client_id);

// Whole run in one process over in-process pipes.
absl::StatusOr<TrainingResult> RunInProc(const RunConfig& config,
                                         const PreparedData& data,
                                         const RoundObserver& observer = nullptr);

// Whole run in one process over TCP loopback: a listener on an ephemeral
// port and one connecting thread per client.
absl::StatusOr<TrainingResult> RunTcpLoopback(
    const RunConfig& config, const PreparedData& data,
    const RoundObserver& observer = nullptr);

// Metrics CSV: round,mode,loss,grad_norm_l1..grad_norm_lL,wall_ms.
std::string MetricsCsv(std::span<const RoundRecord> records, size_t num_layers);

// Hex SHA-256 over the raw little-endian bytes of every parameter.
std::string ParamsHash(const MlpParams& params);
// Hex SHA-256 over the parameters printed with 6 significant digits.
std::string RoundedParamsHash(const MlpParams& params);

std::string ManifestJson(const RunConfig& config, const TrainingResult& result);

// Writes the metrics CSV and manifest named in the config (if any).
absl::Status WriteOutputs(const RunConfig& config, const TrainingResult& result);

}  // namespace mpfl

#endif  // MPFL_TRAINING_H_
