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

// Round bookkeeping on the server: perturb-and-broadcast, collect uploads,
// aggregate with |D_k|/|D| weights, recover the true gradient, update.

#ifndef MPFL_SERVER_H_
#define MPFL_SERVER_H_

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/client.h"
#include "mpfl/model.h"
#include "mpfl/perturbation.h"

namespace mpfl {

enum class Mode { kPlain, kPerturbed };

const char* ModeName(Mode mode);
absl::StatusOr<Mode> ParseMode(std::string_view name);

struct RoundRecord {
  uint64_t round_id = 0;
  Mode mode = Mode::kPerturbed;
  double train_loss = 0.0;  // mean true loss of the pre-update model
  std::vector<double> grad_norms;  // Frobenius norm of the applied gradient
  double wall_ms = 0.0;
};

// Weighted sums of g-hat, sigma-tilde and beta with weights |D_k| / |D|,
// accumulated in the order given. `groups` is 0 for plain-mode updates.
absl::StatusOr<Aggregate> AggregateUpdates(std::span<const ClientUpdate> updates,
                                           uint64_t round_id,
                                           const LayerDims& dims,
                                           size_t groups);

class RoundState {
 public:
  // Samples a fresh secret and perturbs `w` with it.
  static absl::StatusOr<RoundState> BeginPerturbed(
      const MlpParams& w, uint64_t round_id, size_t m,
      const NoiseConfig& noise, std::mt19937_64& rng,
      std::set<uint32_t> expected_clients);
  // Uses an explicit secret (identity noise, fixed fixtures).
  static absl::StatusOr<RoundState> BeginWithSecret(
      const MlpParams& w, NoiseSecret secret,
      std::set<uint32_t> expected_clients);
  // Broadcasts the true parameters; uploads carry plain gradients.
  static absl::StatusOr<RoundState> BeginPlain(
      const MlpParams& w, uint64_t round_id,
      std::set<uint32_t> expected_clients);

  uint64_t round_id() const { return round_id_; }
  Mode mode() const { return mode_; }
  // Payload for clients. In plain mode the layers are the true weights and
  // r^(a) is empty.
  const PerturbedModel& broadcast() const { return broadcast_; }

  absl::Status Receive(ClientUpdate update);
  bool complete() const;

  // Aggregates in client-id order and removes the noise. Consumes the secret:
  // a second call fails.
  absl::StatusOr<GradientSet> RecoverAggregate();

  // RecoverAggregate followed by W <- W - eta * grad.
  absl::StatusOr<MlpParams> RecoverAndUpdate(const MlpParams& w, double eta,
                                             GradientSet* applied = nullptr);

  bool secret_consumed() const { return !secret_.has_value(); }
  const NoiseSecret* secret_for_testing() const {
    return secret_ ? &*secret_ : nullptr;
  }
  const std::map<uint32_t, ClientUpdate>& received() const { return received_; }

 private:
  RoundState() = default;

  uint64_t round_id_ = 0;
  Mode mode_ = Mode::kPerturbed;
  LayerDims dims_ = *LayerDims::Create({1, 1, 1});
  std::optional<NoiseSecret> secret_;
  bool recovered_ = false;
  PerturbedModel broadcast_;
  std::set<uint32_t> expected_;
  std::map<uint32_t, ClientUpdate> received_;
};

// Overwrites every secret value with zero.
void ZeroizeSecret(NoiseSecret& secret);

}  // namespace mpfl

#endif  // MPFL_SERVER_H_
