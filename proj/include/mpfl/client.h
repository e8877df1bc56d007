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

// Client-side training on a perturbed model. A client only ever sees the
// broadcast W-hat, r^(a) and the partition; from those it computes the
// perturbed gradient plus the correction terms sigma-tilde and beta that let
// the server cancel the noise.

#ifndef MPFL_CLIENT_H_
#define MPFL_CLIENT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/model.h"
#include "mpfl/parallel.h"
#include "mpfl/perturbation.h"
#include "mpfl/tensor.h"

namespace mpfl {

struct PerturbedActivations {
  std::vector<Vector> y_hat;  // y-hat^(1)..y-hat^(L)
  double alpha = 0.0;         // sum of y-hat^(L-1)
};

struct LayerUpdate {
  Matrix g_hat;                     // mean d L-hat / d W-hat^(l)
  std::vector<Matrix> sigma_tilde;  // one per partition group; empty in plain mode
  Matrix beta;                      // empty (0x0) in plain mode

  friend bool operator==(const LayerUpdate&, const LayerUpdate&) = default;
};

struct ClientUpdate {
  uint32_t client_id = 0;
  uint64_t round_id = 0;
  uint64_t sample_count = 0;
  std::vector<LayerUpdate> layers;

  friend bool operator==(const ClientUpdate&, const ClientUpdate&) = default;
};

absl::StatusOr<PerturbedActivations> ForwardPerturbed(
    const PerturbedModel& pm, std::span<const double> x);

// 0.5 * ||y-hat^(L) - target||^2.
absl::StatusOr<double> PerturbedLoss(std::span<const double> y_hat_out,
                                     std::span<const double> target);

// d L-hat / d W-hat^(l) for every layer, by ordinary backprop on W-hat.
absl::StatusOr<GradientSet> BackwardPerturbed(const PerturbedModel& pm,
                                              const PerturbedActivations& acts,
                                              std::span<const double> x,
                                              std::span<const double> target);

struct SigmaBeta {
  // sigma_tilde[l][s] = sum_{i in I_s} r^(a)_i sigma^(l)[i].
  std::vector<std::vector<Matrix>> sigma_tilde;
  std::vector<Matrix> beta;  // alpha * d alpha / d W-hat^(l); zero for l = L
};

// Per-sample correction terms. sigma^(l)[i] = alpha * d y-hat^(L)_i / dW-hat
// + (y-hat^(L)_i - target_i) * d alpha / dW-hat. The grouped sums are formed
// directly with one vector-Jacobian product per group (the product is linear
// in its seed), so the per-output stack is never materialized here.
absl::StatusOr<SigmaBeta> ComputeSigmaBeta(const PerturbedModel& pm,
                                           const PerturbedActivations& acts,
                                           std::span<const double> x,
                                           std::span<const double> target);

// The full per-output stack sigma^(l)[i], i in [0, n_L), one backward pass
// per output coordinate. Used by verification code to check the grouped
// sums and the server-side identity sum_s gamma_s sigma_s = r^T sigma.
absl::StatusOr<std::vector<std::vector<Matrix>>> SigmaStack(
    const PerturbedModel& pm, const PerturbedActivations& acts,
    std::span<const double> x, std::span<const double> target);

// d alpha / d W-hat^(l) for every layer (zero at l = L).
absl::StatusOr<GradientSet> AlphaGradient(const PerturbedModel& pm,
                                          const PerturbedActivations& acts,
                                          std::span<const double> x);

// Upload payload for one round: g-hat, sigma-tilde and beta each averaged
// over the shard with weight 1/|D_k|.
absl::StatusOr<ClientUpdate> LocalUpdate(const PerturbedModel& pm,
                                         std::span<const Sample> shard,
                                         uint32_t client_id,
                                         Execution exec = Execution::kSerial);

// Plain-mode upload: the true mean gradient on unperturbed weights.
absl::StatusOr<ClientUpdate> LocalUpdatePlain(const MlpParams& w,
                                              uint64_t round_id,
                                              std::span<const Sample> shard,
                                              uint32_t client_id,
                                              Execution exec = Execution::kSerial);

}  // namespace mpfl

#endif  // MPFL_CLIENT_H_
