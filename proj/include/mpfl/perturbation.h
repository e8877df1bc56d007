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

// Server-side round noise: the multiplicative masks r^(l), the additive mask
// gamma o r^(a) on the output layer, parameter perturbation, and recovery of
// the true aggregated gradient from what clients upload.

#ifndef MPFL_PERTURBATION_H_
#define MPFL_PERTURBATION_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/model.h"
#include "mpfl/tensor.h"

namespace mpfl {

// Disjoint groups I_1..I_m covering the output indices {0..n_L-1}. Groups are
// kept sorted internally; group order is part of the protocol.
class Partition {
 public:
  static absl::StatusOr<Partition> Create(
      size_t output_dim, std::vector<std::vector<size_t>> groups);
  // Seeded random permutation of the outputs chopped into m nearly-equal
  // groups (sizes differ by at most one).
  static absl::StatusOr<Partition> RandomBalanced(size_t output_dim, size_t m,
                                                  std::mt19937_64& rng);
  // One group per output, in index order.
  static Partition Singletons(size_t output_dim);

  size_t output_dim() const { return group_of_.size(); }
  size_t num_groups() const { return groups_.size(); }
  const std::vector<std::vector<size_t>>& groups() const { return groups_; }
  const std::vector<size_t>& group(size_t s) const { return groups_[s]; }
  size_t group_of(size_t i) const { return group_of_[i]; }

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  Partition() = default;
  std::vector<std::vector<size_t>> groups_;
  std::vector<size_t> group_of_;
};

struct NoiseConfig {
  // r^(l)_i ~ log-uniform over [r_min, r_max].
  double r_min = 0.1;
  double r_max = 10.0;
  // |gamma_{I_s}| ~ uniform over [gamma_min, gamma_max], random sign.
  double gamma_min = 1.0;
  double gamma_max = 1e3;
  // r^(a)_i ~ uniform over [radd_min, radd_max], pairwise gaps >= delta_min.
  double radd_min = -1.0;
  double radd_max = 1.0;
  double delta_min = 1e-3;

  absl::Status Validate() const;
};

// Everything the server keeps private for one round, plus the derived
// matrices R^(l), R^(a) and scalars used during recovery.
struct NoiseSecret {
  uint64_t round_id = 0;
  std::vector<Vector> r_hidden;  // r^(1)..r^(L-1), all entries > 0
  Vector r_add;                  // r^(a), pairwise distinct
  Partition partition = Partition::Singletons(1);
  Vector gamma_groups;  // gamma_{I_1}..gamma_{I_m}
  Vector gamma_full;    // gamma_i = gamma_{I_s} for i in I_s
  Vector r_combined;    // r = gamma o r^(a)
  double upsilon = 0.0;  // r^T r
  std::vector<Matrix> r_mul;  // R^(1)..R^(L)
  Matrix r_add_matrix;        // R^(a), n_L x n_{L-1}

  size_t num_layers() const { return r_mul.size(); }
};

// Assembles a secret from its free components and derives the rest. Rejects
// non-positive r^(l), repeated r^(a) entries and shape mismatches.
absl::StatusOr<NoiseSecret> BuildSecret(const LayerDims& dims,
                                        std::vector<Vector> r_hidden,
                                        Vector r_add, Partition partition,
                                        Vector gamma_groups,
                                        uint64_t round_id = 0);

// r^(l) = 1, gamma = 0, r^(a) = 0, 1, 2, ...: perturbation is the identity.
NoiseSecret IdentitySecret(const LayerDims& dims, size_t m = 1);

// Fresh one-time noise. m = 0 selects m = n_L.
absl::StatusOr<NoiseSecret> SampleNoise(const LayerDims& dims, size_t m,
                                        std::mt19937_64& rng,
                                        const NoiseConfig& config,
                                        uint64_t round_id = 0);

// The hidden-layer noise and gamma for a secret whose public part (r^(a),
// partition) is fixed. Used to enumerate secrets consistent with a broadcast.
absl::StatusOr<NoiseSecret> SampleNoiseWithPublic(const LayerDims& dims,
                                                  const Vector& r_add,
                                                  const Partition& partition,
                                                  std::mt19937_64& rng,
                                                  const NoiseConfig& config,
                                                  uint64_t round_id = 0);

// What clients receive. It has no field from which r^(l), gamma or upsilon
// could be read.
struct PerturbedModel {
  uint64_t round_id = 0;
  std::vector<Matrix> layers;  // W-hat^(1)..W-hat^(L)
  Vector r_add;
  Partition partition = Partition::Singletons(1);

  size_t num_layers() const { return layers.size(); }
  size_t num_groups() const { return partition.num_groups(); }

  friend bool operator==(const PerturbedModel&, const PerturbedModel&) = default;
};

// W-hat^(l) = R^(l) o W^(l) for l < L, R^(L) o W^(L) + R^(a) for l = L.
absl::StatusOr<PerturbedModel> Perturb(const MlpParams& w,
                                       const NoiseSecret& secret);

// Inverse of Perturb under the given secret.
absl::StatusOr<MlpParams> Unperturb(const std::vector<Matrix>& perturbed,
                                    const NoiseSecret& secret);

// Server-side aggregate of the client uploads for one layer.
struct AggregatedLayer {
  Matrix g_hat;
  std::vector<Matrix> sigma;  // one per partition group
  Matrix beta;
};

struct Aggregate {
  uint64_t round_id = 0;
  std::vector<AggregatedLayer> layers;
};

// grad^(l) = R^(l) o (g_hat^(l) - sum_s gamma_{I_s} sigma^(l)_s
//                     + upsilon beta^(l)).
// An aggregate from a different round than the secret is a protocol error.
absl::StatusOr<GradientSet> RecoverGradient(const Aggregate& aggregate,
                                            const NoiseSecret& secret);

}  // namespace mpfl

#endif  // MPFL_PERTURBATION_H_
