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

// Randomized invariant battery for the perturbation algebra: forward
// relations, the perturbed-gradient identity, exact recovery, the
// telescoping structure of the multiplicative noise, and the grouped
// correction-term identity.

#ifndef MPFL_VERIFY_H_
#define MPFL_VERIFY_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "mpfl/client.h"
#include "mpfl/model.h"
#include "mpfl/perturbation.h"

namespace mpfl {

struct CheckResult {
  std::string name;
  double tolerance = 0.0;
  double max_error = 0.0;
  size_t instances = 0;
  uint64_t worst_seed = 0;   // instance seed with the largest error
  bool passed = true;
};

struct VerifyOptions {
  uint64_t seed = 1;
  size_t instances = 50;
  // Swept round-robin; includes an n_L = 1 shape by default.
  std::vector<std::vector<size_t>> sizes = {
      {3, 4, 2}, {4, 5, 3, 2}, {6, 5, 4, 3}, {5, 8, 1}, {17, 32, 16, 1},
      {20, 64, 32, 10}};
  NoiseConfig noise;
  bool finite_differences = true;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const;
  std::string ToText() const;
};

VerifyReport RunVerification(const VerifyOptions& options);

// One randomized instance: true model, secret, perturbed model and a sample.
struct VerifyInstance {
  MlpParams truth;
  NoiseSecret secret;
  PerturbedModel perturbed;
  Sample sample;
};

// Deterministic in `seed`; m = 0 draws m uniformly from [1, n_L].
absl::StatusOr<VerifyInstance> MakeInstance(const std::vector<size_t>& dims,
                                            uint64_t seed, size_t m = 0,
                                            const NoiseConfig& noise = {});

// Max relative errors of the two forward relations.
struct ForwardErrors {
  double hidden = 0.0;
  double output = 0.0;
};
absl::StatusOr<ForwardErrors> CheckForward(const VerifyInstance& inst);

// Max relative error of g-hat against (1/R) o g + r^T sigma - upsilon beta.
absl::StatusOr<double> CheckGradientIdentity(const VerifyInstance& inst);

// Max relative error of g-hat against central differences of the perturbed
// loss. Coordinates whose perturbation flips any ReLU are skipped.
absl::StatusOr<double> CheckFiniteDifferences(const VerifyInstance& inst,
                                              double step = 1e-5);

// Max relative errors of recovery against the weighted plain gradient and of
// sum_s gamma_s sigma_s against r^T sigma, for `clients` random shards.
struct RecoveryErrors {
  double recovery = 0.0;
  double grouped_sigma = 0.0;
  // Recovery error in units of eps * max|R o g-hat_k| / max|grad|, the
  // rounding floor left after the noise terms cancel.
  double recovery_in_ulps = 0.0;
};
absl::StatusOr<RecoveryErrors> CheckRecovery(const std::vector<size_t>& dims,
                                             uint64_t seed, size_t clients,
                                             const NoiseConfig& noise = {});

// Max relative deviation of the telescoping identities and of
// Unperturb(Perturb(W)) from W, split into hidden layers and the output layer
// (where the additive term is subtracted back out).
struct StructureErrors {
  double telescoping = 0.0;
  double round_trip_hidden = 0.0;
  double round_trip_output = 0.0;
};
absl::StatusOr<StructureErrors> CheckStructure(const VerifyInstance& inst);

}  // namespace mpfl

#endif  // MPFL_VERIFY_H_
