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

// Constructive checks of what an honest-but-curious client can and cannot
// infer: alternative (parameters, secret) pairs consistent with a broadcast,
// prediction-guessing experiments, and alternative true gradients consistent
// with an observed perturbed gradient.

#ifndef MPFL_ATTACK_H_
#define MPFL_ATTACK_H_

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/model.h"
#include "mpfl/parallel.h"
#include "mpfl/perturbation.h"

namespace mpfl {

struct AmbiguityWitness {
  MlpParams alternative;
  NoiseSecret secret;
};

// Draws a secret sharing the target's public r^(a) and partition and
// inverts the perturbation under it.
absl::StatusOr<AmbiguityWitness> MakeAmbiguityWitness(
    const PerturbedModel& target, std::mt19937_64& rng,
    const NoiseConfig& noise = {});

struct AmbiguityReport {
  size_t count = 0;
  double max_reproduction_error = 0.0;  // max relative error of Perturb(W')
  double min_pairwise_distance = 0.0;   // max-norm, over witness pairs
  double min_distance_to_truth = 0.0;   // max-norm, witness vs true W
  double min_output_gap = 0.0;          // max-norm of forward-output change
  bool ok = false;
};

// Random true model and secret for `dims`, then `count` witnesses for the
// resulting broadcast.
absl::StatusOr<AmbiguityReport> AmbiguityExperiment(
    const std::vector<size_t>& dims, size_t count, uint64_t seed,
    const NoiseConfig& noise = {});

// Exactly what a client sees about one prediction.
struct GuessObservation {
  Vector y_hat;
  double alpha = 0.0;
  Vector r_add;
  Partition partition = Partition::Singletons(1);
};

class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual std::string name() const = 0;
  virtual size_t Guess(const GuessObservation& obs,
                       std::mt19937_64& rng) const = 0;
};

// "argmax": argmax of y-hat.
// "top-group": a uniformly random index within the group holding argmax y-hat.
// "group-argmax": a uniformly random group, then argmax of y-hat inside it.
absl::StatusOr<std::unique_ptr<Adversary>> MakeAdversary(const std::string& name);
std::vector<std::string> AdversaryNames();

struct GuessReport {
  size_t m = 0;
  size_t n_l = 0;
  size_t trials = 0;
  std::string strategy;
  bool applicable = true;  // false for n_L = 1
  double success_rate = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  double bound = 0.0;  // 1/m + 3 * sqrt((1/m)(1 - 1/m) / trials)
  std::string ToJson() const;
};

// Each trial draws y^(L) ~ N(0, I), a width-16 ReLU hidden layer feeding
// alpha, and fresh noise, then asks the adversary for argmax y^(L).
absl::StatusOr<GuessReport> ArgmaxGuessExperiment(
    size_t n_l, size_t m, size_t trials, const Adversary& adversary,
    uint64_t seed, const NoiseConfig& noise = {},
    Execution exec = Execution::kSerial);

struct GradientAmbiguityReport {
  size_t count = 0;
  double max_reproduction_error = 0.0;  // gradient identity under W' vs g-hat
  double min_pairwise_distance = 0.0;   // between implied true gradients
  double true_secret_error = 0.0;       // implied gradient under the real secret
  bool ok = false;
};

// For one sample on a perturbed model, derives the true gradient implied by
// `count` alternative secrets that share the broadcast's public part.
absl::StatusOr<GradientAmbiguityReport> GradientAmbiguityExperiment(
    const std::vector<size_t>& dims, size_t count, uint64_t seed,
    const NoiseConfig& noise = {});

}  // namespace mpfl

#endif  // MPFL_ATTACK_H_
