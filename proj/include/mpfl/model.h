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

// Plain bias-free MLP with ReLU hidden layers and squared-error loss. This is
// the unperturbed reference that the perturbed protocol has to reproduce.

#ifndef MPFL_MODEL_H_
#define MPFL_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/parallel.h"
#include "mpfl/tensor.h"

namespace mpfl {

// Layer widths n_0 (input) .. n_L (output), L >= 2.
class LayerDims {
 public:
  static absl::StatusOr<LayerDims> Create(std::vector<size_t> dims);

  size_t num_layers() const { return dims_.size() - 1; }
  size_t input_dim() const { return dims_.front(); }
  size_t output_dim() const { return dims_.back(); }
  // Width of layer l, 0 <= l <= L.
  size_t width(size_t l) const { return dims_[l]; }
  const std::vector<size_t>& values() const { return dims_; }

  friend bool operator==(const LayerDims&, const LayerDims&) = default;

 private:
  explicit LayerDims(std::vector<size_t> dims) : dims_(std::move(dims)) {}
  std::vector<size_t> dims_;
};

// layers[l - 1] holds W^(l), shape n_l x n_{l-1}.
struct MlpParams {
  std::vector<Matrix> layers;

  size_t num_layers() const { return layers.size(); }
  LayerDims dims() const;
  absl::Status CheckShape(const LayerDims& dims) const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Same layout as MlpParams; holds dL/dW^(l) or an average of them.
using GradientSet = MlpParams;

struct Sample {
  Vector x;
  Vector target;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Zero-valued parameters with the given shape.
MlpParams ZeroParams(const LayerDims& dims);

// Entries drawn from normal(0, stddev).
MlpParams InitParams(const LayerDims& dims, std::mt19937_64& rng,
                     double stddev = 0.01);

// Returns y^(1) .. y^(L). Hidden layers apply ReLU, the last one is linear.
absl::StatusOr<std::vector<Vector>> ForwardLayers(
    const std::vector<Matrix>& weights, std::span<const double> x);
absl::StatusOr<std::vector<Vector>> ForwardPlain(const MlpParams& w,
                                                 std::span<const double> x);

// 0.5 * ||prediction - target||^2.
absl::StatusOr<double> LossMse(std::span<const double> prediction,
                               std::span<const double> target);

// Vector-Jacobian product through an MLP given its stored activations:
// returns d(seed . y^(top)) / dW^(l) for every layer (zero above `top`).
// For hidden `top` the ReLU of that layer is included. Activations are the
// post-activation outputs y^(1)..y^(L); the ReLU derivative at a hidden unit
// is 1 when its output is > 0 and 0 otherwise.
absl::StatusOr<GradientSet> BackpropSeed(const std::vector<Matrix>& weights,
                                         std::span<const double> x,
                                         const std::vector<Vector>& activations,
                                         size_t top, std::span<const double> seed);

absl::StatusOr<GradientSet> BackwardPlain(const MlpParams& w,
                                          const std::vector<Vector>& activations,
                                          std::span<const double> x,
                                          std::span<const double> target);

// Mean per-sample gradient over `dataset`.
absl::StatusOr<GradientSet> LocalGradientPlain(
    const MlpParams& w, std::span<const Sample> dataset,
    Execution exec = Execution::kSerial);

// Mean loss over `dataset` (0 for an empty dataset).
absl::StatusOr<double> MeanLoss(const MlpParams& w,
                                std::span<const Sample> dataset);

struct WeightedGradient {
  GradientSet gradient;
  uint64_t sample_count = 0;
};

// sum_k (|D_k| / |D|) * grad_k.
absl::StatusOr<GradientSet> WeightedAverage(
    std::span<const WeightedGradient> grads);

// W - eta * grad, layerwise.
absl::StatusOr<MlpParams> ApplyGradient(const MlpParams& w,
                                        const GradientSet& grad, double eta);

// W <- W - eta * sum_k (|D_k| / |D|) grad_k.
absl::StatusOr<MlpParams> FedAvgStep(const MlpParams& w,
                                     std::span<const WeightedGradient> grads,
                                     double eta);

double MaxRelativeError(const MlpParams& actual, const MlpParams& reference);

}  // namespace mpfl

#endif  // MPFL_MODEL_H_
