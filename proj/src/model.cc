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

#include "mpfl/model.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"
#include "mpfl/status_macros.h"

namespace mpfl {

absl::StatusOr<LayerDims> LayerDims::Create(std::vector<size_t> dims) {
  if (dims.size() < 3) {
    return absl::InvalidArgumentError(absl::StrCat(
        "need at least one hidden layer (got ", dims.size(), " widths)"));
  }
  for (size_t l = 0; l < dims.size(); ++l) {
    if (dims[l] == 0) {
      return absl::InvalidArgumentError(
          absl::StrCat("layer ", l, " has zero width"));
    }
  }
  return LayerDims(std::move(dims));
}

LayerDims MlpParams::dims() const {
  std::vector<size_t> d;
  d.push_back(layers.empty() ? 0 : layers.front().cols());
  for (const Matrix& m : layers) d.push_back(m.rows());
  // Only called on validated parameters.
  return *LayerDims::Create(std::move(d));
}

absl::Status MlpParams::CheckShape(const LayerDims& dims) const {
  if (layers.size() != dims.num_layers()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "expected ", dims.num_layers(), " layers, got ", layers.size()));
  }
  for (size_t l = 1; l <= layers.size(); ++l) {
    const Matrix& m = layers[l - 1];
    if (m.rows() != dims.width(l) || m.cols() != dims.width(l - 1)) {
      return absl::InvalidArgumentError(
          absl::StrCat("layer ", l, " has shape ", m.ShapeString(),
                       ", expected ", dims.width(l), "x", dims.width(l - 1)));
    }
  }
  return absl::OkStatus();
}

MlpParams ZeroParams(const LayerDims& dims) {
  MlpParams p;
  for (size_t l = 1; l <= dims.num_layers(); ++l) {
    p.layers.emplace_back(dims.width(l), dims.width(l - 1));
  }
  return p;
}

MlpParams InitParams(const LayerDims& dims, std::mt19937_64& rng,
                     double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  MlpParams p = ZeroParams(dims);
  for (Matrix& m : p.layers) {
    for (double& v : m.data()) v = normal(rng);
  }
  return p;
}

absl::StatusOr<std::vector<Vector>> ForwardLayers(
    const std::vector<Matrix>& weights, std::span<const double> x) {
  if (weights.empty()) return absl::InvalidArgumentError("empty model");
  std::vector<Vector> acts;
  acts.reserve(weights.size());
  std::span<const double> input = x;
  for (size_t l = 0; l < weights.size(); ++l) {
    MPFL_ASSIGN_OR_RETURN(Vector pre, MatVec(weights[l], input));
    acts.push_back(l + 1 < weights.size() ? Relu(pre) : std::move(pre));
    input = acts.back();
  }
  return acts;
}

absl::StatusOr<std::vector<Vector>> ForwardPlain(const MlpParams& w,
                                                 std::span<const double> x) {
  return ForwardLayers(w.layers, x);
}

absl::StatusOr<double> LossMse(std::span<const double> prediction,
                               std::span<const double> target) {
  if (prediction.size() != target.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("loss: prediction length ", prediction.size(),
                     " vs target length ", target.size()));
  }
  double acc = 0.0;
  for (size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

absl::StatusOr<GradientSet> BackpropSeed(const std::vector<Matrix>& weights,
                                         std::span<const double> x,
                                         const std::vector<Vector>& activations,
                                         size_t top,
                                         std::span<const double> seed) {
  const size_t num_layers = weights.size();
  if (top == 0 || top > num_layers || activations.size() != num_layers) {
    return absl::InvalidArgumentError("backprop: inconsistent layer indices");
  }
  if (seed.size() != weights[top - 1].rows()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "backprop: seed length ", seed.size(), " for layer of width ",
        weights[top - 1].rows()));
  }
  GradientSet grad;
  grad.layers.reserve(num_layers);
  for (const Matrix& m : weights) grad.layers.emplace_back(m.rows(), m.cols());

  // delta holds d(objective)/d(pre-activation of layer l).
  Vector delta(seed.begin(), seed.end());
  if (top < num_layers) {
    const Vector& y = activations[top - 1];
    for (size_t i = 0; i < delta.size(); ++i) {
      if (!(y[i] > 0.0)) delta[i] = 0.0;
    }
  }
  for (size_t l = top; l >= 1; --l) {
    std::span<const double> input =
        l == 1 ? x : std::span<const double>(activations[l - 2]);
    if (input.size() != weights[l - 1].cols()) {
      return absl::InvalidArgumentError("backprop: activation shape mismatch");
    }
    grad.layers[l - 1] = Outer(delta, input);
    if (l == 1) break;
    MPFL_ASSIGN_OR_RETURN(Vector back, MatTransposeVec(weights[l - 1], delta));
    const Vector& y = activations[l - 2];
    for (size_t i = 0; i < back.size(); ++i) {
      if (!(y[i] > 0.0)) back[i] = 0.0;
    }
    delta = std::move(back);
  }
  return grad;
}

absl::StatusOr<GradientSet> BackwardPlain(const MlpParams& w,
                                          const std::vector<Vector>& activations,
                                          std::span<const double> x,
                                          std::span<const double> target) {
  if (activations.size() != w.layers.size()) {
    return absl::InvalidArgumentError("backward: activation count mismatch");
  }
  const Vector& out = activations.back();
  if (out.size() != target.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("backward: target length ", target.size(),
                     " vs output width ", out.size()));
  }
  Vector residual(out.size());
  for (size_t i = 0; i < out.size(); ++i) residual[i] = out[i] - target[i];
  return BackpropSeed(w.layers, x, activations, w.layers.size(), residual);
}

namespace {

absl::StatusOr<GradientSet> SampleGradient(const MlpParams& w,
                                           const Sample& s) {
  MPFL_ASSIGN_OR_RETURN(std::vector<Vector> acts, ForwardPlain(w, s.x));
  return BackwardPlain(w, acts, s.x, s.target);
}

}  // namespace

absl::StatusOr<GradientSet> LocalGradientPlain(const MlpParams& w,
                                               std::span<const Sample> dataset,
                                               Execution exec) {
  if (dataset.empty()) {
    return absl::InvalidArgumentError("local gradient over an empty dataset");
  }
  std::vector<absl::StatusOr<GradientSet>> per_sample(dataset.size());
  ForEachIndex(dataset.size(), exec, [&](size_t i) {
    per_sample[i] = SampleGradient(w, dataset[i]);
  });
  GradientSet mean = ZeroParams(w.dims());
  for (const auto& g : per_sample) {
    if (!g.ok()) return g.status();
    for (size_t l = 0; l < mean.layers.size(); ++l) {
      MPFL_RETURN_IF_ERROR(Axpy(1.0, g->layers[l], mean.layers[l]));
    }
  }
  const double inv = 1.0 / static_cast<double>(dataset.size());
  for (Matrix& m : mean.layers) m = Scale(m, inv);
  return mean;
}

absl::StatusOr<double> MeanLoss(const MlpParams& w,
                                std::span<const Sample> dataset) {
  if (dataset.empty()) return 0.0;
  double total = 0.0;
  for (const Sample& s : dataset) {
    MPFL_ASSIGN_OR_RETURN(std::vector<Vector> acts, ForwardPlain(w, s.x));
    MPFL_ASSIGN_OR_RETURN(double loss, LossMse(acts.back(), s.target));
    total += loss;
  }
  return total / static_cast<double>(dataset.size());
}

absl::StatusOr<GradientSet> WeightedAverage(
    std::span<const WeightedGradient> grads) {
  uint64_t total = 0;
  for (const auto& g : grads) total += g.sample_count;
  if (grads.empty() || total == 0) {
    return absl::InvalidArgumentError("weighted average over zero samples");
  }
  GradientSet out = ZeroParams(grads.front().gradient.dims());
  for (const auto& g : grads) {
    if (g.gradient.layers.size() != out.layers.size()) {
      return absl::InvalidArgumentError("gradient layer count mismatch");
    }
    const double weight =
        static_cast<double>(g.sample_count) / static_cast<double>(total);
    for (size_t l = 0; l < out.layers.size(); ++l) {
      MPFL_RETURN_IF_ERROR(Axpy(weight, g.gradient.layers[l], out.layers[l]));
    }
  }
  return out;
}

absl::StatusOr<MlpParams> ApplyGradient(const MlpParams& w,
                                        const GradientSet& grad, double eta) {
  if (grad.layers.size() != w.layers.size()) {
    return absl::InvalidArgumentError("gradient layer count mismatch");
  }
  MlpParams out = w;
  for (size_t l = 0; l < out.layers.size(); ++l) {
    MPFL_RETURN_IF_ERROR(Axpy(-eta, grad.layers[l], out.layers[l]));
  }
  return out;
}

absl::StatusOr<MlpParams> FedAvgStep(const MlpParams& w,
                                     std::span<const WeightedGradient> grads,
                                     double eta) {
  MPFL_ASSIGN_OR_RETURN(GradientSet avg, WeightedAverage(grads));
  return ApplyGradient(w, avg, eta);
}

double MaxRelativeError(const MlpParams& actual, const MlpParams& reference) {
  if (actual.layers.size() != reference.layers.size()) return INFINITY;
  double worst = 0.0;
  for (size_t l = 0; l < actual.layers.size(); ++l) {
    worst = std::max(worst,
                     MaxRelativeError(actual.layers[l], reference.layers[l]));
  }
  return worst;
}

}  // namespace mpfl
