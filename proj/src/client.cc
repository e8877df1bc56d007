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

#include "mpfl/client.h"

#include <algorithm>
#include <functional>
#include <utility>

#include "absl/strings/str_cat.h"
#include "mpfl/status_macros.h"

namespace mpfl {
namespace {

// Samples are processed in blocks of this size; each block is computed in
// parallel and then folded into the running sum in sample order.
constexpr size_t kBlockSize = 32;

Vector Residual(std::span<const double> out, std::span<const double> target) {
  Vector r(out.size());
  for (size_t i = 0; i < out.size(); ++i) r[i] = out[i] - target[i];
  return r;
}

absl::Status CheckModel(const PerturbedModel& pm) {
  if (pm.layers.size() < 2) {
    return absl::InvalidArgumentError("perturbed model needs >= 2 layers");
  }
  const size_t out = pm.layers.back().rows();
  if (pm.r_add.size() != out || pm.partition.output_dim() != out) {
    return absl::InvalidArgumentError(
        "broadcast r^(a) / partition do not match the output layer");
  }
  return absl::OkStatus();
}

absl::Status CheckSample(const std::vector<Matrix>& layers,
                         std::span<const double> x,
                         std::span<const double> target) {
  if (x.size() != layers.front().cols()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "input length ", x.size(), " vs model input ", layers.front().cols()));
  }
  if (target.size() != layers.back().rows()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "target length ", target.size(), " vs model output ",
        layers.back().rows()));
  }
  return absl::OkStatus();
}

LayerUpdate ZeroLayer(const Matrix& shape, size_t groups, bool perturbed) {
  LayerUpdate u;
  u.g_hat = Matrix(shape.rows(), shape.cols());
  if (perturbed) {
    u.sigma_tilde.assign(groups, Matrix(shape.rows(), shape.cols()));
    u.beta = Matrix(shape.rows(), shape.cols());
  }
  return u;
}

absl::Status Accumulate(const std::vector<LayerUpdate>& sample,
                        std::vector<LayerUpdate>& sum) {
  for (size_t l = 0; l < sum.size(); ++l) {
    MPFL_RETURN_IF_ERROR(Axpy(1.0, sample[l].g_hat, sum[l].g_hat));
    for (size_t s = 0; s < sum[l].sigma_tilde.size(); ++s) {
      MPFL_RETURN_IF_ERROR(
          Axpy(1.0, sample[l].sigma_tilde[s], sum[l].sigma_tilde[s]));
    }
    if (sum[l].beta.size() > 0) {
      MPFL_RETURN_IF_ERROR(Axpy(1.0, sample[l].beta, sum[l].beta));
    }
  }
  return absl::OkStatus();
}

void ScaleAll(double c, std::vector<LayerUpdate>& layers) {
  for (LayerUpdate& u : layers) {
    u.g_hat = Scale(u.g_hat, c);
    for (Matrix& m : u.sigma_tilde) m = Scale(m, c);
    if (u.beta.size() > 0) u.beta = Scale(u.beta, c);
  }
}

using SampleFn =
    std::function<absl::StatusOr<std::vector<LayerUpdate>>(const Sample&)>;

// Mean of per-sample payloads, reduced in sample order.
absl::StatusOr<std::vector<LayerUpdate>> MeanPayload(
    std::span<const Sample> shard, std::vector<LayerUpdate> sum,
    Execution exec, const SampleFn& per_sample) {
  std::vector<absl::StatusOr<std::vector<LayerUpdate>>> block(kBlockSize);
  for (size_t start = 0; start < shard.size(); start += kBlockSize) {
    const size_t n = std::min(kBlockSize, shard.size() - start);
    ForEachIndex(n, exec,
                 [&](size_t i) { block[i] = per_sample(shard[start + i]); });
    for (size_t i = 0; i < n; ++i) {
      if (!block[i].ok()) return block[i].status();
      MPFL_RETURN_IF_ERROR(Accumulate(*block[i], sum));
    }
  }
  ScaleAll(1.0 / static_cast<double>(shard.size()), sum);
  return sum;
}

}  // namespace

absl::StatusOr<PerturbedActivations> ForwardPerturbed(
    const PerturbedModel& pm, std::span<const double> x) {
  MPFL_RETURN_IF_ERROR(CheckModel(pm));
  PerturbedActivations acts;
  MPFL_ASSIGN_OR_RETURN(acts.y_hat, ForwardLayers(pm.layers, x));
  const Vector& penultimate = acts.y_hat[acts.y_hat.size() - 2];
  for (double v : penultimate) acts.alpha += v;
  return acts;
}

absl::StatusOr<double> PerturbedLoss(std::span<const double> y_hat_out,
                                     std::span<const double> target) {
  return LossMse(y_hat_out, target);
}

absl::StatusOr<GradientSet> BackwardPerturbed(const PerturbedModel& pm,
                                              const PerturbedActivations& acts,
                                              std::span<const double> x,
                                              std::span<const double> target) {
  MPFL_RETURN_IF_ERROR(CheckSample(pm.layers, x, target));
  const Vector residual = Residual(acts.y_hat.back(), target);
  return BackpropSeed(pm.layers, x, acts.y_hat, pm.layers.size(), residual);
}

absl::StatusOr<GradientSet> AlphaGradient(const PerturbedModel& pm,
                                          const PerturbedActivations& acts,
                                          std::span<const double> x) {
  const size_t num_layers = pm.layers.size();
  const Vector ones(pm.layers[num_layers - 2].rows(), 1.0);
  return BackpropSeed(pm.layers, x, acts.y_hat, num_layers - 1, ones);
}

absl::StatusOr<SigmaBeta> ComputeSigmaBeta(const PerturbedModel& pm,
                                           const PerturbedActivations& acts,
                                           std::span<const double> x,
                                           std::span<const double> target) {
  MPFL_RETURN_IF_ERROR(CheckModel(pm));
  MPFL_RETURN_IF_ERROR(CheckSample(pm.layers, x, target));
  const size_t num_layers = pm.layers.size();
  const size_t m = pm.partition.num_groups();
  const Vector residual = Residual(acts.y_hat.back(), target);
  MPFL_ASSIGN_OR_RETURN(GradientSet dalpha, AlphaGradient(pm, acts, x));

  SigmaBeta out;
  out.sigma_tilde.resize(num_layers);
  for (size_t s = 0; s < m; ++s) {
    Vector seed(residual.size(), 0.0);
    double coupling = 0.0;
    for (size_t i : pm.partition.group(s)) {
      seed[i] = pm.r_add[i];
      coupling += pm.r_add[i] * residual[i];
    }
    MPFL_ASSIGN_OR_RETURN(
        GradientSet jac,
        BackpropSeed(pm.layers, x, acts.y_hat, num_layers, seed));
    for (size_t l = 0; l < num_layers; ++l) {
      Matrix term = Scale(jac.layers[l], acts.alpha);
      MPFL_RETURN_IF_ERROR(Axpy(coupling, dalpha.layers[l], term));
      out.sigma_tilde[l].push_back(std::move(term));
    }
  }
#ifdef MPFL_MUTATE_SIGMA_GROUP_ORDER
  for (auto& groups : out.sigma_tilde) std::reverse(groups.begin(), groups.end());
#endif
  for (size_t l = 0; l < num_layers; ++l) {
    out.beta.push_back(Scale(dalpha.layers[l], acts.alpha));
  }
  return out;
}

absl::StatusOr<std::vector<std::vector<Matrix>>> SigmaStack(
    const PerturbedModel& pm, const PerturbedActivations& acts,
    std::span<const double> x, std::span<const double> target) {
  MPFL_RETURN_IF_ERROR(CheckModel(pm));
  MPFL_RETURN_IF_ERROR(CheckSample(pm.layers, x, target));
  const size_t num_layers = pm.layers.size();
  const Vector residual = Residual(acts.y_hat.back(), target);
  MPFL_ASSIGN_OR_RETURN(GradientSet dalpha, AlphaGradient(pm, acts, x));
  std::vector<std::vector<Matrix>> stack(num_layers);
  for (size_t i = 0; i < residual.size(); ++i) {
    Vector unit(residual.size(), 0.0);
    unit[i] = 1.0;
    MPFL_ASSIGN_OR_RETURN(
        GradientSet jac,
        BackpropSeed(pm.layers, x, acts.y_hat, num_layers, unit));
    for (size_t l = 0; l < num_layers; ++l) {
      Matrix term = Scale(jac.layers[l], acts.alpha);
      MPFL_RETURN_IF_ERROR(Axpy(residual[i], dalpha.layers[l], term));
      stack[l].push_back(std::move(term));
    }
  }
  return stack;
}

absl::StatusOr<ClientUpdate> LocalUpdate(const PerturbedModel& pm,
                                         std::span<const Sample> shard,
                                         uint32_t client_id, Execution exec) {
  if (shard.empty()) {
    return absl::InvalidArgumentError("local update over an empty shard");
  }
  MPFL_RETURN_IF_ERROR(CheckModel(pm));
  std::vector<LayerUpdate> zero;
  for (const Matrix& w : pm.layers) {
    zero.push_back(ZeroLayer(w, pm.num_groups(), /*perturbed=*/true));
  }
  auto per_sample =
      [&](const Sample& s) -> absl::StatusOr<std::vector<LayerUpdate>> {
    MPFL_ASSIGN_OR_RETURN(PerturbedActivations acts, ForwardPerturbed(pm, s.x));
    MPFL_ASSIGN_OR_RETURN(GradientSet g,
                          BackwardPerturbed(pm, acts, s.x, s.target));
    MPFL_ASSIGN_OR_RETURN(SigmaBeta sb,
                          ComputeSigmaBeta(pm, acts, s.x, s.target));
    std::vector<LayerUpdate> layers(pm.layers.size());
    for (size_t l = 0; l < layers.size(); ++l) {
      layers[l].g_hat = std::move(g.layers[l]);
      layers[l].sigma_tilde = std::move(sb.sigma_tilde[l]);
      layers[l].beta = std::move(sb.beta[l]);
    }
    return layers;
  };
  ClientUpdate update;
  update.client_id = client_id;
  update.round_id = pm.round_id;
  update.sample_count = shard.size();
  MPFL_ASSIGN_OR_RETURN(update.layers,
                        MeanPayload(shard, std::move(zero), exec, per_sample));
  return update;
}

absl::StatusOr<ClientUpdate> LocalUpdatePlain(const MlpParams& w,
                                              uint64_t round_id,
                                              std::span<const Sample> shard,
                                              uint32_t client_id,
                                              Execution exec) {
  if (shard.empty()) {
    return absl::InvalidArgumentError("local update over an empty shard");
  }
  std::vector<LayerUpdate> zero;
  for (const Matrix& layer : w.layers) {
    zero.push_back(ZeroLayer(layer, 0, /*perturbed=*/false));
  }
  auto per_sample =
      [&](const Sample& s) -> absl::StatusOr<std::vector<LayerUpdate>> {
    MPFL_ASSIGN_OR_RETURN(std::vector<Vector> acts, ForwardPlain(w, s.x));
    MPFL_ASSIGN_OR_RETURN(GradientSet g, BackwardPlain(w, acts, s.x, s.target));
    std::vector<LayerUpdate> layers(w.layers.size());
    for (size_t l = 0; l < layers.size(); ++l) {
      layers[l].g_hat = std::move(g.layers[l]);
    }
    return layers;
  };
  ClientUpdate update;
  update.client_id = client_id;
  update.round_id = round_id;
  update.sample_count = shard.size();
  MPFL_ASSIGN_OR_RETURN(update.layers,
                        MeanPayload(shard, std::move(zero), exec, per_sample));
  return update;
}

}  // namespace mpfl
