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

#include "mpfl/server.h"

#include <algorithm>
#include <utility>

#include "absl/strings/str_cat.h"
#include "mpfl/status_macros.h"

namespace mpfl {
namespace {

absl::StatusOr<LayerDims> CheckedDims(const MlpParams& w) {
  std::vector<size_t> widths;
  widths.push_back(w.layers.empty() ? 0 : w.layers.front().cols());
  for (const Matrix& m : w.layers) widths.push_back(m.rows());
  MPFL_ASSIGN_OR_RETURN(LayerDims dims, LayerDims::Create(std::move(widths)));
  MPFL_RETURN_IF_ERROR(w.CheckShape(dims));
  return dims;
}

}  // namespace

const char* ModeName(Mode mode) {
  return mode == Mode::kPlain ? "plain" : "perturbed";
}

absl::StatusOr<Mode> ParseMode(std::string_view name) {
  if (name == "plain") return Mode::kPlain;
  if (name == "perturbed") return Mode::kPerturbed;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown mode '", std::string(name), "'"));
}

absl::StatusOr<Aggregate> AggregateUpdates(std::span<const ClientUpdate> updates,
                                           uint64_t round_id,
                                           const LayerDims& dims,
                                           size_t groups) {
  if (updates.empty()) {
    return absl::FailedPreconditionError("no client updates to aggregate");
  }
  uint64_t total = 0;
  for (const ClientUpdate& u : updates) {
    if (u.round_id != round_id) {
      return absl::FailedPreconditionError(
          absl::StrCat("client ", u.client_id, " sent an update for round ",
                       u.round_id, " during round ", round_id));
    }
    total += u.sample_count;
  }
  if (total == 0) {
    return absl::InvalidArgumentError("aggregate over zero samples");
  }
  const bool perturbed = groups > 0;
  Aggregate agg;
  agg.round_id = round_id;
  for (size_t l = 1; l <= dims.num_layers(); ++l) {
    AggregatedLayer layer;
    layer.g_hat = Matrix(dims.width(l), dims.width(l - 1));
    if (perturbed) {
      layer.sigma.assign(groups, Matrix(dims.width(l), dims.width(l - 1)));
      layer.beta = Matrix(dims.width(l), dims.width(l - 1));
    }
    agg.layers.push_back(std::move(layer));
  }
  for (const ClientUpdate& u : updates) {
    if (u.layers.size() != agg.layers.size()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "client ", u.client_id, " sent ", u.layers.size(), " layers"));
    }
    const double weight =
        static_cast<double>(u.sample_count) / static_cast<double>(total);
    for (size_t l = 0; l < agg.layers.size(); ++l) {
      const LayerUpdate& in = u.layers[l];
      AggregatedLayer& out = agg.layers[l];
      MPFL_RETURN_IF_ERROR(Axpy(weight, in.g_hat, out.g_hat));
      if (!perturbed) continue;
      if (in.sigma_tilde.size() != groups) {
        return absl::InvalidArgumentError(absl::StrCat(
            "client ", u.client_id, " sent ", in.sigma_tilde.size(),
            " sigma groups, expected ", groups));
      }
      for (size_t s = 0; s < groups; ++s) {
        MPFL_RETURN_IF_ERROR(Axpy(weight, in.sigma_tilde[s], out.sigma[s]));
      }
      MPFL_RETURN_IF_ERROR(Axpy(weight, in.beta, out.beta));
    }
  }
  return agg;
}

void ZeroizeSecret(NoiseSecret& secret) {
  auto wipe = [](std::span<double> v) { std::fill(v.begin(), v.end(), 0.0); };
  for (Vector& r : secret.r_hidden) wipe(r);
  wipe(secret.gamma_groups);
  wipe(secret.gamma_full);
  wipe(secret.r_combined);
  secret.upsilon = 0.0;
  for (Matrix& m : secret.r_mul) wipe(m.data());
  wipe(secret.r_add_matrix.data());
}

absl::StatusOr<RoundState> RoundState::BeginPerturbed(
    const MlpParams& w, uint64_t round_id, size_t m, const NoiseConfig& noise,
    std::mt19937_64& rng, std::set<uint32_t> expected_clients) {
  MPFL_ASSIGN_OR_RETURN(const LayerDims dims, CheckedDims(w));
  MPFL_ASSIGN_OR_RETURN(NoiseSecret secret,
                        SampleNoise(dims, m, rng, noise, round_id));
  return BeginWithSecret(w, std::move(secret), std::move(expected_clients));
}

absl::StatusOr<RoundState> RoundState::BeginWithSecret(
    const MlpParams& w, NoiseSecret secret,
    std::set<uint32_t> expected_clients) {
  if (expected_clients.empty()) {
    return absl::InvalidArgumentError("a round needs at least one client");
  }
  RoundState state;
  MPFL_ASSIGN_OR_RETURN(state.dims_, CheckedDims(w));
  state.round_id_ = secret.round_id;
  state.mode_ = Mode::kPerturbed;
  MPFL_ASSIGN_OR_RETURN(state.broadcast_, Perturb(w, secret));
  state.secret_ = std::move(secret);
  state.expected_ = std::move(expected_clients);
  return state;
}

absl::StatusOr<RoundState> RoundState::BeginPlain(
    const MlpParams& w, uint64_t round_id,
    std::set<uint32_t> expected_clients) {
  if (expected_clients.empty()) {
    return absl::InvalidArgumentError("a round needs at least one client");
  }
  RoundState state;
  MPFL_ASSIGN_OR_RETURN(state.dims_, CheckedDims(w));
  state.round_id_ = round_id;
  state.mode_ = Mode::kPlain;
  state.broadcast_.round_id = round_id;
  state.broadcast_.layers = w.layers;
  state.broadcast_.partition = Partition::Singletons(state.dims_.output_dim());
  state.expected_ = std::move(expected_clients);
  return state;
}

absl::Status RoundState::Receive(ClientUpdate update) {
  if (recovered_) {
    return absl::FailedPreconditionError("round already recovered");
  }
  if (update.round_id != round_id_) {
    return absl::FailedPreconditionError(
        absl::StrCat("update for round ", update.round_id, " during round ",
                     round_id_));
  }
  if (!expected_.contains(update.client_id)) {
    return absl::FailedPreconditionError(
        absl::StrCat("unexpected client ", update.client_id));
  }
  if (received_.contains(update.client_id)) {
    return absl::FailedPreconditionError(
        absl::StrCat("duplicate update from client ", update.client_id));
  }
  if (update.sample_count == 0) {
    return absl::InvalidArgumentError("update with zero samples");
  }
  const uint32_t id = update.client_id;
  received_.emplace(id, std::move(update));
  return absl::OkStatus();
}

bool RoundState::complete() const {
  return received_.size() == expected_.size();
}

absl::StatusOr<GradientSet> RoundState::RecoverAggregate() {
  if (recovered_) {
    return absl::FailedPreconditionError(
        absl::StrCat("round ", round_id_, " was already recovered"));
  }
  if (!complete()) {
    std::vector<uint32_t> missing;
    for (uint32_t id : expected_) {
      if (!received_.contains(id)) missing.push_back(id);
    }
    return absl::FailedPreconditionError(absl::StrCat(
        "recovery before all updates arrived; missing ", missing.size(),
        " client(s), first ", missing.front()));
  }
  std::vector<ClientUpdate> ordered;
  ordered.reserve(received_.size());
  for (const auto& [id, u] : received_) ordered.push_back(u);

  const size_t groups =
      mode_ == Mode::kPerturbed ? broadcast_.partition.num_groups() : 0;
  MPFL_ASSIGN_OR_RETURN(Aggregate agg,
                        AggregateUpdates(ordered, round_id_, dims_, groups));
  recovered_ = true;
  if (mode_ == Mode::kPlain) {
    GradientSet g;
    for (AggregatedLayer& layer : agg.layers) {
      g.layers.push_back(std::move(layer.g_hat));
    }
    return g;
  }
  absl::StatusOr<GradientSet> grad = RecoverGradient(agg, *secret_);
  ZeroizeSecret(*secret_);
  secret_.reset();
  return grad;
}

absl::StatusOr<MlpParams> RoundState::RecoverAndUpdate(const MlpParams& w,
                                                       double eta,
                                                       GradientSet* applied) {
  MPFL_ASSIGN_OR_RETURN(GradientSet grad, RecoverAggregate());
  MPFL_ASSIGN_OR_RETURN(MlpParams next, ApplyGradient(w, grad, eta));
  if (applied != nullptr) *applied = std::move(grad);
  return next;
}

}  // namespace mpfl
