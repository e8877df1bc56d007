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

#include "mpfl/perturbation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "absl/strings/str_cat.h"
#include "mpfl/status_macros.h"

namespace mpfl {

absl::StatusOr<Partition> Partition::Create(
    size_t output_dim, std::vector<std::vector<size_t>> groups) {
  if (output_dim == 0) return absl::InvalidArgumentError("empty output layer");
  if (groups.empty() || groups.size() > output_dim) {
    return absl::InvalidArgumentError(absl::StrCat(
        "partition needs 1..", output_dim, " groups, got ", groups.size()));
  }
  Partition p;
  p.group_of_.assign(output_dim, groups.size());
  for (size_t s = 0; s < groups.size(); ++s) {
    if (groups[s].empty()) {
      return absl::InvalidArgumentError(absl::StrCat("group ", s, " is empty"));
    }
    std::sort(groups[s].begin(), groups[s].end());
    for (size_t i : groups[s]) {
      if (i >= output_dim) {
        return absl::InvalidArgumentError(
            absl::StrCat("index ", i, " outside output layer"));
      }
      if (p.group_of_[i] != groups.size()) {
        return absl::InvalidArgumentError(
            absl::StrCat("index ", i, " appears in two groups"));
      }
      p.group_of_[i] = s;
    }
  }
  for (size_t i = 0; i < output_dim; ++i) {
    if (p.group_of_[i] == groups.size()) {
      return absl::InvalidArgumentError(
          absl::StrCat("index ", i, " is not covered"));
    }
  }
  p.groups_ = std::move(groups);
  return p;
}

absl::StatusOr<Partition> Partition::RandomBalanced(size_t output_dim,
                                                    size_t m,
                                                    std::mt19937_64& rng) {
  if (m == 0 || m > output_dim) {
    return absl::InvalidArgumentError(
        absl::StrCat("m must be in [1, ", output_dim, "], got ", m));
  }
  std::vector<size_t> perm(output_dim);
  std::iota(perm.begin(), perm.end(), size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<size_t>> groups(m);
  const size_t base = output_dim / m;
  const size_t extra = output_dim % m;
  size_t next = 0;
  for (size_t s = 0; s < m; ++s) {
    const size_t len = base + (s < extra ? 1 : 0);
    groups[s].assign(perm.begin() + next, perm.begin() + next + len);
    next += len;
  }
  return Create(output_dim, std::move(groups));
}

Partition Partition::Singletons(size_t output_dim) {
  std::vector<std::vector<size_t>> groups(output_dim);
  for (size_t i = 0; i < output_dim; ++i) groups[i] = {i};
  return *Create(output_dim, std::move(groups));
}

absl::Status NoiseConfig::Validate() const {
  if (!(r_min > 0.0) || !(r_max >= r_min)) {
    return absl::InvalidArgumentError("noise: need 0 < r_min <= r_max");
  }
  if (!(gamma_min >= 0.0) || !(gamma_max >= gamma_min)) {
    return absl::InvalidArgumentError(
        "noise: need 0 <= gamma_min <= gamma_max");
  }
  if (!(radd_max > radd_min)) {
    return absl::InvalidArgumentError("noise: need radd_min < radd_max");
  }
  if (!(delta_min > 0.0)) {
    return absl::InvalidArgumentError("noise: delta_min must be positive");
  }
  return absl::OkStatus();
}

absl::StatusOr<NoiseSecret> BuildSecret(const LayerDims& dims,
                                        std::vector<Vector> r_hidden,
                                        Vector r_add, Partition partition,
                                        Vector gamma_groups,
                                        uint64_t round_id) {
  const size_t num_layers = dims.num_layers();
  const size_t out = dims.output_dim();
  if (r_hidden.size() != num_layers - 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("expected ", num_layers - 1, " hidden noise vectors"));
  }
  for (size_t l = 1; l < num_layers; ++l) {
    const Vector& r = r_hidden[l - 1];
    if (r.size() != dims.width(l)) {
      return absl::InvalidArgumentError(
          absl::StrCat("r^(", l, ") has length ", r.size()));
    }
    for (double v : r) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        return absl::InvalidArgumentError(
            absl::StrCat("r^(", l, ") has a non-positive entry"));
      }
    }
  }
  if (r_add.size() != out || partition.output_dim() != out ||
      gamma_groups.size() != partition.num_groups()) {
    return absl::InvalidArgumentError("output-layer noise shape mismatch");
  }
  if (std::set<double>(r_add.begin(), r_add.end()).size() != out) {
    return absl::InvalidArgumentError("r^(a) entries must be pairwise distinct");
  }

  NoiseSecret s;
  s.round_id = round_id;
  s.gamma_full.resize(out);
  s.r_combined.resize(out);
  for (size_t i = 0; i < out; ++i) {
    s.gamma_full[i] = gamma_groups[partition.group_of(i)];
    s.r_combined[i] = s.gamma_full[i] * r_add[i];
    s.upsilon += s.r_combined[i] * s.r_combined[i];
  }

  for (size_t l = 1; l <= num_layers; ++l) {
    Matrix r(dims.width(l), dims.width(l - 1));
    for (size_t i = 0; i < r.rows(); ++i) {
      for (size_t j = 0; j < r.cols(); ++j) {
        if (l == 1) {
          r(i, j) = r_hidden[0][i];
        } else if (l < num_layers) {
          r(i, j) = r_hidden[l - 1][i] / r_hidden[l - 2][j];
        } else {
          r(i, j) = 1.0 / r_hidden[l - 2][j];
        }
      }
    }
    s.r_mul.push_back(std::move(r));
  }
  s.r_add_matrix = Matrix(out, dims.width(num_layers - 1));
  for (size_t i = 0; i < out; ++i) {
    for (double& v : s.r_add_matrix.row(i)) v = s.r_combined[i];
  }

  s.r_hidden = std::move(r_hidden);
  s.r_add = std::move(r_add);
  s.partition = std::move(partition);
  s.gamma_groups = std::move(gamma_groups);
  return s;
}

NoiseSecret IdentitySecret(const LayerDims& dims, size_t m) {
  std::vector<Vector> r_hidden;
  for (size_t l = 1; l < dims.num_layers(); ++l) {
    r_hidden.emplace_back(dims.width(l), 1.0);
  }
  Vector r_add(dims.output_dim());
  std::iota(r_add.begin(), r_add.end(), 0.0);
  const size_t out = dims.output_dim();
  m = std::clamp<size_t>(m, 1, out);
  std::vector<std::vector<size_t>> groups(m);
  for (size_t i = 0; i < out; ++i) groups[i * m / out].push_back(i);
  return *BuildSecret(dims, std::move(r_hidden), std::move(r_add),
                      *Partition::Create(out, std::move(groups)),
                      Vector(m, 0.0));
}

namespace {

absl::StatusOr<Vector> SampleDistinctAdditive(size_t n, const NoiseConfig& cfg,
                                              std::mt19937_64& rng) {
  if (static_cast<double>(n - 1) * cfg.delta_min >
      cfg.radd_max - cfg.radd_min) {
    return absl::InvalidArgumentError(absl::StrCat(
        "cannot place ", n, " values with gap ", cfg.delta_min,
        " inside [", cfg.radd_min, ", ", cfg.radd_max, "]"));
  }
  std::uniform_real_distribution<double> dist(cfg.radd_min, cfg.radd_max);
  Vector out;
  out.reserve(n);
  constexpr int kMaxAttempts = 100000;
  for (size_t i = 0; i < n; ++i) {
    int attempts = 0;
    while (true) {
      const double v = dist(rng);
      const bool clear = std::all_of(out.begin(), out.end(), [&](double u) {
        return std::abs(u - v) >= cfg.delta_min;
      });
      if (clear) {
        out.push_back(v);
        break;
      }
      if (++attempts == kMaxAttempts) {
        return absl::ResourceExhaustedError(
            "rejection sampling of r^(a) did not converge");
      }
    }
  }
  return out;
}

std::vector<Vector> SampleHidden(const LayerDims& dims, const NoiseConfig& cfg,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> log_r(std::log(cfg.r_min),
                                               std::log(cfg.r_max));
  std::vector<Vector> r_hidden;
  for (size_t l = 1; l < dims.num_layers(); ++l) {
    Vector r(dims.width(l));
    for (double& v : r) v = std::exp(log_r(rng));
    r_hidden.push_back(std::move(r));
  }
  return r_hidden;
}

Vector SampleGamma(size_t m, const NoiseConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> magnitude(cfg.gamma_min,
                                                   cfg.gamma_max);
  std::bernoulli_distribution negative(0.5);
  Vector gamma(m);
  for (double& g : gamma) {
    const double mag = magnitude(rng);
    g = negative(rng) ? -mag : mag;
  }
  return gamma;
}

}  // namespace

absl::StatusOr<NoiseSecret> SampleNoise(const LayerDims& dims, size_t m,
                                        std::mt19937_64& rng,
                                        const NoiseConfig& config,
                                        uint64_t round_id) {
  MPFL_RETURN_IF_ERROR(config.Validate());
  const size_t out = dims.output_dim();
  if (m == 0) m = out;
  if (m > out) {
    return absl::InvalidArgumentError(
        absl::StrCat("m = ", m, " exceeds output width ", out));
  }
  std::vector<Vector> r_hidden = SampleHidden(dims, config, rng);
  MPFL_ASSIGN_OR_RETURN(Vector r_add, SampleDistinctAdditive(out, config, rng));
  MPFL_ASSIGN_OR_RETURN(Partition partition,
                        Partition::RandomBalanced(out, m, rng));
  Vector gamma = SampleGamma(m, config, rng);
  return BuildSecret(dims, std::move(r_hidden), std::move(r_add),
                     std::move(partition), std::move(gamma), round_id);
}

absl::StatusOr<NoiseSecret> SampleNoiseWithPublic(const LayerDims& dims,
                                                  const Vector& r_add,
                                                  const Partition& partition,
                                                  std::mt19937_64& rng,
                                                  const NoiseConfig& config,
                                                  uint64_t round_id) {
  MPFL_RETURN_IF_ERROR(config.Validate());
  std::vector<Vector> r_hidden = SampleHidden(dims, config, rng);
  Vector gamma = SampleGamma(partition.num_groups(), config, rng);
  return BuildSecret(dims, std::move(r_hidden), r_add, partition,
                     std::move(gamma), round_id);
}

absl::StatusOr<PerturbedModel> Perturb(const MlpParams& w,
                                       const NoiseSecret& secret) {
  if (w.layers.size() != secret.r_mul.size()) {
    return absl::InvalidArgumentError("perturb: layer count mismatch");
  }
  PerturbedModel pm;
  pm.round_id = secret.round_id;
  for (size_t l = 0; l < w.layers.size(); ++l) {
    MPFL_ASSIGN_OR_RETURN(Matrix masked, Hadamard(secret.r_mul[l], w.layers[l]));
    if (l + 1 == w.layers.size()) {
      MPFL_ASSIGN_OR_RETURN(masked, Add(masked, secret.r_add_matrix));
    }
    pm.layers.push_back(std::move(masked));
  }
  pm.r_add = secret.r_add;
  pm.partition = secret.partition;
  return pm;
}

absl::StatusOr<MlpParams> Unperturb(const std::vector<Matrix>& perturbed,
                                    const NoiseSecret& secret) {
  if (perturbed.size() != secret.r_mul.size()) {
    return absl::InvalidArgumentError("unperturb: layer count mismatch");
  }
  MlpParams w;
  for (size_t l = 0; l < perturbed.size(); ++l) {
    MPFL_ASSIGN_OR_RETURN(Matrix inv, HadamardReciprocal(secret.r_mul[l]));
    Matrix source = perturbed[l];
    if (l + 1 == perturbed.size()) {
      MPFL_ASSIGN_OR_RETURN(source, Subtract(source, secret.r_add_matrix));
    }
    MPFL_ASSIGN_OR_RETURN(Matrix layer, Hadamard(inv, source));
    w.layers.push_back(std::move(layer));
  }
  return w;
}

absl::StatusOr<GradientSet> RecoverGradient(const Aggregate& aggregate,
                                            const NoiseSecret& secret) {
  if (aggregate.round_id != secret.round_id) {
    return absl::FailedPreconditionError(
        absl::StrCat("aggregate of round ", aggregate.round_id,
                     " recovered with the secret of round ", secret.round_id));
  }
  if (aggregate.layers.size() != secret.r_mul.size()) {
    return absl::InvalidArgumentError("recover: layer count mismatch");
  }
  const size_t m = secret.partition.num_groups();
  GradientSet out;
  for (size_t l = 0; l < aggregate.layers.size(); ++l) {
    const AggregatedLayer& agg = aggregate.layers[l];
    if (agg.sigma.size() != m) {
      return absl::InvalidArgumentError(absl::StrCat(
          "recover: layer ", l + 1, " carries ", agg.sigma.size(),
          " sigma groups, expected ", m));
    }
    Matrix inner = agg.g_hat;
    for (size_t s = 0; s < m; ++s) {
      MPFL_RETURN_IF_ERROR(Axpy(-secret.gamma_groups[s], agg.sigma[s], inner));
    }
    MPFL_RETURN_IF_ERROR(Axpy(secret.upsilon, agg.beta, inner));
    MPFL_ASSIGN_OR_RETURN(Matrix grad, Hadamard(secret.r_mul[l], inner));
    out.layers.push_back(std::move(grad));
  }
  return out;
}

}  // namespace mpfl
