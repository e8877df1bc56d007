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

#include "mpfl/verify.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "mpfl/server.h"
#include "mpfl/status_macros.h"

namespace mpfl {
namespace {

std::mt19937_64 InstanceRng(uint64_t seed) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    0x76657269u};
  return std::mt19937_64(seq);
}

Vector NormalVector(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

// Entries ~ normal(0, 1 / n_{l-1}) so activations stay O(1) with depth.
MlpParams ScaledParams(const LayerDims& dims, std::mt19937_64& rng) {
  MlpParams p = ZeroParams(dims);
  for (size_t l = 1; l <= dims.num_layers(); ++l) {
    std::normal_distribution<double> normal(
        0.0, 1.0 / std::sqrt(static_cast<double>(dims.width(l - 1))));
    for (double& v : p.layers[l - 1].data()) v = normal(rng);
  }
  return p;
}

absl::StatusOr<size_t> PickGroups(size_t m, size_t n_l, std::mt19937_64& rng) {
  if (m > n_l) {
    return absl::InvalidArgumentError(absl::StrCat("m = ", m, " > nL = ", n_l));
  }
  if (m != 0) return m;
  std::uniform_int_distribution<size_t> pick(1, n_l);
  return pick(rng);
}

std::vector<bool> ActivePattern(const PerturbedActivations& acts) {
  std::vector<bool> pattern;
  for (size_t l = 0; l + 1 < acts.y_hat.size(); ++l) {
    for (double v : acts.y_hat[l]) pattern.push_back(v > 0.0);
  }
  return pattern;
}

void Record(CheckResult& check, uint64_t seed, double error) {
  if (std::isnan(error)) error = std::numeric_limits<double>::infinity();
  if (check.instances == 0 || error > check.max_error) {
    check.max_error = error;
    check.worst_seed = seed;
  }
  ++check.instances;
  if (error > check.tolerance) check.passed = false;
}

}  // namespace

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.passed; });
}

std::string VerifyReport::ToText() const {
  std::string out;
  for (const CheckResult& c : checks) {
    absl::StrAppendFormat(&out, "%-20s max=%.3e tol=%.3g n=%d %s",
                          c.name, c.max_error, c.tolerance, c.instances,
                          c.passed ? "ok" : "FAIL");
    if (!c.passed) absl::StrAppend(&out, " seed=", c.worst_seed);
    absl::StrAppend(&out, "\n");
  }
  return out;
}

absl::StatusOr<VerifyInstance> MakeInstance(const std::vector<size_t>& dims,
                                            uint64_t seed, size_t m,
                                            const NoiseConfig& noise) {
  MPFL_ASSIGN_OR_RETURN(LayerDims d, LayerDims::Create(dims));
  std::mt19937_64 rng = InstanceRng(seed);
  VerifyInstance inst;
  inst.truth = ScaledParams(d, rng);
  MPFL_ASSIGN_OR_RETURN(size_t groups, PickGroups(m, d.output_dim(), rng));
  MPFL_ASSIGN_OR_RETURN(inst.secret, SampleNoise(d, groups, rng, noise, seed));
  MPFL_ASSIGN_OR_RETURN(inst.perturbed, Perturb(inst.truth, inst.secret));
  inst.sample.x = NormalVector(d.input_dim(), rng);
  inst.sample.target = NormalVector(d.output_dim(), rng);
  return inst;
}

absl::StatusOr<ForwardErrors> CheckForward(const VerifyInstance& inst) {
  const NoiseSecret& s = inst.secret;
  MPFL_ASSIGN_OR_RETURN(std::vector<Vector> y, ForwardPlain(inst.truth, inst.sample.x));
  MPFL_ASSIGN_OR_RETURN(PerturbedActivations acts,
                        ForwardPerturbed(inst.perturbed, inst.sample.x));
  ForwardErrors e;
  for (size_t l = 0; l + 1 < y.size(); ++l) {
    Vector expect(y[l].size());
    for (size_t i = 0; i < expect.size(); ++i) expect[i] = s.r_hidden[l][i] * y[l][i];
    e.hidden = std::max(e.hidden, MaxRelativeError(acts.y_hat[l], expect));
  }
  Vector expect = y.back();
  for (size_t i = 0; i < expect.size(); ++i) expect[i] += acts.alpha * s.r_combined[i];
  e.output = MaxRelativeError(acts.y_hat.back(), expect);
  return e;
}

absl::StatusOr<double> CheckGradientIdentity(const VerifyInstance& inst) {
  const NoiseSecret& s = inst.secret;
  const Sample& smp = inst.sample;
  MPFL_ASSIGN_OR_RETURN(std::vector<Vector> y, ForwardPlain(inst.truth, smp.x));
  MPFL_ASSIGN_OR_RETURN(GradientSet g, BackwardPlain(inst.truth, y, smp.x, smp.target));
  MPFL_ASSIGN_OR_RETURN(PerturbedActivations acts,
                        ForwardPerturbed(inst.perturbed, smp.x));
  MPFL_ASSIGN_OR_RETURN(GradientSet g_hat,
                        BackwardPerturbed(inst.perturbed, acts, smp.x, smp.target));
  MPFL_ASSIGN_OR_RETURN(auto sigma,
                        SigmaStack(inst.perturbed, acts, smp.x, smp.target));
  MPFL_ASSIGN_OR_RETURN(SigmaBeta sb,
                        ComputeSigmaBeta(inst.perturbed, acts, smp.x, smp.target));
  double err = 0.0;
  for (size_t l = 0; l < g.layers.size(); ++l) {
    MPFL_ASSIGN_OR_RETURN(Matrix inv, HadamardReciprocal(s.r_mul[l]));
    MPFL_ASSIGN_OR_RETURN(Matrix rhs, Hadamard(inv, g.layers[l]));
    for (size_t i = 0; i < s.r_combined.size(); ++i) {
      MPFL_RETURN_IF_ERROR(Axpy(s.r_combined[i], sigma[l][i], rhs));
    }
    MPFL_RETURN_IF_ERROR(Axpy(-s.upsilon, sb.beta[l], rhs));
    err = std::max(err, MaxRelativeError(g_hat.layers[l], rhs));
  }
  return err;
}

absl::StatusOr<double> CheckFiniteDifferences(const VerifyInstance& inst,
                                              double step) {
  const Sample& smp = inst.sample;
  PerturbedModel pm = inst.perturbed;
  MPFL_ASSIGN_OR_RETURN(PerturbedActivations acts, ForwardPerturbed(pm, smp.x));
  MPFL_ASSIGN_OR_RETURN(GradientSet g_hat,
                        BackwardPerturbed(pm, acts, smp.x, smp.target));
  const std::vector<bool> base = ActivePattern(acts);
  auto loss_at = [&](std::vector<bool>* pattern) -> absl::StatusOr<double> {
    MPFL_ASSIGN_OR_RETURN(PerturbedActivations a, ForwardPerturbed(pm, smp.x));
    *pattern = ActivePattern(a);
    return PerturbedLoss(a.y_hat.back(), smp.target);
  };
  double err = 0.0;
  for (size_t l = 0; l < pm.layers.size(); ++l) {
    Matrix& w = pm.layers[l];
    const Matrix& g = g_hat.layers[l];
    const double scale = MaxAbs(g.data());
    double layer_err = 0.0;
    for (size_t k = 0; k < w.size(); ++k) {
      const double orig = w.data()[k];
      const double h = step * std::max(1.0, std::abs(orig));
      std::vector<bool> up_pattern, down_pattern;
      w.data()[k] = orig + h;
      MPFL_ASSIGN_OR_RETURN(double up, loss_at(&up_pattern));
      w.data()[k] = orig - h;
      MPFL_ASSIGN_OR_RETURN(double down, loss_at(&down_pattern));
      w.data()[k] = orig;
      if (up_pattern != base || down_pattern != base) continue;
      const double fd = (up - down) / (2.0 * h);
      layer_err = std::max(layer_err, std::abs(fd - g.data()[k]));
    }
    err = std::max(err, scale > 0.0 ? layer_err / scale : layer_err);
  }
  return err;
}

absl::StatusOr<RecoveryErrors> CheckRecovery(const std::vector<size_t>& dims,
                                             uint64_t seed, size_t clients,
                                             const NoiseConfig& noise) {
  MPFL_ASSIGN_OR_RETURN(LayerDims d, LayerDims::Create(dims));
  std::mt19937_64 rng = InstanceRng(seed);
  MlpParams truth = ScaledParams(d, rng);
  MPFL_ASSIGN_OR_RETURN(size_t groups, PickGroups(0, d.output_dim(), rng));
  MPFL_ASSIGN_OR_RETURN(NoiseSecret secret, SampleNoise(d, groups, rng, noise, seed));
  MPFL_ASSIGN_OR_RETURN(PerturbedModel pm, Perturb(truth, secret));

  std::uniform_int_distribution<size_t> shard_size(1, 5);
  std::vector<ClientUpdate> updates;
  std::vector<WeightedGradient> plain;
  // Weighted mean over all samples of the full per-output sigma stack.
  std::vector<std::vector<Matrix>> stack_mean;
  uint64_t total = 0;
  std::vector<std::vector<Sample>> shards;
  for (size_t k = 0; k < clients; ++k) {
    std::vector<Sample> shard(shard_size(rng));
    for (Sample& s : shard) {
      s.x = NormalVector(d.input_dim(), rng);
      s.target = NormalVector(d.output_dim(), rng);
    }
    total += shard.size();
    shards.push_back(std::move(shard));
  }
  for (size_t l = 0; l < d.num_layers(); ++l) {
    stack_mean.emplace_back(d.output_dim(),
                            Matrix(d.width(l + 1), d.width(l)));
  }
  for (size_t k = 0; k < clients; ++k) {
    const auto& shard = shards[k];
    MPFL_ASSIGN_OR_RETURN(ClientUpdate u,
                          LocalUpdate(pm, shard, static_cast<uint32_t>(k)));
    updates.push_back(std::move(u));
    MPFL_ASSIGN_OR_RETURN(GradientSet g, LocalGradientPlain(truth, shard));
    plain.push_back({std::move(g), shard.size()});
    for (const Sample& s : shard) {
      MPFL_ASSIGN_OR_RETURN(PerturbedActivations acts, ForwardPerturbed(pm, s.x));
      MPFL_ASSIGN_OR_RETURN(auto stack, SigmaStack(pm, acts, s.x, s.target));
      for (size_t l = 0; l < stack.size(); ++l) {
        for (size_t i = 0; i < stack[l].size(); ++i) {
          MPFL_RETURN_IF_ERROR(
              Axpy(1.0 / static_cast<double>(total), stack[l][i], stack_mean[l][i]));
        }
      }
    }
  }
  MPFL_ASSIGN_OR_RETURN(Aggregate agg,
                        AggregateUpdates(updates, secret.round_id, d, groups));
  MPFL_ASSIGN_OR_RETURN(GradientSet recovered, RecoverGradient(agg, secret));
  MPFL_ASSIGN_OR_RETURN(GradientSet expected, WeightedAverage(plain));

  RecoveryErrors e;
  e.recovery = MaxRelativeError(recovered, expected);
  for (size_t l = 0; l < d.num_layers(); ++l) {
    double noisy = 0.0;
    for (const ClientUpdate& u : updates) {
      MPFL_ASSIGN_OR_RETURN(Matrix scaled,
                            Hadamard(secret.r_mul[l], u.layers[l].g_hat));
      noisy = std::max(noisy, MaxAbs(scaled.data()));
    }
    const double reference = MaxAbs(expected.layers[l].data());
    const double floor = std::numeric_limits<double>::epsilon() *
                         std::max(noisy, reference);
    const double abs_err = MaxRelativeError(recovered.layers[l],
                                            expected.layers[l]) *
                           (reference > 0.0 ? reference : 1.0);
    if (floor > 0.0) {
      e.recovery_in_ulps = std::max(e.recovery_in_ulps, abs_err / floor);
    }
  }
  for (size_t l = 0; l < d.num_layers(); ++l) {
    Matrix grouped(d.width(l + 1), d.width(l));
    for (size_t s = 0; s < groups; ++s) {
      MPFL_RETURN_IF_ERROR(
          Axpy(secret.gamma_groups[s], agg.layers[l].sigma[s], grouped));
    }
    Matrix full(d.width(l + 1), d.width(l));
    for (size_t i = 0; i < d.output_dim(); ++i) {
      MPFL_RETURN_IF_ERROR(Axpy(secret.r_combined[i], stack_mean[l][i], full));
    }
    e.grouped_sigma = std::max(e.grouped_sigma, MaxRelativeError(grouped, full));
  }
  return e;
}

absl::StatusOr<StructureErrors> CheckStructure(const VerifyInstance& inst) {
  const NoiseSecret& s = inst.secret;
  const size_t num_layers = s.r_mul.size();
  StructureErrors e;
  for (size_t l = 1; l <= num_layers; ++l) {
    const Matrix& r = s.r_mul[l - 1];
    Matrix expect(r.rows(), r.cols());
    Matrix actual = r;
    if (l > 1) {
      MPFL_ASSIGN_OR_RETURN(actual, ScaleCols(r, s.r_hidden[l - 2]));
    }
    for (size_t i = 0; i < r.rows(); ++i) {
      for (size_t j = 0; j < r.cols(); ++j) {
        expect(i, j) = l == num_layers ? 1.0 : s.r_hidden[l - 1][i];
      }
    }
    e.telescoping = std::max(e.telescoping, MaxRelativeError(actual, expect));
  }
  MPFL_ASSIGN_OR_RETURN(MlpParams back, Unperturb(inst.perturbed.layers, s));
  for (size_t l = 0; l + 1 < num_layers; ++l) {
    e.round_trip_hidden = std::max(
        e.round_trip_hidden, MaxRelativeError(back.layers[l], inst.truth.layers[l]));
  }
  e.round_trip_output =
      MaxRelativeError(back.layers.back(), inst.truth.layers.back());
  return e;
}

VerifyReport RunVerification(const VerifyOptions& options) {
  CheckResult hidden{"forward_hidden", 1e-10};
  CheckResult output{"forward_output", 1e-9};
  CheckResult identity{"gradient_identity", 1e-9};
  CheckResult finite{"finite_differences", 1e-6};
  CheckResult recovery{"recovery", 1e-9};
  CheckResult grouped{"grouped_sigma", 1e-9};
  CheckResult telescoping{"telescoping", 1e-12};
  CheckResult recovery_ulps{"recovery_in_ulps", 64.0};
  CheckResult trip_hidden{"round_trip_hidden", 1e-12};
  CheckResult trip_output{"round_trip_output", 1e-10};
  const double kFailed = std::numeric_limits<double>::infinity();

  for (size_t n = 0; n < options.instances; ++n) {
    const uint64_t seed = options.seed + n;
    const auto& dims = options.sizes[n % options.sizes.size()];
    absl::StatusOr<VerifyInstance> inst = MakeInstance(dims, seed, 0, options.noise);
    if (!inst.ok()) {
      for (CheckResult* c : {&hidden, &output, &identity, &telescoping, &trip_hidden,
                              &trip_output}) {
        Record(*c, seed, kFailed);
      }
      continue;
    }
    absl::StatusOr<ForwardErrors> fwd = CheckForward(*inst);
    Record(hidden, seed, fwd.ok() ? fwd->hidden : kFailed);
    Record(output, seed, fwd.ok() ? fwd->output : kFailed);
    absl::StatusOr<double> id = CheckGradientIdentity(*inst);
    Record(identity, seed, id.ok() ? *id : kFailed);
    if (options.finite_differences) {
      absl::StatusOr<double> fd = CheckFiniteDifferences(*inst);
      Record(finite, seed, fd.ok() ? *fd : kFailed);
    }
    absl::StatusOr<RecoveryErrors> rec =
        CheckRecovery(dims, seed, 1 + n % 5, options.noise);
    Record(recovery, seed, rec.ok() ? rec->recovery : kFailed);
    Record(recovery_ulps, seed, rec.ok() ? rec->recovery_in_ulps : kFailed);
    Record(grouped, seed, rec.ok() ? rec->grouped_sigma : kFailed);
    absl::StatusOr<StructureErrors> st = CheckStructure(*inst);
    Record(telescoping, seed, st.ok() ? st->telescoping : kFailed);
    Record(trip_hidden, seed, st.ok() ? st->round_trip_hidden : kFailed);
    Record(trip_output, seed, st.ok() ? st->round_trip_output : kFailed);
  }
  VerifyReport report;
  report.checks = {hidden, output, identity};
  if (options.finite_differences) report.checks.push_back(finite);
  report.checks.insert(report.checks.end(),
                       {recovery, recovery_ulps, grouped, telescoping,
                        trip_hidden, trip_output});
  return report;
}

}  // namespace mpfl
