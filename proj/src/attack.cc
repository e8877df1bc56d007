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

#include "mpfl/attack.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "mpfl/client.h"
#include "mpfl/status_macros.h"

namespace mpfl {
namespace {

double MaxAbsDiff(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double d = 0.0;
  for (size_t l = 0; l < a.size(); ++l) {
    for (size_t i = 0; i < a[l].size(); ++i) {
      d = std::max(d, std::abs(a[l].data()[i] - b[l].data()[i]));
    }
  }
  return d;
}

double MaxLayerRelError(const std::vector<Matrix>& actual,
                        const std::vector<Matrix>& reference) {
  double e = 0.0;
  for (size_t l = 0; l < actual.size(); ++l) {
    e = std::max(e, MaxRelativeError(actual[l], reference[l]));
  }
  return e;
}

double MinPairwise(const std::vector<std::vector<Matrix>>& items) {
  double d = std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < items.size(); ++a) {
    for (size_t b = a + 1; b < items.size(); ++b) {
      d = std::min(d, MaxAbsDiff(items[a], items[b]));
    }
  }
  return items.size() < 2 ? 0.0 : d;
}

std::mt19937_64 SeededRng(uint64_t seed, uint64_t stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(stream),
                    static_cast<uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

Vector NormalVector(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

size_t ArgMax(std::span<const double> v) {
  return static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

size_t ArgMaxWithin(std::span<const double> v, const std::vector<size_t>& idx) {
  size_t best = idx.front();
  for (size_t i : idx) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

class ArgmaxAdversary : public Adversary {
 public:
  std::string name() const override { return "argmax"; }
  size_t Guess(const GuessObservation& obs, std::mt19937_64&) const override {
    return ArgMax(obs.y_hat);
  }
};

class TopGroupAdversary : public Adversary {
 public:
  std::string name() const override { return "top-group"; }
  size_t Guess(const GuessObservation& obs, std::mt19937_64& rng) const override {
    const auto& group = obs.partition.group(obs.partition.group_of(ArgMax(obs.y_hat)));
    std::uniform_int_distribution<size_t> pick(0, group.size() - 1);
    return group[pick(rng)];
  }
};

class GroupArgmaxAdversary : public Adversary {
 public:
  std::string name() const override { return "group-argmax"; }
  size_t Guess(const GuessObservation& obs, std::mt19937_64& rng) const override {
    std::uniform_int_distribution<size_t> pick(0, obs.partition.num_groups() - 1);
    return ArgMaxWithin(obs.y_hat, obs.partition.group(pick(rng)));
  }
};

}  // namespace

absl::StatusOr<AmbiguityWitness> MakeAmbiguityWitness(
    const PerturbedModel& target, std::mt19937_64& rng,
    const NoiseConfig& noise) {
  if (target.layers.size() < 2) {
    return absl::InvalidArgumentError("target needs at least two layers");
  }
  std::vector<size_t> widths{target.layers.front().cols()};
  for (const Matrix& m : target.layers) widths.push_back(m.rows());
  MPFL_ASSIGN_OR_RETURN(LayerDims dims, LayerDims::Create(std::move(widths)));
  AmbiguityWitness w;
  MPFL_ASSIGN_OR_RETURN(w.secret,
                        SampleNoiseWithPublic(dims, target.r_add, target.partition,
                                              rng, noise, target.round_id));
  MPFL_ASSIGN_OR_RETURN(w.alternative, Unperturb(target.layers, w.secret));
  return w;
}

absl::StatusOr<AmbiguityReport> AmbiguityExperiment(
    const std::vector<size_t>& dims, size_t count, uint64_t seed,
    const NoiseConfig& noise) {
  MPFL_ASSIGN_OR_RETURN(LayerDims d, LayerDims::Create(dims));
  std::mt19937_64 rng = SeededRng(seed, 0);
  MlpParams truth = InitParams(d, rng, 1.0);
  MPFL_ASSIGN_OR_RETURN(NoiseSecret secret, SampleNoise(d, 0, rng, noise));
  MPFL_ASSIGN_OR_RETURN(PerturbedModel target, Perturb(truth, secret));
  const Vector x = NormalVector(d.input_dim(), rng);
  MPFL_ASSIGN_OR_RETURN(std::vector<Vector> true_out, ForwardPlain(truth, x));

  AmbiguityReport report;
  report.count = count;
  report.min_distance_to_truth = std::numeric_limits<double>::infinity();
  report.min_output_gap = std::numeric_limits<double>::infinity();
  std::vector<std::vector<Matrix>> witnesses;
  for (size_t i = 0; i < count; ++i) {
    MPFL_ASSIGN_OR_RETURN(AmbiguityWitness w,
                          MakeAmbiguityWitness(target, rng, noise));
    MPFL_ASSIGN_OR_RETURN(PerturbedModel again, Perturb(w.alternative, w.secret));
    report.max_reproduction_error = std::max(
        report.max_reproduction_error, MaxLayerRelError(again.layers, target.layers));
    report.min_distance_to_truth =
        std::min(report.min_distance_to_truth,
                 MaxAbsDiff(w.alternative.layers, truth.layers));
    MPFL_ASSIGN_OR_RETURN(std::vector<Vector> out, ForwardPlain(w.alternative, x));
    double gap = 0.0;
    for (size_t j = 0; j < out.back().size(); ++j) {
      gap = std::max(gap, std::abs(out.back()[j] - true_out.back()[j]));
    }
    report.min_output_gap = std::min(report.min_output_gap, gap);
    witnesses.push_back(std::move(w.alternative.layers));
  }
  report.min_pairwise_distance = MinPairwise(witnesses);
  report.ok = count > 0 && report.max_reproduction_error <= 1e-12 &&
              report.min_distance_to_truth > 1e-6 &&
              (count < 2 || report.min_pairwise_distance > 1e-6);
  return report;
}

absl::StatusOr<std::unique_ptr<Adversary>> MakeAdversary(const std::string& name) {
  if (name == "argmax") return std::make_unique<ArgmaxAdversary>();
  if (name == "top-group") return std::make_unique<TopGroupAdversary>();
  if (name == "group-argmax") return std::make_unique<GroupArgmaxAdversary>();
  return absl::InvalidArgumentError(absl::StrCat("unknown adversary '", name, "'"));
}

std::vector<std::string> AdversaryNames() {
  return {"argmax", "top-group", "group-argmax"};
}

std::string GuessReport::ToJson() const {
  nlohmann::ordered_json j;
  j["m"] = m;
  j["nL"] = n_l;
  j["trials"] = trials;
  j["strategy"] = strategy;
  if (!applicable) {
    j["success_rate"] = "not-applicable";
    j["ci95"] = nullptr;
  } else {
    j["success_rate"] = success_rate;
    j["ci95"] = {ci95_low, ci95_high};
    j["bound"] = bound;
  }
  return j.dump();
}

absl::StatusOr<GuessReport> ArgmaxGuessExperiment(
    size_t n_l, size_t m, size_t trials, const Adversary& adversary,
    uint64_t seed, const NoiseConfig& noise, Execution exec) {
  if (n_l == 0 || m == 0 || m > n_l) {
    return absl::InvalidArgumentError(
        absl::StrCat("need 1 <= m <= nL, got m = ", m, ", nL = ", n_l));
  }
  if (trials == 0) return absl::InvalidArgumentError("trials must be >= 1");
  GuessReport report;
  report.m = m;
  report.n_l = n_l;
  report.trials = trials;
  report.strategy = adversary.name();
  if (n_l == 1) {
    report.applicable = false;
    return report;
  }
  constexpr size_t kHidden = 16;
  MPFL_ASSIGN_OR_RETURN(LayerDims dims, LayerDims::Create({1, kHidden, n_l}));
  std::vector<char> correct(trials, 0);
  std::vector<absl::Status> errors(trials);
  ForEachIndex(trials, exec, [&](size_t t) {
    std::mt19937_64 rng = SeededRng(seed, t + 1);
    const Vector y = NormalVector(n_l, rng);
    const Vector hidden = Relu(NormalVector(kHidden, rng));
    absl::StatusOr<NoiseSecret> secret = SampleNoise(dims, m, rng, noise);
    if (!secret.ok()) {
      errors[t] = secret.status();
      return;
    }
    double alpha = 0.0;
    for (size_t j = 0; j < kHidden; ++j) alpha += secret->r_hidden[0][j] * hidden[j];
    GuessObservation obs;
    obs.y_hat.resize(n_l);
    for (size_t i = 0; i < n_l; ++i) {
      obs.y_hat[i] = y[i] + alpha * secret->r_combined[i];
    }
    obs.alpha = alpha;
    obs.r_add = secret->r_add;
    obs.partition = secret->partition;
    correct[t] = adversary.Guess(obs, rng) == ArgMax(y);
  });
  size_t hits = 0;
  for (size_t t = 0; t < trials; ++t) {
    MPFL_RETURN_IF_ERROR(errors[t]);
    hits += correct[t];
  }
  const double n = static_cast<double>(trials);
  const double p = hits / n;
  const double half = 1.96 * std::sqrt(p * (1.0 - p) / n);
  const double q = 1.0 / static_cast<double>(m);
  report.success_rate = p;
  report.ci95_low = std::max(0.0, p - half);
  report.ci95_high = std::min(1.0, p + half);
  report.bound = q + 3.0 * std::sqrt(q * (1.0 - q) / n);
  return report;
}

absl::StatusOr<GradientAmbiguityReport> GradientAmbiguityExperiment(
    const std::vector<size_t>& dims, size_t count, uint64_t seed,
    const NoiseConfig& noise) {
  MPFL_ASSIGN_OR_RETURN(LayerDims d, LayerDims::Create(dims));
  std::mt19937_64 rng = SeededRng(seed, 0);
  MlpParams truth = InitParams(d, rng, 1.0);
  MPFL_ASSIGN_OR_RETURN(NoiseSecret secret, SampleNoise(d, 0, rng, noise));
  MPFL_ASSIGN_OR_RETURN(PerturbedModel pm, Perturb(truth, secret));
  const Vector x = NormalVector(d.input_dim(), rng);
  const Vector target = NormalVector(d.output_dim(), rng);

  // Everything below uses only what the client holds.
  MPFL_ASSIGN_OR_RETURN(PerturbedActivations acts, ForwardPerturbed(pm, x));
  MPFL_ASSIGN_OR_RETURN(GradientSet g_hat, BackwardPerturbed(pm, acts, x, target));
  MPFL_ASSIGN_OR_RETURN(auto sigma, SigmaStack(pm, acts, x, target));
  MPFL_ASSIGN_OR_RETURN(SigmaBeta sb, ComputeSigmaBeta(pm, acts, x, target));

  // g' = R' o (g-hat - r'^T sigma + upsilon' beta), and back again.
  auto implied = [&](const NoiseSecret& s, double* reproduction)
      -> absl::StatusOr<std::vector<Matrix>> {
    std::vector<Matrix> grad;
    for (size_t l = 0; l < g_hat.layers.size(); ++l) {
      Matrix inner = g_hat.layers[l];
      Matrix rt_sigma(inner.rows(), inner.cols());
      for (size_t i = 0; i < s.r_combined.size(); ++i) {
        MPFL_RETURN_IF_ERROR(Axpy(s.r_combined[i], sigma[l][i], rt_sigma));
      }
      MPFL_RETURN_IF_ERROR(Axpy(-1.0, rt_sigma, inner));
      MPFL_RETURN_IF_ERROR(Axpy(s.upsilon, sb.beta[l], inner));
      MPFL_ASSIGN_OR_RETURN(Matrix g, Hadamard(s.r_mul[l], inner));
      MPFL_ASSIGN_OR_RETURN(Matrix inv, HadamardReciprocal(s.r_mul[l]));
      MPFL_ASSIGN_OR_RETURN(Matrix back, Hadamard(inv, g));
      MPFL_RETURN_IF_ERROR(Axpy(1.0, rt_sigma, back));
      MPFL_RETURN_IF_ERROR(Axpy(-s.upsilon, sb.beta[l], back));
      *reproduction =
          std::max(*reproduction, MaxRelativeError(back, g_hat.layers[l]));
      grad.push_back(std::move(g));
    }
    return grad;
  };

  GradientAmbiguityReport report;
  report.count = count;
  double unused = 0.0;
  MPFL_ASSIGN_OR_RETURN(std::vector<Matrix> from_truth, implied(secret, &unused));
  MPFL_ASSIGN_OR_RETURN(std::vector<Vector> plain_acts, ForwardPlain(truth, x));
  MPFL_ASSIGN_OR_RETURN(GradientSet plain,
                        BackwardPlain(truth, plain_acts, x, target));
  report.true_secret_error = MaxLayerRelError(from_truth, plain.layers);

  std::vector<std::vector<Matrix>> grads;
  for (size_t i = 0; i < count; ++i) {
    MPFL_ASSIGN_OR_RETURN(NoiseSecret alt,
                          SampleNoiseWithPublic(d, pm.r_add, pm.partition, rng, noise));
    MPFL_ASSIGN_OR_RETURN(std::vector<Matrix> g,
                          implied(alt, &report.max_reproduction_error));
    grads.push_back(std::move(g));
  }
  report.min_pairwise_distance = MinPairwise(grads);
  report.ok = count > 0 && report.max_reproduction_error <= 1e-9 &&
              (count < 2 || report.min_pairwise_distance > 1e-3);
  return report;
}

}  // namespace mpfl
