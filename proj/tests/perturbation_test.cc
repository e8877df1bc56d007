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
#include <random>
#include <set>

#include "gtest/gtest.h"
#include "mpfl/client.h"
#include "mpfl/server.h"
#include "test_util.h"

namespace mpfl {
namespace {

using ::mpfl::testing::RandomParams;
using ::mpfl::testing::RandomSamples;
using ::mpfl::testing::RelErr;

LayerDims Dims(std::vector<size_t> d) { return *LayerDims::Create(std::move(d)); }

// dims (1,1,1), r^(1) = 4, gamma = 2, r^(a) = 0.5.
NoiseSecret TinySecret() {
  return *BuildSecret(Dims({1, 1, 1}), {Vector{4}}, Vector{0.5},
                      Partition::Singletons(1), Vector{2});
}

MlpParams TinyNet() {
  return MlpParams{{Matrix::FromRows({{2}}), Matrix::FromRows({{3}})}};
}

NoiseConfig NarrowNoise() {
  NoiseConfig c;
  c.gamma_max = 10.0;
  return c;
}

TEST(PartitionTest, Validation) {
  EXPECT_FALSE(Partition::Create(3, {{0, 1}}).ok());
  EXPECT_FALSE(Partition::Create(3, {{0, 1}, {1, 2}}).ok());
  EXPECT_FALSE(Partition::Create(3, {{0, 1, 2}, {}}).ok());
  EXPECT_FALSE(Partition::Create(3, {{0, 1, 3}}).ok());
  ASSERT_OK_AND_ASSIGN(Partition p, Partition::Create(3, {{2, 0}, {1}}));
  EXPECT_EQ(p.group(0), (std::vector<size_t>{0, 2}));
  EXPECT_EQ(p.group_of(1), 1u);
}

TEST(PartitionTest, RandomBalancedIsAPartition) {
  std::mt19937_64 rng(1);
  for (size_t n : {1, 2, 7, 10, 16}) {
    for (size_t m = 1; m <= n; ++m) {
      ASSERT_OK_AND_ASSIGN(Partition p, Partition::RandomBalanced(n, m, rng));
      ASSERT_EQ(p.num_groups(), m);
      std::set<size_t> seen;
      size_t lo = n, hi = 0;
      for (const auto& g : p.groups()) {
        lo = std::min(lo, g.size());
        hi = std::max(hi, g.size());
        seen.insert(g.begin(), g.end());
      }
      EXPECT_EQ(seen.size(), n);
      EXPECT_LE(hi - lo, 1u);
    }
  }
  EXPECT_FALSE(Partition::RandomBalanced(3, 4, rng).ok());
}

TEST(SampleNoiseTest, SingleOutputForcesOneGroup) {
  std::mt19937_64 rng(2);
  ASSERT_OK_AND_ASSIGN(NoiseSecret s, SampleNoise(Dims({3, 4, 1}), 0, rng, {}));
  EXPECT_EQ(s.partition.num_groups(), 1u);
  EXPECT_EQ(s.partition.group(0), std::vector<size_t>{0});
  EXPECT_FALSE(SampleNoise(Dims({3, 4, 1}), 2, rng, {}).ok());
}

TEST(SampleNoiseTest, SeedReplay) {
  const LayerDims d = Dims({4, 5, 3, 6});
  std::mt19937_64 a(9), b(9), c(10);
  ASSERT_OK_AND_ASSIGN(NoiseSecret sa, SampleNoise(d, 3, a, {}));
  ASSERT_OK_AND_ASSIGN(NoiseSecret sb, SampleNoise(d, 3, b, {}));
  ASSERT_OK_AND_ASSIGN(NoiseSecret sc, SampleNoise(d, 3, c, {}));
  EXPECT_EQ(sa.r_hidden, sb.r_hidden);
  EXPECT_EQ(sa.r_add, sb.r_add);
  EXPECT_EQ(sa.partition, sb.partition);
  EXPECT_EQ(sa.gamma_groups, sb.gamma_groups);
  EXPECT_NE(sa.r_add, sc.r_add);
}

TEST(SampleNoiseTest, InvariantsHold) {
  const LayerDims d = Dims({4, 6, 5, 8});
  NoiseConfig cfg;
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    ASSERT_OK_AND_ASSIGN(NoiseSecret s, SampleNoise(d, 1 + t % 8, rng, cfg));
    for (const Vector& r : s.r_hidden) {
      for (double v : r) {
        EXPECT_GE(v, cfg.r_min);
        EXPECT_LE(v, cfg.r_max);
      }
    }
    Vector sorted = s.r_add;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 1; i < sorted.size(); ++i) {
      EXPECT_GE(sorted[i] - sorted[i - 1], cfg.delta_min);
    }
    double upsilon = 0.0;
    for (size_t i = 0; i < 8; ++i) {
      const double gamma = s.gamma_groups[s.partition.group_of(i)];
      EXPECT_EQ(s.gamma_full[i], gamma);
      EXPECT_GE(std::abs(gamma), cfg.gamma_min);
      EXPECT_LE(std::abs(gamma), cfg.gamma_max);
      EXPECT_EQ(s.r_combined[i], gamma * s.r_add[i]);
      upsilon += s.r_combined[i] * s.r_combined[i];
      for (size_t j = 0; j < 5; ++j) {
        EXPECT_EQ(s.r_add_matrix(i, j), gamma * s.r_add[i]);
      }
    }
    EXPECT_NEAR(s.upsilon, upsilon, 1e-12 * upsilon);
    // R^(2)_ij * r^(1)_j = r^(2)_i.
    for (size_t i = 0; i < 5; ++i) {
      for (size_t j = 0; j < 6; ++j) {
        EXPECT_NEAR(s.r_mul[1](i, j) * s.r_hidden[0][j], s.r_hidden[1][i],
                    1e-14 * s.r_hidden[1][i]);
      }
    }
  }
}

TEST(SampleNoiseTest, FreshEveryRound) {
  const LayerDims d = Dims({3, 4, 5});
  std::mt19937_64 rng(4);
  std::set<Vector> seen;
  for (int round = 0; round < 100; ++round) {
    ASSERT_OK_AND_ASSIGN(NoiseSecret s, SampleNoise(d, 0, rng, {}, round));
    seen.insert(s.r_add);
  }
  EXPECT_EQ(seen.size(), 100u);
}

TEST(BuildSecretTest, RejectsInvalidNoise) {
  const LayerDims d = Dims({1, 2, 2});
  const Partition p = Partition::Singletons(2);
  EXPECT_FALSE(BuildSecret(d, {Vector{1, 0}}, Vector{0.1, 0.2}, p, Vector{1, 1}).ok());
  EXPECT_FALSE(BuildSecret(d, {Vector{1, -2}}, Vector{0.1, 0.2}, p, Vector{1, 1}).ok());
  EXPECT_FALSE(BuildSecret(d, {Vector{1, 2}}, Vector{0.1, 0.1}, p, Vector{1, 1}).ok());
  EXPECT_FALSE(BuildSecret(d, {Vector{1, 2}}, Vector{0.1, 0.2}, p, Vector{1}).ok());
  EXPECT_TRUE(BuildSecret(d, {Vector{1, 2}}, Vector{0.1, 0.2}, p, Vector{1, 1}).ok());
}

TEST(NoiseConfigTest, Validation) {
  NoiseConfig c;
  EXPECT_OK(c.Validate());
  c.r_min = 0.0;
  EXPECT_FALSE(c.Validate().ok());
  c = NoiseConfig{};
  c.gamma_min = 5;
  c.gamma_max = 1;
  EXPECT_FALSE(c.Validate().ok());
}

TEST(PerturbTest, TinyNetByHand) {
  ASSERT_OK_AND_ASSIGN(PerturbedModel pm, Perturb(TinyNet(), TinySecret()));
  EXPECT_EQ(pm.layers[0], Matrix::FromRows({{8}}));
  EXPECT_EQ(pm.layers[1], Matrix::FromRows({{1.75}}));
  EXPECT_EQ(pm.r_add, Vector{0.5});
}

TEST(PerturbTest, IdentityNoiseLeavesWeights) {
  std::mt19937_64 rng(5);
  MlpParams w = RandomParams({4, 5, 3}, rng);
  ASSERT_OK_AND_ASSIGN(PerturbedModel pm, Perturb(w, IdentitySecret(Dims({4, 5, 3}))));
  EXPECT_EQ(pm.layers, w.layers);
}

TEST(PerturbTest, UnperturbInverts) {
  std::mt19937_64 rng(6);
  const LayerDims d = Dims({5, 7, 6, 4});
  for (int t = 0; t < 30; ++t) {
    MlpParams w = RandomParams({5, 7, 6, 4}, rng);
    ASSERT_OK_AND_ASSIGN(NoiseSecret s, SampleNoise(d, 0, rng, {}));
    ASSERT_OK_AND_ASSIGN(PerturbedModel pm, Perturb(w, s));
    ASSERT_OK_AND_ASSIGN(MlpParams back, Unperturb(pm.layers, s));
    for (size_t l = 0; l + 1 < w.layers.size(); ++l) {
      EXPECT_LE(RelErr(back.layers[l], w.layers[l]), 1e-12);
    }
    // The output layer subtracts the additive term back out, which costs
    // digits in proportion to |R^(a)| / |R^(L) o W^(L)|.
    EXPECT_LE(RelErr(back.layers.back(), w.layers.back()), 1e-10);
  }
  ASSERT_OK_AND_ASSIGN(PerturbedModel pm, Perturb(TinyNet(), TinySecret()));
  ASSERT_OK_AND_ASSIGN(MlpParams back, Unperturb(pm.layers, TinySecret()));
  EXPECT_EQ(back, TinyNet());
}

TEST(PerturbTest, ShapeMismatch) {
  std::mt19937_64 rng(7);
  EXPECT_FALSE(Perturb(RandomParams({4, 5, 3}, rng), IdentitySecret(Dims({4, 5, 2}))).ok());
}

Aggregate SingleClientAggregate(const PerturbedModel& pm,
                                const std::vector<Sample>& shard,
                                const NoiseSecret& s) {
  ClientUpdate u = *LocalUpdate(pm, shard, 0);
  std::vector<ClientUpdate> ups = {u};
  std::vector<size_t> widths = {pm.layers.front().cols()};
  for (const Matrix& m : pm.layers) widths.push_back(m.rows());
  return *AggregateUpdates(ups, s.round_id, Dims(widths), s.partition.num_groups());
}

TEST(RecoverGradientTest, IdentityNoiseReturnsAggregateUnchanged) {
  std::mt19937_64 rng(8);
  const NoiseSecret s = IdentitySecret(Dims({3, 4, 2}));
  Aggregate agg;
  for (auto [r, c] : {std::pair{4, 3}, std::pair{2, 4}}) {
    AggregatedLayer layer{testing::RandomMatrix(r, c, rng),
                          {testing::RandomMatrix(r, c, rng)},
                          testing::RandomMatrix(r, c, rng)};
    agg.layers.push_back(layer);
  }
  ASSERT_OK_AND_ASSIGN(GradientSet g, RecoverGradient(agg, s));
  EXPECT_EQ(g.layers[0], agg.layers[0].g_hat);
  EXPECT_EQ(g.layers[1], agg.layers[1].g_hat);
}

TEST(RecoverGradientTest, TinyNetMatchesPlainBackprop) {
  const NoiseSecret s = TinySecret();
  ASSERT_OK_AND_ASSIGN(PerturbedModel pm, Perturb(TinyNet(), s));
  std::vector<Sample> shard = {{Vector{1}, Vector{0}}};
  ASSERT_OK_AND_ASSIGN(GradientSet g, RecoverGradient(SingleClientAggregate(pm, shard, s), s));
  EXPECT_NEAR(g.layers[1](0, 0), 12.0, 12.0 * 1e-9);
  EXPECT_NEAR(g.layers[0](0, 0), 18.0, 18.0 * 1e-9);
}

TEST(RecoverGradientTest, ThreeUnequalClientsMatchWeightedPlainGradient) {
  std::mt19937_64 rng(9);
  const std::vector<size_t> dims = {5, 8, 6, 4};
  for (int t = 0; t < 20; ++t) {
    MlpParams w = RandomParams(dims, rng);
    ASSERT_OK_AND_ASSIGN(NoiseSecret s, SampleNoise(Dims(dims), 0, rng, NarrowNoise(), t));
    ASSERT_OK_AND_ASSIGN(PerturbedModel pm, Perturb(w, s));
    std::vector<ClientUpdate> ups;
    std::vector<WeightedGradient> plain;
    for (uint32_t k = 0; k < 3; ++k) {
      auto shard = RandomSamples(1 + 2 * k, 5, 4, rng);
      ups.push_back(*LocalUpdate(pm, shard, k));
      plain.push_back({*LocalGradientPlain(w, shard), shard.size()});
    }
    ASSERT_OK_AND_ASSIGN(Aggregate agg, AggregateUpdates(ups, t, Dims(dims), s.partition.num_groups()));
    ASSERT_OK_AND_ASSIGN(GradientSet rec, RecoverGradient(agg, s));
    ASSERT_OK_AND_ASSIGN(GradientSet expect, WeightedAverage(plain));
    EXPECT_LE(RelErr(rec, expect), 1e-9) << "instance " << t;
  }
}

TEST(RecoverGradientTest, RoundMismatchIsProtocolError) {
  const NoiseSecret s = TinySecret();
  ASSERT_OK_AND_ASSIGN(PerturbedModel pm, Perturb(TinyNet(), s));
  std::vector<Sample> shard = {{Vector{1}, Vector{0}}};
  Aggregate agg = SingleClientAggregate(pm, shard, s);
  agg.round_id = 7;
  absl::StatusOr<GradientSet> g = RecoverGradient(agg, s);
  ASSERT_FALSE(g.ok());
  EXPECT_EQ(g.status().code(), absl::StatusCode::kFailedPrecondition);
}

}  // namespace
}  // namespace mpfl
