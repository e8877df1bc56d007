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

#include <random>

#include "gtest/gtest.h"
#include "mpfl/client.h"
#include "test_util.h"

namespace mpfl {
namespace {

using ::mpfl::testing::RandomParams;
using ::mpfl::testing::RandomSamples;
using ::mpfl::testing::RelErr;

LayerDims Dims(std::vector<size_t> d) { return *LayerDims::Create(std::move(d)); }

ClientUpdate ConstantUpdate(uint32_t id, uint64_t round, uint64_t count,
                            double value, size_t groups) {
  ClientUpdate u;
  u.client_id = id;
  u.round_id = round;
  u.sample_count = count;
  for (auto [r, c] : {std::pair<size_t, size_t>{2, 1}, {1, 2}}) {
    LayerUpdate layer;
    layer.g_hat = Matrix(r, c, value);
    if (groups > 0) {
      layer.sigma_tilde.assign(groups, Matrix(r, c, 2 * value));
      layer.beta = Matrix(r, c, 3 * value);
    }
    u.layers.push_back(layer);
  }
  return u;
}

TEST(AggregateUpdatesTest, WeightsBySampleCount) {
  std::vector<ClientUpdate> ups = {ConstantUpdate(0, 4, 1, 4.0, 2),
                                   ConstantUpdate(1, 4, 3, 8.0, 2)};
  ASSERT_OK_AND_ASSIGN(Aggregate agg, AggregateUpdates(ups, 4, Dims({1, 2, 1}), 2));
  EXPECT_EQ(agg.round_id, 4u);
  for (const AggregatedLayer& layer : agg.layers) {
    for (double v : layer.g_hat.data()) EXPECT_DOUBLE_EQ(v, 7.0);
    for (const Matrix& s : layer.sigma) {
      for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 14.0);
    }
    for (double v : layer.beta.data()) EXPECT_DOUBLE_EQ(v, 21.0);
  }
}

TEST(AggregateUpdatesTest, RejectsInconsistentUpdates) {
  const LayerDims d = Dims({1, 2, 1});
  std::vector<ClientUpdate> mixed = {ConstantUpdate(0, 4, 1, 1, 1),
                                     ConstantUpdate(1, 5, 1, 1, 1)};
  auto r = AggregateUpdates(mixed, 4, d, 1);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.status().code(), absl::StatusCode::kFailedPrecondition);

  std::vector<ClientUpdate> groups = {ConstantUpdate(0, 4, 1, 1, 2)};
  EXPECT_FALSE(AggregateUpdates(groups, 4, d, 3).ok());
  std::vector<ClientUpdate> empty_shards = {ConstantUpdate(0, 4, 0, 1, 1)};
  EXPECT_FALSE(AggregateUpdates(empty_shards, 4, d, 1).ok());
  EXPECT_FALSE(AggregateUpdates({}, 4, d, 1).ok());
  std::vector<ClientUpdate> shape = {ConstantUpdate(0, 4, 1, 1, 1)};
  EXPECT_FALSE(AggregateUpdates(shape, 4, Dims({1, 3, 1}), 1).ok());
}

TEST(RoundStateTest, RejectsProtocolViolations) {
  std::mt19937_64 rng(1);
  MlpParams w = RandomParams({1, 2, 1}, rng);
  ASSERT_OK_AND_ASSIGN(RoundState st,
                       RoundState::BeginPerturbed(w, 9, 0, {}, rng, {0, 1}));
  EXPECT_EQ(st.round_id(), 9u);
  EXPECT_EQ(st.Receive(ConstantUpdate(0, 8, 1, 1, 1)).code(),
            absl::StatusCode::kFailedPrecondition);
  EXPECT_EQ(st.Receive(ConstantUpdate(7, 9, 1, 1, 1)).code(),
            absl::StatusCode::kFailedPrecondition);
  EXPECT_OK(st.Receive(ConstantUpdate(0, 9, 1, 1, 1)));
  EXPECT_EQ(st.Receive(ConstantUpdate(0, 9, 1, 1, 1)).code(),
            absl::StatusCode::kFailedPrecondition);
  EXPECT_FALSE(st.complete());
  auto early = st.RecoverAggregate();
  ASSERT_FALSE(early.ok());
  EXPECT_EQ(early.status().code(), absl::StatusCode::kFailedPrecondition);
  EXPECT_FALSE(st.secret_consumed());
}

TEST(RoundStateTest, RejectsEmptyClientSetAndBadShapes) {
  std::mt19937_64 rng(2);
  MlpParams w = RandomParams({2, 3, 2}, rng);
  EXPECT_FALSE(RoundState::BeginPerturbed(w, 0, 0, {}, rng, {}).ok());
  EXPECT_FALSE(RoundState::BeginPlain(w, 0, {}).ok());
  MlpParams one_layer{{w.layers[0]}};
  EXPECT_FALSE(RoundState::BeginPlain(one_layer, 0, {0}).ok());
  MlpParams broken{{w.layers[0], Matrix(2, 5)}};
  EXPECT_FALSE(RoundState::BeginPerturbed(broken, 0, 0, {}, rng, {0}).ok());
}

TEST(RoundStateTest, SecretIsConsumedByRecovery) {
  std::mt19937_64 rng(3);
  MlpParams w = RandomParams({3, 4, 2}, rng);
  auto shard = RandomSamples(3, 3, 2, rng);
  ASSERT_OK_AND_ASSIGN(RoundState st,
                       RoundState::BeginPerturbed(w, 0, 0, {}, rng, {0}));
  ASSERT_NE(st.secret_for_testing(), nullptr);
  EXPECT_NE(st.broadcast().layers, w.layers);
  ASSERT_OK_AND_ASSIGN(ClientUpdate u, LocalUpdate(st.broadcast(), shard, 0));
  ASSERT_OK(st.Receive(u));
  ASSERT_OK(st.RecoverAggregate().status());
  EXPECT_TRUE(st.secret_consumed());
  EXPECT_EQ(st.secret_for_testing(), nullptr);
  EXPECT_FALSE(st.RecoverAggregate().ok());
  EXPECT_FALSE(st.Receive(u).ok());
}

TEST(RoundStateTest, ZeroizeWipesEveryNoiseTerm) {
  std::mt19937_64 rng(4);
  ASSERT_OK_AND_ASSIGN(NoiseSecret s, SampleNoise(Dims({3, 4, 5, 2}), 0, rng, {}));
  ZeroizeSecret(s);
  for (const Vector& r : s.r_hidden) {
    for (double v : r) EXPECT_EQ(v, 0.0);
  }
  for (const Matrix& m : s.r_mul) {
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
  }
  for (double v : s.gamma_full) EXPECT_EQ(v, 0.0);
  for (double v : s.r_combined) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(s.upsilon, 0.0);
}

std::vector<std::vector<Sample>> Shards(std::mt19937_64& rng, size_t in,
                                        size_t out) {
  return {RandomSamples(2, in, out, rng), RandomSamples(5, in, out, rng),
          RandomSamples(1, in, out, rng)};
}

MlpParams ReferenceStep(const MlpParams& w,
                        const std::vector<std::vector<Sample>>& shards,
                        double eta) {
  std::vector<WeightedGradient> grads;
  for (const auto& shard : shards) {
    grads.push_back({*LocalGradientPlain(w, shard), shard.size()});
  }
  return *FedAvgStep(w, grads, eta);
}

TEST(RoundStateTest, PlainRoundIsFedAvg) {
  std::mt19937_64 rng(5);
  MlpParams w = RandomParams({4, 6, 3}, rng);
  auto shards = Shards(rng, 4, 3);
  ASSERT_OK_AND_ASSIGN(RoundState st, RoundState::BeginPlain(w, 2, {0, 1, 2}));
  EXPECT_EQ(st.mode(), Mode::kPlain);
  EXPECT_EQ(st.broadcast().layers, w.layers);
  for (uint32_t k = 0; k < 3; ++k) {
    ASSERT_OK(st.Receive(*LocalUpdatePlain(w, 2, shards[k], k)));
  }
  ASSERT_OK_AND_ASSIGN(MlpParams next, st.RecoverAndUpdate(w, 0.1));
  EXPECT_LE(RelErr(next, ReferenceStep(w, shards, 0.1)), 1e-14);
}

TEST(RoundStateTest, IdentityNoiseRoundIsFedAvg) {
  std::mt19937_64 rng(6);
  MlpParams w = RandomParams({4, 6, 5, 3}, rng);
  auto shards = Shards(rng, 4, 3);
  ASSERT_OK_AND_ASSIGN(RoundState st, RoundState::BeginWithSecret(
                                          w, IdentitySecret(Dims({4, 6, 5, 3})), {0, 1, 2}));
  for (uint32_t k = 0; k < 3; ++k) {
    ASSERT_OK(st.Receive(*LocalUpdate(st.broadcast(), shards[k], k)));
  }
  ASSERT_OK_AND_ASSIGN(MlpParams next, st.RecoverAndUpdate(w, 0.1));
  EXPECT_LE(RelErr(next, ReferenceStep(w, shards, 0.1)), 1e-14);
}

TEST(RoundStateTest, PerturbedRoundsTrackFedAvg) {
  std::mt19937_64 rng(7);
  NoiseConfig noise;
  noise.gamma_max = 10.0;
  MlpParams w = RandomParams({4, 6, 5, 3}, rng);
  MlpParams ref = w;
  auto shards = Shards(rng, 4, 3);
  for (uint64_t round = 0; round < 10; ++round) {
    ASSERT_OK_AND_ASSIGN(RoundState st, RoundState::BeginPerturbed(
                                            w, round, 2, noise, rng, {0, 1, 2}));
    // Arrival order must not matter.
    for (uint32_t k : {2u, 0u, 1u}) {
      ASSERT_OK(st.Receive(*LocalUpdate(st.broadcast(), shards[k], k)));
    }
    GradientSet applied;
    ASSERT_OK_AND_ASSIGN(w, st.RecoverAndUpdate(w, 0.05, &applied));
    std::vector<WeightedGradient> grads;
    for (const auto& shard : shards) {
      grads.push_back({*LocalGradientPlain(ref, shard), shard.size()});
    }
    ASSERT_OK_AND_ASSIGN(GradientSet expect, WeightedAverage(grads));
    EXPECT_LE(RelErr(applied, expect), 1e-9) << "round " << round;
    ref = *ApplyGradient(ref, expect, 0.05);
  }
  EXPECT_LE(RelErr(w, ref), 1e-9);
}

TEST(ModeTest, NamesRoundTrip) {
  for (Mode m : {Mode::kPlain, Mode::kPerturbed}) {
    ASSERT_OK_AND_ASSIGN(Mode back, ParseMode(ModeName(m)));
    EXPECT_EQ(back, m);
  }
  EXPECT_FALSE(ParseMode("noisy").ok());
}

}  // namespace
}  // namespace mpfl
