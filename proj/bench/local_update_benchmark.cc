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

// Serial reference vs OpenMP-parallel client upload and plain local gradient.

#include <random>
#include <vector>

#include "benchmark/benchmark.h"
#include "mpfl/client.h"
#include "mpfl/model.h"
#include "mpfl/perturbation.h"

namespace {

struct Fixture {
  mpfl::PerturbedModel pm;
  mpfl::MlpParams w;
  std::vector<mpfl::Sample> shard;
};

Fixture MakeFixture(size_t samples) {
  std::mt19937_64 rng(7);
  const mpfl::LayerDims dims = *mpfl::LayerDims::Create({20, 64, 32, 10});
  Fixture f;
  f.w = mpfl::InitParams(dims, rng, 0.1);
  mpfl::NoiseSecret secret = *mpfl::SampleNoise(dims, 0, rng, {});
  f.pm = *mpfl::Perturb(f.w, secret);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (size_t i = 0; i < samples; ++i) {
    mpfl::Sample s{mpfl::Vector(20), mpfl::Vector(10)};
    for (double& v : s.x) v = normal(rng);
    for (double& v : s.target) v = normal(rng);
    f.shard.push_back(std::move(s));
  }
  return f;
}

void BM_LocalUpdate(benchmark::State& state, mpfl::Execution exec) {
  const Fixture f = MakeFixture(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(mpfl::LocalUpdate(f.pm, f.shard, 0, exec));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LocalGradientPlain(benchmark::State& state, mpfl::Execution exec) {
  const Fixture f = MakeFixture(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(mpfl::LocalGradientPlain(f.w, f.shard, exec));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK_CAPTURE(BM_LocalUpdate, serial, mpfl::Execution::kSerial)
    ->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(BM_LocalUpdate, parallel, mpfl::Execution::kParallel)
    ->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(BM_LocalGradientPlain, serial, mpfl::Execution::kSerial)
    ->Arg(512);
BENCHMARK_CAPTURE(BM_LocalGradientPlain, parallel, mpfl::Execution::kParallel)
    ->Arg(512);

}  // namespace

BENCHMARK_MAIN();
