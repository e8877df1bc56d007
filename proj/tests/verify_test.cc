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

#include "gtest/gtest.h"
#include "test_util.h"

namespace mpfl {
namespace {

TEST(VerifyTest, InstancesAreDeterministic) {
  ASSERT_OK_AND_ASSIGN(VerifyInstance a, MakeInstance({4, 5, 3}, 11));
  ASSERT_OK_AND_ASSIGN(VerifyInstance b, MakeInstance({4, 5, 3}, 11));
  EXPECT_EQ(a.perturbed, b.perturbed);
  EXPECT_EQ(a.sample, b.sample);
}

TEST(VerifyTest, PerInstanceChecksAreTight) {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    ASSERT_OK_AND_ASSIGN(VerifyInstance inst, MakeInstance({5, 7, 6, 4}, seed));
    ASSERT_OK_AND_ASSIGN(ForwardErrors f, CheckForward(inst));
    EXPECT_LE(f.hidden, 1e-10);
    EXPECT_LE(f.output, 1e-9);
    ASSERT_OK_AND_ASSIGN(double gi, CheckGradientIdentity(inst));
    EXPECT_LE(gi, 1e-9);
    ASSERT_OK_AND_ASSIGN(double fd, CheckFiniteDifferences(inst));
    EXPECT_LE(fd, 1e-6);
    ASSERT_OK_AND_ASSIGN(StructureErrors s, CheckStructure(inst));
    EXPECT_LE(s.telescoping, 1e-12);
    EXPECT_LE(s.round_trip_hidden, 1e-12);
    EXPECT_LE(s.round_trip_output, 1e-10);
  }
}

TEST(VerifyTest, RecoveryWithModerateNoiseIsTight) {
  NoiseConfig narrow;
  narrow.gamma_max = 10.0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    ASSERT_OK_AND_ASSIGN(RecoveryErrors r, CheckRecovery({6, 9, 7, 5}, seed, 3, narrow));
    EXPECT_LE(r.recovery, 1e-9);
    EXPECT_LE(r.grouped_sigma, 1e-9);
    EXPECT_LE(r.recovery_in_ulps, 64);
  }
}

TEST(VerifyTest, RecoveryWithDefaultNoiseStaysAtTheRoundingFloor) {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    ASSERT_OK_AND_ASSIGN(RecoveryErrors r, CheckRecovery({6, 9, 7, 5}, seed, 3));
    EXPECT_LE(r.recovery_in_ulps, 64);
  }
}

TEST(VerifyTest, ReportListsEveryCheck) {
  VerifyOptions opts;
  opts.instances = 6;
  opts.noise.gamma_max = 10.0;
  VerifyReport report = RunVerification(opts);
  EXPECT_EQ(report.checks.size(), 10u);
  EXPECT_TRUE(report.passed()) << report.ToText();
  for (const CheckResult& c : report.checks) {
    EXPECT_EQ(c.instances, 6u) << c.name;
  }
  EXPECT_NE(report.ToText().find("recovery"), std::string::npos);
}

}  // namespace
}  // namespace mpfl
