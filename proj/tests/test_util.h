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

#ifndef MPFL_TESTS_TEST_UTIL_H_
#define MPFL_TESTS_TEST_UTIL_H_

#include <cmath>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "mpfl/model.h"
#include "mpfl/tensor.h"

#define ASSERT_OK(expr) ASSERT_TRUE((expr).ok()) << (expr)
#define EXPECT_OK(expr) EXPECT_TRUE((expr).ok()) << (expr)

#define ASSERT_OK_AND_ASSIGN(lhs, ...)                 \
  auto MPFL_TEST_CONCAT_(_sor_, __LINE__) = (__VA_ARGS__); \
  ASSERT_TRUE(MPFL_TEST_CONCAT_(_sor_, __LINE__).ok()) \
      << MPFL_TEST_CONCAT_(_sor_, __LINE__).status();  \
  lhs = std::move(MPFL_TEST_CONCAT_(_sor_, __LINE__)).value()
#define MPFL_TEST_CONCAT_INNER_(a, b) a##b
#define MPFL_TEST_CONCAT_(a, b) MPFL_TEST_CONCAT_INNER_(a, b)

namespace mpfl::testing {

inline Matrix RandomMatrix(size_t rows, size_t cols, std::mt19937_64& rng,
                           double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

inline Vector RandomVector(size_t n, std::mt19937_64& rng, double lo = -1.0,
                           double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline MlpParams RandomParams(const std::vector<size_t>& dims,
                              std::mt19937_64& rng, double scale = 1.0) {
  MlpParams p;
  for (size_t l = 1; l < dims.size(); ++l) {
    p.layers.push_back(RandomMatrix(dims[l], dims[l - 1], rng, -scale, scale));
  }
  return p;
}

inline std::vector<Sample> RandomSamples(size_t n, size_t in, size_t out,
                                         std::mt19937_64& rng) {
  std::vector<Sample> s;
  for (size_t i = 0; i < n; ++i) {
    s.push_back({RandomVector(in, rng), RandomVector(out, rng)});
  }
  return s;
}

// Independent max-norm relative error: max|a - b| / max|b|.
inline double RelErr(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den > 0.0 ? num / den : num;
}

inline double RelErr(const Matrix& a, const Matrix& b) {
  return RelErr(a.data(), b.data());
}

inline double RelErr(const MlpParams& a, const MlpParams& b) {
  double e = 0.0;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    e = std::max(e, RelErr(a.layers[l], b.layers[l]));
  }
  return e;
}

}  // namespace mpfl::testing

#endif  // MPFL_TESTS_TEST_UTIL_H_
