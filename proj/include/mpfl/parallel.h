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

#ifndef MPFL_PARALLEL_H_
#define MPFL_PARALLEL_H_

#include <cstddef>
#include <cstdint>

namespace mpfl {

// kSerial is the reference path. kParallel spreads independent per-sample or
// per-trial work over OpenMP threads; every reduction afterwards still runs
// in index order, so both paths produce bit-identical results.
enum class Execution { kSerial, kParallel };

// Runs body(i) for i in [0, n). Body must only write to slot i of any shared
// output.
template <typename Body>
void ForEachIndex(size_t n, Execution exec, Body&& body) {
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
      body(static_cast<size_t>(i));
    }
  } else {
    for (size_t i = 0; i < n; ++i) body(i);
  }
}

}  // namespace mpfl

#endif  // MPFL_PARALLEL_H_
