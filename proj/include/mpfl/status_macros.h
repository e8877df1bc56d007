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

#ifndef MPFL_STATUS_MACROS_H_
#define MPFL_STATUS_MACROS_H_

#include "absl/status/status.h"
#include "absl/status/statusor.h"

#define MPFL_CONCAT_INNER_(a, b) a##b
#define MPFL_CONCAT_(a, b) MPFL_CONCAT_INNER_(a, b)

#define MPFL_RETURN_IF_ERROR(expr)                \
  do {                                            \
    ::absl::Status _mpfl_status = (expr);         \
    if (!_mpfl_status.ok()) return _mpfl_status;  \
  } while (0)

#define MPFL_ASSIGN_OR_RETURN_IMPL_(tmp, lhs, rexpr) \
  auto tmp = (rexpr);                                \
  if (!tmp.ok()) return tmp.status();                \
  lhs = std::move(tmp).value()

#define MPFL_ASSIGN_OR_RETURN(lhs, rexpr) \
  MPFL_ASSIGN_OR_RETURN_IMPL_(MPFL_CONCAT_(_mpfl_statusor_, __LINE__), lhs, rexpr)

#endif  // MPFL_STATUS_MACROS_H_
