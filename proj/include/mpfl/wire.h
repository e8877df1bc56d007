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

// Wire format for the round protocol. A frame is a 4-byte big-endian payload
// length followed by that many bytes of canonical JSON encoding one Message.
// Keys are emitted in a fixed order and doubles in shortest round-trip form,
// so decode(encode(m)) == m bit for bit.

#ifndef MPFL_WIRE_H_
#define MPFL_WIRE_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/client.h"
#include "mpfl/perturbation.h"
#include "mpfl/server.h"

namespace mpfl {

inline constexpr uint32_t kProtocolVersion = 1;
inline constexpr size_t kDefaultMaxFrameBytes = size_t{64} << 20;
inline constexpr size_t kFrameHeaderBytes = 4;

struct HelloMsg {
  uint32_t client_id = 0;
  uint32_t proto_version = kProtocolVersion;
  friend bool operator==(const HelloMsg&, const HelloMsg&) = default;
};

struct BroadcastMsg {
  uint64_t round_id = 0;
  Mode mode = Mode::kPerturbed;
  PerturbedModel model;
  friend bool operator==(const BroadcastMsg&, const BroadcastMsg&) = default;
};

struct UpdateMsg {
  uint64_t round_id = 0;
  ClientUpdate update;
  friend bool operator==(const UpdateMsg&, const UpdateMsg&) = default;
};

struct RoundDoneMsg {
  uint64_t round_id = 0;
  friend bool operator==(const RoundDoneMsg&, const RoundDoneMsg&) = default;
};

struct AbortMsg {
  uint64_t round_id = 0;
  std::string reason;
  friend bool operator==(const AbortMsg&, const AbortMsg&) = default;
};

using Message =
    std::variant<HelloMsg, BroadcastMsg, UpdateMsg, RoundDoneMsg, AbortMsg>;

// Canonical JSON body of a message (no frame header).
std::string EncodeJson(const Message& msg);
absl::StatusOr<Message> DecodeJson(std::string_view json);

// Full frame: header + JSON body.
absl::StatusOr<std::string> EncodeFrame(const Message& msg,
                                        size_t max_frame_bytes = kDefaultMaxFrameBytes);
// `bytes` must hold exactly one complete frame.
absl::StatusOr<Message> DecodeFrame(std::string_view bytes,
                                    size_t max_frame_bytes = kDefaultMaxFrameBytes);

// Reads the declared payload length from a 4-byte header, rejecting lengths
// above the limit before anything is allocated.
absl::StatusOr<size_t> ParseFrameHeader(std::string_view header,
                                        size_t max_frame_bytes);

const char* MessageKind(const Message& msg);

}  // namespace mpfl

#endif  // MPFL_WIRE_H_
