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

// Framed, ordered, bidirectional connections. Two implementations share the
// frame codec: an in-process pipe (for deterministic simulation) and TCP.

#ifndef MPFL_TRANSPORT_H_
#define MPFL_TRANSPORT_H_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "mpfl/wire.h"

namespace mpfl {

using Millis = std::chrono::milliseconds;

class Connection {
 public:
  virtual ~Connection() = default;

  // Sends one complete frame (header included).
  virtual absl::Status SendFrame(std::string frame) = 0;
  // Blocks until one complete frame arrives. Returns kDeadlineExceeded on
  // timeout and kUnavailable once the peer has closed.
  virtual absl::StatusOr<std::string> ReceiveFrame(Millis timeout) = 0;
  virtual void Close() = 0;

  size_t max_frame_bytes() const { return max_frame_bytes_; }

  absl::Status Send(const Message& msg);
  absl::StatusOr<Message> Receive(Millis timeout);

 protected:
  explicit Connection(size_t max_frame_bytes)
      : max_frame_bytes_(max_frame_bytes) {}

 private:
  size_t max_frame_bytes_;
};

// Two connected in-process endpoints.
std::pair<std::unique_ptr<Connection>, std::unique_ptr<Connection>>
MakeInProcPair(size_t max_frame_bytes = kDefaultMaxFrameBytes);

class TcpListener {
 public:
  // Port 0 picks a free port; see port().
  static absl::StatusOr<std::unique_ptr<TcpListener>> Listen(
      const std::string& host, uint16_t port,
      size_t max_frame_bytes = kDefaultMaxFrameBytes);
  ~TcpListener();

  uint16_t port() const { return port_; }
  absl::StatusOr<std::unique_ptr<Connection>> Accept(Millis timeout);

 private:
  TcpListener(int fd, uint16_t port, size_t max_frame_bytes)
      : fd_(fd), port_(port), max_frame_bytes_(max_frame_bytes) {}
  int fd_;
  uint16_t port_;
  size_t max_frame_bytes_;
};

// Retries refused connections until `timeout` elapses.
absl::StatusOr<std::unique_ptr<Connection>> TcpConnect(
    const std::string& host, uint16_t port, Millis timeout,
    size_t max_frame_bytes = kDefaultMaxFrameBytes);

}  // namespace mpfl

#endif  // MPFL_TRANSPORT_H_
