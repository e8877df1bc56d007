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

#include "mpfl/transport.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "absl/strings/str_cat.h"
#include "mpfl/status_macros.h"

namespace mpfl {

absl::Status Connection::Send(const Message& msg) {
  MPFL_ASSIGN_OR_RETURN(std::string frame, EncodeFrame(msg, max_frame_bytes_));
  return SendFrame(std::move(frame));
}

absl::StatusOr<Message> Connection::Receive(Millis timeout) {
  MPFL_ASSIGN_OR_RETURN(std::string frame, ReceiveFrame(timeout));
  return DecodeFrame(frame, max_frame_bytes_);
}

namespace {

// One direction of an in-process pipe.
struct Channel {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> frames;
  bool closed = false;
};

class InProcConnection : public Connection {
 public:
  InProcConnection(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out,
                   size_t max_frame_bytes)
      : Connection(max_frame_bytes), in_(std::move(in)), out_(std::move(out)) {}
  ~InProcConnection() override { Close(); }

  absl::Status SendFrame(std::string frame) override {
    MPFL_RETURN_IF_ERROR(ParseFrameHeader(frame, max_frame_bytes()).status());
    std::lock_guard<std::mutex> lock(out_->mu);
    if (out_->closed) return absl::UnavailableError("peer closed the pipe");
    out_->frames.push_back(std::move(frame));
    out_->cv.notify_one();
    return absl::OkStatus();
  }

  absl::StatusOr<std::string> ReceiveFrame(Millis timeout) override {
    std::unique_lock<std::mutex> lock(in_->mu);
    const bool ready = in_->cv.wait_for(lock, timeout, [&] {
      return !in_->frames.empty() || in_->closed;
    });
    if (!ready) return absl::DeadlineExceededError("receive timed out");
    if (in_->frames.empty()) return absl::UnavailableError("peer closed the pipe");
    std::string frame = std::move(in_->frames.front());
    in_->frames.pop_front();
    return frame;
  }

  void Close() override {
    for (Channel* c : {in_.get(), out_.get()}) {
      std::lock_guard<std::mutex> lock(c->mu);
      c->closed = true;
      c->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<Channel> in_;
  std::shared_ptr<Channel> out_;
};

absl::Status Errno(const char* what) {
  return absl::UnavailableError(absl::StrCat(what, ": ", std::strerror(errno)));
}

class TcpConnection : public Connection {
 public:
  TcpConnection(int fd, size_t max_frame_bytes)
      : Connection(max_frame_bytes), fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpConnection() override { Close(); }

  absl::Status SendFrame(std::string frame) override {
    if (fd_ < 0) return absl::UnavailableError("connection closed");
    size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n =
          ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return Errno("send");
      }
      sent += static_cast<size_t>(n);
    }
    return absl::OkStatus();
  }

  absl::StatusOr<std::string> ReceiveFrame(Millis timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::string header(kFrameHeaderBytes, '\0');
    MPFL_RETURN_IF_ERROR(ReadExactly(header.data(), header.size(), deadline));
    MPFL_ASSIGN_OR_RETURN(size_t n, ParseFrameHeader(header, max_frame_bytes()));
    std::string frame = header;
    frame.resize(kFrameHeaderBytes + n);
    MPFL_RETURN_IF_ERROR(
        ReadExactly(frame.data() + kFrameHeaderBytes, n, deadline));
    return frame;
  }

  void Close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  absl::Status ReadExactly(char* buf, size_t len,
                           std::chrono::steady_clock::time_point deadline) {
    size_t got = 0;
    while (got < len) {
      if (fd_ < 0) return absl::UnavailableError("connection closed");
      const auto left = std::chrono::duration_cast<Millis>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return absl::DeadlineExceededError("receive timed out");
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        return Errno("poll");
      }
      if (ready == 0) return absl::DeadlineExceededError("receive timed out");
      const ssize_t n = ::recv(fd_, buf + got, len - got, 0);
      if (n == 0) {
        return absl::UnavailableError("peer closed the connection");
      }
      if (n < 0) {
        if (errno == EINTR) continue;
        return Errno("recv");
      }
      got += static_cast<size_t>(n);
    }
    return absl::OkStatus();
  }

  int fd_;
};

absl::StatusOr<sockaddr_in> Resolve(const std::string& host, uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    return absl::InvalidArgumentError(absl::StrCat("cannot resolve ", host));
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

std::pair<std::unique_ptr<Connection>, std::unique_ptr<Connection>>
MakeInProcPair(size_t max_frame_bytes) {
  auto a_to_b = std::make_shared<Channel>();
  auto b_to_a = std::make_shared<Channel>();
  return {std::make_unique<InProcConnection>(b_to_a, a_to_b, max_frame_bytes),
          std::make_unique<InProcConnection>(a_to_b, b_to_a, max_frame_bytes)};
}

absl::StatusOr<std::unique_ptr<TcpListener>> TcpListener::Listen(
    const std::string& host, uint16_t port, size_t max_frame_bytes) {
  MPFL_ASSIGN_OR_RETURN(sockaddr_in addr, Resolve(host, port));
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return Errno("socket");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    absl::Status s = Errno("bind");
    ::close(fd);
    return s;
  }
  if (::listen(fd, 64) < 0) {
    absl::Status s = Errno("listen");
    ::close(fd);
    return s;
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return std::unique_ptr<TcpListener>(
      new TcpListener(fd, ntohs(addr.sin_port), max_frame_bytes));
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

absl::StatusOr<std::unique_ptr<Connection>> TcpListener::Accept(Millis timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  while (true) {
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) return Errno("poll");
    if (ready == 0) return absl::DeadlineExceededError("accept timed out");
    break;
  }
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) return Errno("accept");
  return std::unique_ptr<Connection>(new TcpConnection(fd, max_frame_bytes_));
}

absl::StatusOr<std::unique_ptr<Connection>> TcpConnect(const std::string& host,
                                                       uint16_t port,
                                                       Millis timeout,
                                                       size_t max_frame_bytes) {
  MPFL_ASSIGN_OR_RETURN(sockaddr_in addr, Resolve(host, port));
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return Errno("socket");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
      return std::unique_ptr<Connection>(new TcpConnection(fd, max_frame_bytes));
    }
    const int err = errno;
    ::close(fd);
    if (err != ECONNREFUSED && err != EINTR) {
      errno = err;
      return Errno("connect");
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      return absl::DeadlineExceededError(
          absl::StrCat("could not connect to ", host, ":", port));
    }
    std::this_thread::sleep_for(Millis(50));
  }
}

}  // namespace mpfl
