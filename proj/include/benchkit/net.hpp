/*
 * Copyright 2026 The benchkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

/// Thin POSIX socket layer: RAII descriptors, blocking dial/listen with
/// timeouts, and a wakeup event used to interrupt poll loops.
namespace benchkit::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const;
  bool operator==(const Endpoint&) const = default;
};

/// Parses "host:port". Throws std::invalid_argument.
Endpoint parse_endpoint(std::string_view text);

class NetError : public std::runtime_error {
 public:
  enum class Kind { Timeout, Refused, Bind, Io, Resolve };
  NetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) reset(o.release());
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset(int fd = -1) noexcept;

 private:
  int fd_ = -1;
};

/// Connects with a deadline; the returned socket is blocking with TCP_NODELAY.
Fd dial(const Endpoint& ep, std::chrono::milliseconds timeout);

/// Bound, listening socket. Port 0 picks an ephemeral port.
Fd listen_on(const Endpoint& ep, int backlog = 256);
std::uint16_t local_port(const Fd& fd);
/// accept4 with TCP_NODELAY set; an invalid Fd when nothing could be accepted.
Fd accept_client(const Fd& listener);

/// Blocks until every byte is written. Throws NetError(Io).
void send_all(int fd, std::span<const std::uint8_t> data);

/// Returns bytes read, 0 on orderly EOF. Throws NetError(Io) on reset.
std::size_t recv_some(int fd, std::span<std::uint8_t> buf);

/// Waits for readability; false on timeout. Wakes early when \p wake fires.
enum class Readiness { Readable, Timeout, Woken };
Readiness wait_readable(int fd, std::chrono::nanoseconds timeout, int wake_fd = -1);

/// Level-triggered eventfd: once signal() is called it stays readable.
class WakeEvent {
 public:
  WakeEvent();
  void signal() noexcept;
  bool signaled() const;
  int fd() const noexcept { return fd_.get(); }

 private:
  Fd fd_;
};

}  // namespace benchkit::net
