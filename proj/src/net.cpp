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
#include "benchkit/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>

namespace benchkit::net {

namespace {

std::string errno_text(int err) { return std::strerror(err); }

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host.empty() || ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    throw NetError(NetError::Kind::Resolve, fmt::format("cannot resolve host '{}'", host));
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

std::string Endpoint::to_string() const { return fmt::format("{}:{}", host, port); }

Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon + 1 >= text.size())
    throw std::invalid_argument(fmt::format("expected host:port, got '{}'", text));
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  if (ep.host.empty()) ep.host = "127.0.0.1";
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(std::string(text.substr(colon + 1)), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("invalid port in '{}'", text));
  }
  if (port > 65535) throw std::invalid_argument(fmt::format("port out of range in '{}'", text));
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

void Fd::reset(int fd) noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

Fd dial(const Endpoint& ep, std::chrono::milliseconds timeout) {
  const sockaddr_in addr = resolve(ep);
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!fd) throw NetError(NetError::Kind::Io, "socket: " + errno_text(errno));

  int rc = ::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  if (rc != 0 && errno != EINPROGRESS) {
    const int err = errno;
    throw NetError(err == ECONNREFUSED ? NetError::Kind::Refused : NetError::Kind::Io,
                   fmt::format("connect {}: {}", ep.to_string(), errno_text(err)));
  }
  if (rc != 0) {
    pollfd pfd{fd.get(), POLLOUT, 0};
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc == 0) throw NetError(NetError::Kind::Timeout, fmt::format("connect {}: timed out", ep.to_string()));
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0)
      throw NetError(err == ECONNREFUSED ? NetError::Kind::Refused : NetError::Kind::Io,
                     fmt::format("connect {}: {}", ep.to_string(), errno_text(err)));
  }
  const int flags = ::fcntl(fd.get(), F_GETFL);
  ::fcntl(fd.get(), F_SETFL, flags & ~O_NONBLOCK);
  set_nodelay(fd.get());
  return fd;
}

Fd listen_on(const Endpoint& ep, int backlog) {
  const sockaddr_in addr = resolve(ep);
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd) throw NetError(NetError::Kind::Io, "socket: " + errno_text(errno));
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
    throw NetError(NetError::Kind::Bind, fmt::format("bind {}: {}", ep.to_string(), errno_text(errno)));
  if (::listen(fd.get(), backlog) != 0)
    throw NetError(NetError::Kind::Bind, fmt::format("listen {}: {}", ep.to_string(), errno_text(errno)));
  return fd;
}

Fd accept_client(const Fd& listener) {
  Fd fd(::accept4(listener.get(), nullptr, nullptr, SOCK_CLOEXEC));
  if (fd) set_nodelay(fd.get());
  return fd;
}

std::uint16_t local_port(const Fd& fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
    throw NetError(NetError::Kind::Io, "getsockname: " + errno_text(errno));
  return ntohs(addr.sin_port);
}

void send_all(int fd, std::span<const std::uint8_t> data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw NetError(NetError::Kind::Io, "send: " + errno_text(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::size_t recv_some(int fd, std::span<std::uint8_t> buf) {
  while (true) {
    const ssize_t n = ::recv(fd, buf.data(), buf.size(), 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    throw NetError(NetError::Kind::Io, "recv: " + errno_text(errno));
  }
}

Readiness wait_readable(int fd, std::chrono::nanoseconds timeout, int wake_fd) {
  pollfd pfds[2] = {{fd, POLLIN, 0}, {wake_fd, POLLIN, 0}};
  const nfds_t count = wake_fd >= 0 ? 2 : 1;
  if (timeout.count() < 0) timeout = std::chrono::nanoseconds(0);
  timespec ts{};
  ts.tv_sec = static_cast<time_t>(timeout.count() / 1'000'000'000);
  ts.tv_nsec = static_cast<long>(timeout.count() % 1'000'000'000);
  while (true) {
    const int rc = ::ppoll(pfds, count, &ts, nullptr);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw NetError(NetError::Kind::Io, "ppoll: " + errno_text(errno));
    }
    if (rc == 0) return Readiness::Timeout;
    if (count == 2 && (pfds[1].revents & POLLIN)) return Readiness::Woken;
    return Readiness::Readable;
  }
}

WakeEvent::WakeEvent() : fd_(::eventfd(0, EFD_CLOEXEC | EFD_NONBLOCK)) {
  if (!fd_) throw NetError(NetError::Kind::Io, "eventfd: " + errno_text(errno));
}

void WakeEvent::signal() noexcept {
  const std::uint64_t one = 1;
  [[maybe_unused]] auto rc = ::write(fd_.get(), &one, sizeof(one));
}

bool WakeEvent::signaled() const {
  pollfd pfd{fd_.get(), POLLIN, 0};
  return ::poll(&pfd, 1, 0) > 0;
}

}  // namespace benchkit::net
