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

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "benchkit/net.hpp"
#include "benchkit/scenario.hpp"

namespace benchkit::proxy {

enum class Direction : std::uint8_t { ClientToBroker = 0, BrokerToClient = 1 };

std::string_view direction_name(Direction d);

struct ProxyOptions {
  net::Endpoint listen{"127.0.0.1", 0};
  net::Endpoint upstream;
  impair::Scenario scenario{"local", 0, 0, 0};
  impair::LossModel loss;
  std::uint64_t seed = 0;
  std::size_t read_size = 16 * 1024;
  std::chrono::milliseconds dial_timeout{2000};
  bool record_schedule = true;
};

/// One relayed chunk. Connections are numbered in accept order, chunks in
/// read order per direction.
struct ScheduleEntry {
  std::uint32_t connection = 0;
  Direction direction = Direction::ClientToBroker;
  std::uint32_t chunk = 0;
  impair::ChunkTiming timing;
  std::int64_t written_ns = 0;
};

struct ProxyStats {
  std::uint64_t connections = 0;
  std::uint64_t upstream_failures = 0;
  std::array<std::uint64_t, 2> chunks{};
  std::array<std::uint64_t, 2> bytes{};
  std::array<std::uint64_t, 2> penalties{};
};

class ProxyError : public std::runtime_error {
 public:
  enum class Kind { UpstreamUnreachable, Bind };
  ProxyError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// RNG seed for one direction of one connection. Depends only on the proxy
/// seed, the accept ordinal and the direction.
std::uint64_t connection_seed(std::uint64_t proxy_seed, std::uint32_t ordinal, Direction d);
/// Delay draws use connection_seed directly, loss draws this derived seed.
std::uint64_t loss_stream_seed(std::uint64_t connection_seed);

/// Userspace TCP relay that delays each direction of every connection
/// according to the scenario. Each accepted client is paired with its own
/// upstream connection; each direction runs on its own thread with its own
/// RNG and release schedule.
class Proxy {
 public:
  /// Binds and starts accepting. Probes the upstream first.
  static std::unique_ptr<Proxy> start(ProxyOptions opts);

  ~Proxy();
  Proxy(const Proxy&) = delete;
  Proxy& operator=(const Proxy&) = delete;

  net::Endpoint endpoint() const;
  const ProxyOptions& options() const noexcept { return opts_; }

  /// Stops accepting and tears down all relays. Idempotent.
  void shutdown();

  /// Relays whose both directions have not finished yet.
  std::size_t active_connections();
  /// Waits until every accepted connection has been fully relayed and closed.
  bool wait_idle(std::chrono::milliseconds timeout);

  ProxyStats stats() const;
  std::vector<ScheduleEntry> schedule_log() const;

 private:
  struct Connection;

  explicit Proxy(ProxyOptions opts, net::Fd listener);
  void accept_loop();
  void relay(Connection& conn, Direction dir);
  void reap(bool all);

  ProxyOptions opts_;
  net::Fd listener_;
  std::uint16_t port_ = 0;
  net::WakeEvent stop_;
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;

  std::mutex conns_mu_;
  std::list<std::unique_ptr<Connection>> conns_;
  std::uint32_t next_ordinal_ = 0;

  mutable std::mutex log_mu_;
  std::vector<ScheduleEntry> log_;

  std::atomic<std::uint64_t> connections_{0};
  std::atomic<std::uint64_t> upstream_failures_{0};
  std::array<std::atomic<std::uint64_t>, 2> chunks_{};
  std::array<std::atomic<std::uint64_t>, 2> bytes_{};
  std::array<std::atomic<std::uint64_t>, 2> penalties_{};
};

}  // namespace benchkit::proxy
