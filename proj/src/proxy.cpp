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
#include "benchkit/proxy.hpp"

#include <sys/prctl.h>
#include <sys/socket.h>

#include <deque>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace benchkit::proxy {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::size_t idx(Direction d) { return static_cast<std::size_t>(d); }

}  // namespace

std::string_view direction_name(Direction d) {
  return d == Direction::ClientToBroker ? "client_to_broker" : "broker_to_client";
}

std::uint64_t connection_seed(std::uint64_t proxy_seed, std::uint32_t ordinal, Direction d) {
  return splitmix64(splitmix64(proxy_seed ^ splitmix64(ordinal)) + static_cast<std::uint64_t>(d) + 1);
}

std::uint64_t loss_stream_seed(std::uint64_t connection_seed) {
  return splitmix64(connection_seed ^ 0x6C6F7373ULL);
}

struct Proxy::Connection {
  std::uint32_t ordinal = 0;
  net::Fd client;
  net::Fd upstream;
  std::atomic<int> finished{0};
  std::thread to_broker;
  std::thread to_client;

  void join() {
    if (to_broker.joinable()) to_broker.join();
    if (to_client.joinable()) to_client.join();
  }
};

std::unique_ptr<Proxy> Proxy::start(ProxyOptions opts) {
  impair::validate(opts.scenario);
  if (opts.loss.segment_size == 0) throw std::invalid_argument("segment_size must be > 0");
  if (opts.read_size == 0) throw std::invalid_argument("read_size must be > 0");

  try {
    net::dial(opts.upstream, opts.dial_timeout);
  } catch (const net::NetError& e) {
    throw ProxyError(ProxyError::Kind::UpstreamUnreachable,
                     fmt::format("upstream {} unreachable: {}", opts.upstream.to_string(), e.what()));
  }
  net::Fd listener;
  try {
    listener = net::listen_on(opts.listen);
  } catch (const net::NetError& e) {
    throw ProxyError(ProxyError::Kind::Bind, e.what());
  }
  return std::unique_ptr<Proxy>(new Proxy(std::move(opts), std::move(listener)));
}

Proxy::Proxy(ProxyOptions opts, net::Fd listener) : opts_(std::move(opts)), listener_(std::move(listener)) {
  port_ = net::local_port(listener_);
  acceptor_ = std::thread([this] { accept_loop(); });
}

Proxy::~Proxy() { shutdown(); }

net::Endpoint Proxy::endpoint() const { return net::Endpoint{opts_.listen.host, port_}; }

void Proxy::shutdown() {
  if (stopped_.exchange(true)) return;
  stop_.signal();
  if (acceptor_.joinable()) acceptor_.join();
  reap(true);
}

ProxyStats Proxy::stats() const {
  ProxyStats s;
  s.connections = connections_.load();
  s.upstream_failures = upstream_failures_.load();
  for (std::size_t i = 0; i < 2; ++i) {
    s.chunks[i] = chunks_[i].load();
    s.bytes[i] = bytes_[i].load();
    s.penalties[i] = penalties_[i].load();
  }
  return s;
}

std::vector<ScheduleEntry> Proxy::schedule_log() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

std::size_t Proxy::active_connections() {
  std::lock_guard lock(conns_mu_);
  std::size_t n = 0;
  for (const auto& c : conns_)
    if (c->finished.load() < 2) ++n;
  return n;
}

bool Proxy::wait_idle(std::chrono::milliseconds timeout) {
  const auto deadline = MonoClock::now() + timeout;
  while (active_connections() > 0) {
    if (MonoClock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  return true;
}

void Proxy::reap(bool all) {
  std::list<std::unique_ptr<Connection>> done;
  {
    std::lock_guard lock(conns_mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (all || (*it)->finished.load() == 2) {
        done.push_back(std::move(*it));
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : done) c->join();
}

void Proxy::accept_loop() {
  while (true) {
    net::Readiness ready;
    try {
      ready = net::wait_readable(listener_.get(), std::chrono::milliseconds(200), stop_.fd());
    } catch (const net::NetError& e) {
      spdlog::error("proxy accept loop: {}", e.what());
      return;
    }
    if (ready == net::Readiness::Woken) return;
    reap(false);
    if (ready == net::Readiness::Timeout) continue;

    net::Fd client = net::accept_client(listener_);
    if (!client) continue;
    ++connections_;
    const std::uint32_t ordinal = next_ordinal_++;

    net::Fd upstream;
    try {
      upstream = net::dial(opts_.upstream, opts_.dial_timeout);
    } catch (const net::NetError& e) {
      ++upstream_failures_;
      spdlog::warn("proxy: upstream {} unreachable for connection {}: {}", opts_.upstream.to_string(), ordinal, e.what());
      continue;  // client closed on scope exit
    }

    auto conn = std::make_unique<Connection>();
    conn->ordinal = ordinal;
    conn->client = std::move(client);
    conn->upstream = std::move(upstream);
    Connection& ref = *conn;
    {
      std::lock_guard lock(conns_mu_);
      conns_.push_back(std::move(conn));
    }
    ref.to_broker = std::thread([this, &ref] { relay(ref, Direction::ClientToBroker); });
    ref.to_client = std::thread([this, &ref] { relay(ref, Direction::BrokerToClient); });
  }
}

void Proxy::relay(Connection& conn, Direction dir) {
  ::prctl(PR_SET_TIMERSLACK, 1UL, 0, 0, 0);
  const int src = dir == Direction::ClientToBroker ? conn.client.get() : conn.upstream.get();
  const int dst = dir == Direction::ClientToBroker ? conn.upstream.get() : conn.client.get();
  const std::size_t d = idx(dir);

  const std::uint64_t seed = connection_seed(opts_.seed, conn.ordinal, dir);
  impair::Rng delay_rng(seed);
  impair::Rng loss_rng(loss_stream_seed(seed));
  impair::ReleaseSchedule schedule;
  std::vector<std::uint8_t> buf(opts_.read_size);
  std::uint32_t chunk_index = 0;
  std::deque<std::size_t> pending_log;  // log positions awaiting written_ns
  bool src_open = true;
  bool dst_dead = false;

  while (true) {
    std::int64_t now = mono_now_ns();
    while (!schedule.empty() && schedule.front().release_ns <= now) {
      auto entry = schedule.pop();
      try {
        net::send_all(dst, entry.data);
      } catch (const net::NetError&) {
        dst_dead = true;
        break;
      }
      if (opts_.record_schedule && !pending_log.empty()) {
        std::lock_guard lock(log_mu_);
        log_[pending_log.front()].written_ns = mono_now_ns();
        pending_log.pop_front();
      }
      now = mono_now_ns();
    }
    if (dst_dead) {
      ::shutdown(src, SHUT_RDWR);
      break;
    }
    if (!src_open && schedule.empty()) {
      ::shutdown(dst, SHUT_WR);
      break;
    }

    const auto next = schedule.next_release();
    const Nanos timeout = next ? Nanos(*next - now) : Nanos(std::chrono::seconds(1));
    net::Readiness ready;
    try {
      ready = src_open ? net::wait_readable(src, timeout, stop_.fd())
                       : net::wait_readable(stop_.fd(), timeout);
    } catch (const net::NetError&) {
      break;
    }
    if (!src_open) {
      if (ready == net::Readiness::Readable) break;  // stop event fired
      continue;
    }
    if (ready == net::Readiness::Woken) break;
    if (ready == net::Readiness::Timeout) continue;

    std::size_t n = 0;
    try {
      n = net::recv_some(src, buf);
    } catch (const net::NetError&) {
      n = 0;
    }
    if (n == 0) {
      src_open = false;
      continue;
    }
    const std::int64_t arrival = mono_now_ns();
    const auto timing = schedule.schedule(codec::Bytes(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n)),
                                          arrival, opts_.scenario, opts_.loss, delay_rng, loss_rng);
    ++chunks_[d];
    bytes_[d] += n;
    if (timing.penalty_ns > 0) ++penalties_[d];
    if (opts_.record_schedule) {
      std::lock_guard lock(log_mu_);
      pending_log.push_back(log_.size());
      log_.push_back(ScheduleEntry{conn.ordinal, dir, chunk_index, timing, 0});
    }
    ++chunk_index;
  }
  conn.finished.fetch_add(1);
}

}  // namespace benchkit::proxy
