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

#include <atomic>
#include <functional>
#include <memory>
#include <thread>
#include <vector>

#include "benchkit/net.hpp"
#include "support/raw_conn.hpp"

namespace bktest {

// Answers CONNECT with CONNACK 0 and hands every later packet to a scripted
// handler. One thread per connection; the handler must be thread-safe.
class FakeBroker {
 public:
  using Handler = std::function<void(RawConn&, const benchkit::codec::ControlPacket&)>;

  explicit FakeBroker(Handler handler) : listener_(benchkit::net::listen_on({"127.0.0.1", 0})), handler_(std::move(handler)) {
    port_ = benchkit::net::local_port(listener_);
    thread_ = std::thread([this] { serve(); });
  }
  ~FakeBroker() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
    for (auto& t : workers_) t.join();
  }

  benchkit::net::Endpoint endpoint() const { return {"127.0.0.1", port_}; }

 private:
  void serve() {
    while (!stop_) {
      if (benchkit::net::wait_readable(listener_.get(), std::chrono::milliseconds(50)) != benchkit::net::Readiness::Readable)
        continue;
      auto fd = benchkit::net::accept_client(listener_);
      if (!fd) continue;
      workers_.emplace_back([this, fd = std::move(fd)]() mutable { session(RawConn(std::move(fd))); });
    }
  }

  void session(RawConn conn) {
    while (!stop_) {
      auto p = conn.recv(std::chrono::milliseconds(20));
      if (!p) {
        if (conn.eof()) break;
        continue;
      }
      if (std::holds_alternative<benchkit::codec::Connect>(*p)) {
        conn.send(benchkit::codec::ConnAck{false, 0});
        continue;
      }
      handler_(conn, *p);
    }
  }

  benchkit::net::Fd listener_;
  Handler handler_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread thread_;
  std::vector<std::thread> workers_;
};

}  // namespace bktest
