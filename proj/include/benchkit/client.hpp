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
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "benchkit/clock.hpp"
#include "benchkit/codec.hpp"
#include "benchkit/net.hpp"

namespace benchkit::client {

using std::chrono::milliseconds;

struct ClientConfig {
  std::string client_id;
  std::chrono::seconds keep_alive{60};
  milliseconds connect_timeout{5000};
  milliseconds ack_timeout{5000};
  int max_retransmits = 3;
};

enum class Phase { Disconnected, Connecting, Connected, Closed };

std::string_view phase_name(Phase p);

class ClientError : public std::runtime_error {
 public:
  enum class Kind {
    ConnectTimeout,
    ConnectRefused,
    TransportError,
    AckTimeout,
    AckExhausted,
    SubscriptionFailed,
    InvalidArgument,
    NotConnected,
  };
  ClientError(Kind kind, const std::string& what, int return_code = 0)
      : std::runtime_error(what), kind_(kind), return_code_(return_code) {}
  Kind kind() const noexcept { return kind_; }
  /// CONNACK return code for ConnectRefused.
  int return_code() const noexcept { return return_code_; }

 private:
  Kind kind_;
  int return_code_;
};

/// 16-bit packet identifier counter: 1..65535, wraps back to 1 and skips
/// identifiers the caller reports as still in use.
class PacketIdAllocator {
 public:
  template <class InUse>
  std::uint16_t allocate(InUse&& in_use) {
    for (std::uint32_t tries = 0; tries < 65535; ++tries) {
      const std::uint16_t id = next_;
      next_ = next_ == 65535 ? 1 : static_cast<std::uint16_t>(next_ + 1);
      if (!in_use(id)) return id;
    }
    throw ClientError(ClientError::Kind::InvalidArgument, "all 65535 packet ids are in flight");
  }

  std::uint16_t peek() const noexcept { return next_; }
  void set_next(std::uint16_t id) noexcept { next_ = id == 0 ? 1 : id; }

 private:
  std::uint16_t next_ = 1;
};

struct InflightPublish {
  std::string topic;
  codec::Bytes payload;
  MonoTime first_sent_at;
  int retries = 0;
};

struct SessionStats {
  std::uint64_t pings_sent = 0;
  std::uint64_t pongs_received = 0;
  std::uint64_t retransmits = 0;
  std::uint64_t downgrades = 0;
  std::uint64_t acked = 0;
  std::uint64_t messages_received = 0;
  std::int64_t first_ping_after_ns = -1;  ///< idle time before the first PINGREQ
};

struct IncomingMessage {
  const codec::Publish& publish;
  std::int64_t received_ns;  ///< monotonic clock, read as soon as the packet is complete
};

using MessageHandler = std::function<void(const IncomingMessage&)>;

/// One MQTT 3.1.1 session over one TCP connection.
///
/// A background I/O thread owns the read side: it decodes packets, resolves
/// acknowledgement waiters, answers QoS 1 deliveries with PUBACK, invokes the
/// message handler, and sends PINGREQ when the connection has been idle for
/// three quarters of the keep-alive period. Public calls may come from any
/// thread.
class Session {
 public:
  /// Dials (retrying refused connects until connect_timeout), sends CONNECT
  /// with clean_session = true and waits for CONNACK.
  static std::unique_ptr<Session> connect(const net::Endpoint& ep, ClientConfig cfg, MessageHandler on_message = {});

  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Returns the granted QoS. Invalid filters are rejected before anything is sent.
  codec::QoS subscribe(std::string_view filter, codec::QoS qos = codec::QoS::AtLeastOnce);
  void unsubscribe(std::string_view filter);

  /// Blocks until PUBACK; returns the time from first transmission to the ack.
  Nanos publish_qos1(std::string_view topic, codec::ByteView payload);
  void publish_qos0(std::string_view topic, codec::ByteView payload);

  /// Sends DISCONNECT and closes. Idempotent.
  void disconnect();

  Phase phase() const;
  bool session_present() const noexcept { return session_present_; }
  std::vector<std::uint16_t> inflight_ids() const;
  SessionStats stats() const;
  const ClientConfig& config() const noexcept { return cfg_; }

 private:
  Session(net::Fd sock, ClientConfig cfg, MessageHandler handler);

  void io_loop();
  void dispatch(codec::ControlPacket&& packet, std::int64_t received_ns);
  void send(const codec::ControlPacket& packet);
  void close_with(std::string_view reason);
  std::uint16_t allocate_id_locked();
  void require_connected_locked() const;

  net::Fd sock_;
  ClientConfig cfg_;
  MessageHandler handler_;
  bool session_present_ = false;

  mutable std::mutex write_mu_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  Phase phase_ = Phase::Connected;
  PacketIdAllocator ids_;
  std::map<std::uint16_t, InflightPublish> inflight_;
  std::map<std::uint16_t, std::optional<codec::SubAck>> pending_subacks_;
  std::map<std::uint16_t, bool> pending_unsubacks_;
  SessionStats stats_;

  std::atomic<std::int64_t> last_send_ns_{0};
  net::WakeEvent stop_;
  std::thread io_;
};

}  // namespace benchkit::client
