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
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "benchkit/codec.hpp"
#include "benchkit/net.hpp"

/// Minimal MQTT 3.1.1 broker used to make benchmark runs hermetic.
namespace benchkit::broker {

/// Level-wise topic matching. '+' matches exactly one level, '#' matches the
/// remaining levels including the parent ("a/#" matches "a").
bool match_filter(std::string_view filter, std::string_view topic);

using SessionId = std::uint64_t;

struct FaultPlan {
  std::uint32_t drop_first_n_pubacks = 0;
  std::uint8_t connack_return_code = 0;
  std::optional<codec::QoS> grant_qos_override;

  bool operator==(const FaultPlan&) const = default;
};

/// Parses "drop_pubacks=N,connack=C,grant_qos=Q" (any subset, "" or "none"
/// for no faults). Throws std::invalid_argument.
FaultPlan parse_fault_plan(std::string_view spec);

class SubscriptionTable {
 public:
  struct Entry {
    SessionId session = 0;
    std::string filter;
    codec::QoS granted = codec::QoS::AtMostOnce;
    bool operator==(const Entry&) const = default;
  };

  /// Re-subscribing the same (session, filter) replaces the granted QoS.
  void subscribe(SessionId session, std::string filter, codec::QoS granted);
  bool unsubscribe(SessionId session, std::string_view filter);
  void remove_session(SessionId session);

  /// Matching sessions with the highest granted QoS across their matching
  /// filters. One entry per session, so overlapping filters yield one copy.
  std::map<SessionId, codec::QoS> match(std::string_view topic) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  std::vector<Entry> entries_;
};

struct Outbound {
  SessionId to = 0;
  codec::ControlPacket packet;
};

struct Effects {
  std::vector<Outbound> out;
  bool close_sender = false;
  std::string reason;
};

struct BrokerCounters {
  std::uint64_t connects_accepted = 0;
  std::uint64_t connects_refused = 0;
  std::uint64_t publishes_received = 0;
  std::uint64_t pubacks_sent = 0;
  std::uint64_t pubacks_dropped = 0;
  std::uint64_t deliveries = 0;
};

/// Protocol state without I/O. Not thread-safe; StubBroker serializes calls.
class BrokerCore {
 public:
  explicit BrokerCore(FaultPlan faults = {}) : faults_(faults) {}

  Effects handle_connect(SessionId from, const codec::Connect& c);
  Effects handle_packet(SessionId from, const codec::ControlPacket& p);
  Effects handle_publish(SessionId from, const codec::Publish& p);
  void session_closed(SessionId id);

  bool connected(SessionId id) const { return sessions_.contains(id); }
  const SubscriptionTable& subscriptions() const noexcept { return table_; }
  const BrokerCounters& counters() const noexcept { return counters_; }
  const FaultPlan& faults() const noexcept { return faults_; }

 private:
  std::uint16_t next_packet_id(SessionId id);

  FaultPlan faults_;
  SubscriptionTable table_;
  std::map<SessionId, std::uint16_t> sessions_;  // connected session -> next outgoing packet id
  BrokerCounters counters_;
};

/// TCP front end for BrokerCore: one reader thread and one writer thread per
/// session; fan-out goes through per-session outgoing queues.
class StubBroker {
 public:
  static std::unique_ptr<StubBroker> start(const net::Endpoint& listen, FaultPlan faults = {});

  ~StubBroker();
  StubBroker(const StubBroker&) = delete;
  StubBroker& operator=(const StubBroker&) = delete;

  net::Endpoint endpoint() const { return endpoint_; }
  void shutdown();

  BrokerCounters counters() const;
  std::size_t connected_sessions() const;
  std::vector<SubscriptionTable::Entry> subscriptions() const;

 private:
  struct Session;

  StubBroker(net::Fd listener, net::Endpoint ep, FaultPlan faults);
  void accept_loop();
  void serve(const std::shared_ptr<Session>& s);
  void write_loop(const std::shared_ptr<Session>& s);
  void deliver(const Effects& fx);
  void reap(bool all);

  net::Fd listener_;
  net::Endpoint endpoint_;
  net::WakeEvent stop_;
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;

  mutable std::mutex mu_;
  BrokerCore core_;
  std::map<SessionId, std::shared_ptr<Session>> live_;
  std::list<std::shared_ptr<Session>> all_;
  SessionId next_id_ = 1;
};

}  // namespace benchkit::broker
