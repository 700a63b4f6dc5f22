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
#include "benchkit/client.hpp"

#include <sys/socket.h>

#include <array>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace benchkit::client {

namespace {

using codec::ControlPacket;

std::int64_t ns_of(std::chrono::nanoseconds d) { return d.count(); }

net::Fd dial_until(const net::Endpoint& ep, milliseconds timeout) {
  const auto deadline = MonoClock::now() + timeout;
  while (true) {
    const auto left = std::chrono::duration_cast<milliseconds>(deadline - MonoClock::now());
    if (left.count() <= 0)
      throw ClientError(ClientError::Kind::ConnectTimeout, fmt::format("connect to {} timed out", ep.to_string()));
    try {
      return net::dial(ep, left);
    } catch (const net::NetError& e) {
      if (e.kind() == net::NetError::Kind::Timeout)
        throw ClientError(ClientError::Kind::ConnectTimeout, fmt::format("connect to {} timed out", ep.to_string()));
      if (e.kind() != net::NetError::Kind::Refused) throw ClientError(ClientError::Kind::TransportError, e.what());
    }
    // Refused: the listener may not be up yet.
    std::this_thread::sleep_for(std::min(milliseconds(50), std::max(left, milliseconds(1))));
  }
}

codec::ConnAck await_connack(const net::Fd& sock, const net::Endpoint& ep, MonoTime deadline) {
  codec::StreamDecoder dec;
  std::array<std::uint8_t, 256> buf{};
  while (true) {
    const auto left = deadline - MonoClock::now();
    if (left <= Nanos(0) || net::wait_readable(sock.get(), left) != net::Readiness::Readable)
      throw ClientError(ClientError::Kind::ConnectTimeout, fmt::format("no CONNACK from {} in time", ep.to_string()));
    std::size_t n = 0;
    try {
      n = net::recv_some(sock.get(), buf);
    } catch (const net::NetError& e) {
      throw ClientError(ClientError::Kind::TransportError, e.what());
    }
    if (n == 0) throw ClientError(ClientError::Kind::TransportError, "connection closed before CONNACK");
    dec.feed(codec::ByteView(buf.data(), n));
    std::optional<ControlPacket> packet;
    try {
      packet = dec.next();
    } catch (const codec::CodecError& e) {
      throw ClientError(ClientError::Kind::TransportError, fmt::format("malformed CONNACK: {}", e.what()));
    }
    if (!packet) continue;
    if (const auto* ack = std::get_if<codec::ConnAck>(&*packet)) {
      if (dec.buffered() != 0)
        throw ClientError(ClientError::Kind::TransportError, "unexpected bytes after CONNACK");
      return *ack;
    }
    throw ClientError(ClientError::Kind::TransportError,
                      fmt::format("expected CONNACK, got {}", codec::packet_type_name(codec::packet_type(*packet))));
  }
}

}  // namespace

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Disconnected: return "Disconnected";
    case Phase::Connecting: return "Connecting";
    case Phase::Connected: return "Connected";
    case Phase::Closed: return "Closed";
  }
  return "?";
}

std::unique_ptr<Session> Session::connect(const net::Endpoint& ep, ClientConfig cfg, MessageHandler on_message) {
  if (cfg.keep_alive.count() <= 0 || cfg.keep_alive.count() > 65535)
    throw ClientError(ClientError::Kind::InvalidArgument, "keep_alive must be in 1..65535 s");
  if (cfg.max_retransmits < 0) throw ClientError(ClientError::Kind::InvalidArgument, "max_retransmits must be >= 0");

  const auto deadline = MonoClock::now() + cfg.connect_timeout;
  net::Fd sock = dial_until(ep, cfg.connect_timeout);

  codec::Connect hello;
  hello.client_id = cfg.client_id;
  hello.keep_alive_s = static_cast<std::uint16_t>(cfg.keep_alive.count());
  hello.clean_session = true;
  try {
    net::send_all(sock.get(), codec::encode_packet(hello));
  } catch (const net::NetError& e) {
    throw ClientError(ClientError::Kind::TransportError, e.what());
  } catch (const codec::CodecError& e) {
    throw ClientError(ClientError::Kind::InvalidArgument, e.what());
  }

  const codec::ConnAck ack = await_connack(sock, ep, deadline);
  if (ack.return_code != 0)
    throw ClientError(ClientError::Kind::ConnectRefused,
                      fmt::format("broker {} refused connection, return code {}", ep.to_string(), ack.return_code),
                      ack.return_code);

  std::unique_ptr<Session> session(new Session(std::move(sock), std::move(cfg), std::move(on_message)));
  session->session_present_ = ack.session_present;
  return session;
}

Session::Session(net::Fd sock, ClientConfig cfg, MessageHandler handler)
    : sock_(std::move(sock)), cfg_(std::move(cfg)), handler_(std::move(handler)) {
  last_send_ns_ = mono_now_ns();
  io_ = std::thread([this] { io_loop(); });
}

Session::~Session() { disconnect(); }

Phase Session::phase() const {
  std::lock_guard lock(mu_);
  return phase_;
}

std::vector<std::uint16_t> Session::inflight_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::uint16_t> ids;
  ids.reserve(inflight_.size());
  for (const auto& [id, _] : inflight_) ids.push_back(id);
  return ids;
}

SessionStats Session::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void Session::require_connected_locked() const {
  if (phase_ != Phase::Connected)
    throw ClientError(ClientError::Kind::NotConnected, fmt::format("session is {}", phase_name(phase_)));
}

std::uint16_t Session::allocate_id_locked() {
  return ids_.allocate([this](std::uint16_t id) {
    return inflight_.contains(id) || pending_subacks_.contains(id) || pending_unsubacks_.contains(id);
  });
}

void Session::send(const ControlPacket& packet) {
  const codec::Bytes bytes = codec::encode_packet(packet);
  std::lock_guard lock(write_mu_);
  try {
    net::send_all(sock_.get(), bytes);
  } catch (const net::NetError& e) {
    close_with(e.what());
    throw ClientError(ClientError::Kind::TransportError, e.what());
  }
  last_send_ns_ = mono_now_ns();
}

void Session::close_with(std::string_view reason) {
  {
    std::lock_guard lock(mu_);
    if (phase_ == Phase::Closed) return;
    phase_ = Phase::Closed;
  }
  spdlog::debug("session {} closed: {}", cfg_.client_id, reason);
  ::shutdown(sock_.get(), SHUT_RDWR);
  cv_.notify_all();
}

codec::QoS Session::subscribe(std::string_view filter, codec::QoS qos) {
  if (auto err = codec::validate_topic_filter(filter))
    throw ClientError(ClientError::Kind::InvalidArgument,
                      fmt::format("invalid topic filter '{}': {}", filter, codec::topic_error_name(*err)));
  if (qos == codec::QoS::ExactlyOnce)
    throw ClientError(ClientError::Kind::InvalidArgument, "QoS 2 subscriptions are not supported");

  std::uint16_t id = 0;
  {
    std::lock_guard lock(mu_);
    require_connected_locked();
    id = allocate_id_locked();
    pending_subacks_[id] = std::nullopt;
  }
  send(codec::Subscribe{id, {codec::Subscription{std::string(filter), qos}}});

  std::unique_lock lock(mu_);
  const bool done = cv_.wait_for(lock, cfg_.ack_timeout, [&] {
    return pending_subacks_[id].has_value() || phase_ != Phase::Connected;
  });
  std::optional<codec::SubAck> ack = std::move(pending_subacks_[id]);
  pending_subacks_.erase(id);
  if (!ack) {
    if (!done) throw ClientError(ClientError::Kind::AckTimeout, fmt::format("no SUBACK for '{}'", filter));
    throw ClientError(ClientError::Kind::TransportError, "connection closed while waiting for SUBACK");
  }
  if (ack->granted.size() != 1)
    throw ClientError(ClientError::Kind::TransportError, "SUBACK return code count does not match request");
  const std::uint8_t code = ack->granted.front();
  if (code == codec::kSubAckFailure)
    throw ClientError(ClientError::Kind::SubscriptionFailed, fmt::format("broker rejected subscription '{}'", filter));
  if (code < static_cast<std::uint8_t>(qos)) {
    ++stats_.downgrades;
    spdlog::warn("subscription '{}' downgraded: requested QoS {}, granted QoS {}", filter,
                 static_cast<int>(qos), static_cast<int>(code));
  }
  return static_cast<codec::QoS>(code);
}

void Session::unsubscribe(std::string_view filter) {
  std::uint16_t id = 0;
  {
    std::lock_guard lock(mu_);
    require_connected_locked();
    id = allocate_id_locked();
    pending_unsubacks_[id] = false;
  }
  send(codec::Unsubscribe{id, {std::string(filter)}});
  std::unique_lock lock(mu_);
  const bool done = cv_.wait_for(lock, cfg_.ack_timeout, [&] { return pending_unsubacks_[id] || phase_ != Phase::Connected; });
  const bool acked = pending_unsubacks_[id];
  pending_unsubacks_.erase(id);
  if (!acked) {
    if (!done) throw ClientError(ClientError::Kind::AckTimeout, fmt::format("no UNSUBACK for '{}'", filter));
    throw ClientError(ClientError::Kind::TransportError, "connection closed while waiting for UNSUBACK");
  }
}

void Session::publish_qos0(std::string_view topic, codec::ByteView payload) {
  {
    std::lock_guard lock(mu_);
    require_connected_locked();
  }
  codec::Publish pub;
  pub.topic = std::string(topic);
  pub.payload.assign(payload.begin(), payload.end());
  try {
    send(pub);
  } catch (const codec::CodecError& e) {
    throw ClientError(ClientError::Kind::InvalidArgument, e.what());
  }
}

Nanos Session::publish_qos1(std::string_view topic, codec::ByteView payload) {
  if (payload.empty()) throw ClientError(ClientError::Kind::InvalidArgument, "payload must not be empty");
  if (auto err = codec::validate_topic_name(topic))
    throw ClientError(ClientError::Kind::InvalidArgument,
                      fmt::format("invalid topic name '{}': {}", topic, codec::topic_error_name(*err)));

  codec::Publish pub;
  pub.topic = std::string(topic);
  pub.qos = codec::QoS::AtLeastOnce;
  pub.payload.assign(payload.begin(), payload.end());

  MonoTime first_sent;
  std::uint16_t id = 0;
  {
    std::lock_guard lock(mu_);
    require_connected_locked();
    id = allocate_id_locked();
    pub.packet_id = id;
    first_sent = MonoClock::now();
    inflight_.emplace(id, InflightPublish{pub.topic, pub.payload, first_sent, 0});
  }

  for (int attempt = 0;; ++attempt) {
    if (attempt > 0) pub.dup = true;
    try {
      send(pub);
    } catch (const ClientError&) {
      std::lock_guard lock(mu_);
      inflight_.erase(id);
      throw;
    }

    std::unique_lock lock(mu_);
    const bool settled = cv_.wait_for(lock, cfg_.ack_timeout, [&] {
      return !inflight_.contains(id) || phase_ != Phase::Connected;
    });
    if (!inflight_.contains(id)) {
      ++stats_.acked;
      return MonoClock::now() - first_sent;
    }
    if (settled) {
      inflight_.erase(id);
      throw ClientError(ClientError::Kind::TransportError, "connection closed while waiting for PUBACK");
    }
    if (attempt >= cfg_.max_retransmits) {
      inflight_.erase(id);
      throw ClientError(ClientError::Kind::AckExhausted,
                        fmt::format("no PUBACK for packet {} after {} retransmits", id, cfg_.max_retransmits));
    }
    ++inflight_[id].retries;
    ++stats_.retransmits;
  }
}

void Session::disconnect() {
  bool was_connected = false;
  {
    std::lock_guard lock(mu_);
    was_connected = phase_ == Phase::Connected;
  }
  if (was_connected) {
    try {
      send(codec::Disconnect{});
    } catch (const std::exception&) {
    }
  }
  close_with("disconnect");
  stop_.signal();
  if (io_.joinable() && io_.get_id() != std::this_thread::get_id()) io_.join();
}

void Session::dispatch(ControlPacket&& packet, std::int64_t received_ns) {
  if (auto* pub = std::get_if<codec::Publish>(&packet)) {
    if (pub->qos == codec::QoS::AtLeastOnce) send(codec::PubAck{*pub->packet_id});
    {
      std::lock_guard lock(mu_);
      ++stats_.messages_received;
    }
    if (handler_) handler_(IncomingMessage{*pub, received_ns});
    return;
  }

  std::lock_guard lock(mu_);
  if (const auto* ack = std::get_if<codec::PubAck>(&packet)) {
    inflight_.erase(ack->packet_id);  // late acks for abandoned ids are ignored
  } else if (auto* sub = std::get_if<codec::SubAck>(&packet)) {
    if (auto it = pending_subacks_.find(sub->packet_id); it != pending_subacks_.end()) it->second = std::move(*sub);
  } else if (const auto* unsub = std::get_if<codec::UnsubAck>(&packet)) {
    if (auto it = pending_unsubacks_.find(unsub->packet_id); it != pending_unsubacks_.end()) it->second = true;
  } else if (std::holds_alternative<codec::PingResp>(packet)) {
    ++stats_.pongs_received;
  } else {
    spdlog::warn("session {}: unexpected {} from broker", cfg_.client_id,
                 codec::packet_type_name(codec::packet_type(packet)));
  }
  cv_.notify_all();
}

void Session::io_loop() {
  std::vector<std::uint8_t> buf(64 * 1024);
  codec::StreamDecoder decoder;
  const std::int64_t idle_limit = ns_of(cfg_.keep_alive) * 3 / 4;

  while (true) {
    const std::int64_t wait = last_send_ns_.load() + idle_limit - mono_now_ns();
    net::Readiness ready;
    try {
      ready = net::wait_readable(sock_.get(), Nanos(wait), stop_.fd());
    } catch (const net::NetError& e) {
      close_with(e.what());
      return;
    }
    if (ready == net::Readiness::Woken) return;
    if (ready == net::Readiness::Timeout) {
      const std::int64_t idle = mono_now_ns() - last_send_ns_.load();
      if (idle < idle_limit) continue;
      try {
        send(codec::PingReq{});
      } catch (const ClientError&) {
        return;
      }
      std::lock_guard lock(mu_);
      ++stats_.pings_sent;
      if (stats_.first_ping_after_ns < 0) stats_.first_ping_after_ns = idle;
      continue;
    }

    std::size_t n = 0;
    try {
      n = net::recv_some(sock_.get(), buf);
    } catch (const net::NetError& e) {
      close_with(e.what());
      return;
    }
    if (n == 0) {
      close_with("broker closed the connection");
      return;
    }
    const std::int64_t received = mono_now_ns();
    decoder.feed(codec::ByteView(buf.data(), n));
    try {
      while (auto packet = decoder.next()) dispatch(std::move(*packet), received);
    } catch (const codec::CodecError& e) {
      close_with(fmt::format("malformed packet from broker: {}", e.what()));
      return;
    } catch (const ClientError& e) {
      close_with(e.what());
      return;
    }
  }
}

}  // namespace benchkit::client
