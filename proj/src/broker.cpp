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
#include "benchkit/broker.hpp"

#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace benchkit::broker {

namespace {

std::vector<std::string_view> split_levels(std::string_view s) {
  std::vector<std::string_view> levels;
  std::size_t start = 0;
  while (true) {
    const auto slash = s.find('/', start);
    if (slash == std::string_view::npos) {
      levels.push_back(s.substr(start));
      return levels;
    }
    levels.push_back(s.substr(start, slash - start));
    start = slash + 1;
  }
}

codec::QoS min_qos(codec::QoS a, codec::QoS b) {
  return static_cast<codec::QoS>(std::min(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)));
}

Effects close_with(std::string reason) {
  Effects fx;
  fx.close_sender = true;
  fx.reason = std::move(reason);
  return fx;
}

std::uint32_t parse_uint(std::string_view key, std::string_view value) {
  std::uint32_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument(fmt::format("fault '{}' expects a non-negative integer, got '{}'", key, value));
  return out;
}

}  // namespace

bool match_filter(std::string_view filter, std::string_view topic) {
  // Wildcards in the first level never match $-prefixed system topics.
  if (!topic.empty() && topic.front() == '$' && !filter.empty() && (filter.front() == '+' || filter.front() == '#'))
    return false;
  const auto f = split_levels(filter);
  const auto t = split_levels(topic);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] == "#") return true;
    if (i >= t.size()) return false;
    if (f[i] == "+") continue;
    if (f[i] != t[i]) return false;
  }
  return f.size() == t.size();
}

FaultPlan parse_fault_plan(std::string_view spec) {
  FaultPlan plan;
  if (spec.empty() || spec == "none") return plan;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const auto item = spec.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument(fmt::format("fault '{}' must be key=value", item));
    const auto key = item.substr(0, eq);
    const auto value = item.substr(eq + 1);
    if (key == "drop_pubacks") {
      plan.drop_first_n_pubacks = parse_uint(key, value);
    } else if (key == "connack") {
      const auto code = parse_uint(key, value);
      if (code > 5) throw std::invalid_argument("connack return code must be within 0..5");
      plan.connack_return_code = static_cast<std::uint8_t>(code);
    } else if (key == "grant_qos") {
      const auto q = parse_uint(key, value);
      if (q > 2) throw std::invalid_argument("grant_qos must be within 0..2");
      plan.grant_qos_override = static_cast<codec::QoS>(q);
    } else {
      throw std::invalid_argument(fmt::format("unknown fault '{}'", key));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return plan;
}

void SubscriptionTable::subscribe(SessionId session, std::string filter, codec::QoS granted) {
  for (auto& e : entries_) {
    if (e.session == session && e.filter == filter) {
      e.granted = granted;
      return;
    }
  }
  entries_.push_back(Entry{session, std::move(filter), granted});
}

bool SubscriptionTable::unsubscribe(SessionId session, std::string_view filter) {
  const auto before = entries_.size();
  std::erase_if(entries_, [&](const Entry& e) { return e.session == session && e.filter == filter; });
  return entries_.size() != before;
}

void SubscriptionTable::remove_session(SessionId session) {
  std::erase_if(entries_, [&](const Entry& e) { return e.session == session; });
}

std::map<SessionId, codec::QoS> SubscriptionTable::match(std::string_view topic) const {
  std::map<SessionId, codec::QoS> out;
  for (const auto& e : entries_) {
    if (!match_filter(e.filter, topic)) continue;
    auto [it, inserted] = out.emplace(e.session, e.granted);
    if (!inserted && e.granted > it->second) it->second = e.granted;
  }
  return out;
}

std::uint16_t BrokerCore::next_packet_id(SessionId id) {
  auto& next = sessions_[id];
  const std::uint16_t out = next;
  next = next == 65535 ? 1 : static_cast<std::uint16_t>(next + 1);
  return out;
}

Effects BrokerCore::handle_connect(SessionId from, const codec::Connect&) {
  Effects fx;
  if (sessions_.contains(from)) return close_with("second CONNECT on a session");
  if (faults_.connack_return_code != 0) {
    ++counters_.connects_refused;
    fx.out.push_back(Outbound{from, codec::ConnAck{false, faults_.connack_return_code}});
    fx.close_sender = true;
    fx.reason = fmt::format("connection refused with return code {}", faults_.connack_return_code);
    return fx;
  }
  ++counters_.connects_accepted;
  sessions_[from] = 1;
  fx.out.push_back(Outbound{from, codec::ConnAck{false, 0}});
  return fx;
}

Effects BrokerCore::handle_publish(SessionId from, const codec::Publish& p) {
  if (!sessions_.contains(from)) return close_with("PUBLISH before CONNECT");
  if (p.qos == codec::QoS::ExactlyOnce) return close_with("QoS 2 is not supported");
  if (p.qos == codec::QoS::AtLeastOnce && !p.packet_id) return close_with("QoS 1 PUBLISH without packet id");
  ++counters_.publishes_received;

  Effects fx;
  for (const auto& [session, granted] : table_.match(p.topic)) {
    if (!sessions_.contains(session)) continue;
    codec::Publish fwd;
    fwd.topic = p.topic;
    fwd.qos = min_qos(p.qos, granted);
    if (fwd.qos == codec::QoS::AtLeastOnce) fwd.packet_id = next_packet_id(session);
    fwd.payload = p.payload;
    fx.out.push_back(Outbound{session, std::move(fwd)});
    ++counters_.deliveries;
  }
  if (p.qos == codec::QoS::AtLeastOnce) {
    if (counters_.pubacks_dropped < faults_.drop_first_n_pubacks) {
      ++counters_.pubacks_dropped;
    } else {
      ++counters_.pubacks_sent;
      fx.out.push_back(Outbound{from, codec::PubAck{*p.packet_id}});
    }
  }
  return fx;
}

Effects BrokerCore::handle_packet(SessionId from, const codec::ControlPacket& p) {
  if (const auto* c = std::get_if<codec::Connect>(&p)) return handle_connect(from, *c);
  if (!sessions_.contains(from)) return close_with("first packet must be CONNECT");
  if (const auto* pub = std::get_if<codec::Publish>(&p)) return handle_publish(from, *pub);

  Effects fx;
  if (std::holds_alternative<codec::PubAck>(p)) return fx;  // subscribers acking forwards
  if (const auto* sub = std::get_if<codec::Subscribe>(&p)) {
    codec::SubAck ack{sub->packet_id, {}};
    for (const auto& s : sub->filters) {
      if (codec::validate_topic_filter(s.filter)) {
        ack.granted.push_back(codec::kSubAckFailure);
        continue;
      }
      const codec::QoS granted = faults_.grant_qos_override ? *faults_.grant_qos_override
                                                            : min_qos(s.qos, codec::QoS::AtLeastOnce);
      table_.subscribe(from, s.filter, granted);
      ack.granted.push_back(static_cast<std::uint8_t>(granted));
    }
    fx.out.push_back(Outbound{from, std::move(ack)});
    return fx;
  }
  if (const auto* unsub = std::get_if<codec::Unsubscribe>(&p)) {
    for (const auto& f : unsub->filters) table_.unsubscribe(from, f);
    fx.out.push_back(Outbound{from, codec::UnsubAck{unsub->packet_id}});
    return fx;
  }
  if (std::holds_alternative<codec::PingReq>(p)) {
    fx.out.push_back(Outbound{from, codec::PingResp{}});
    return fx;
  }
  if (std::holds_alternative<codec::Disconnect>(p)) return close_with("client disconnected");
  return close_with(fmt::format("unexpected {} from client", codec::packet_type_name(codec::packet_type(p))));
}

void BrokerCore::session_closed(SessionId id) {
  sessions_.erase(id);
  table_.remove_session(id);
}

struct StubBroker::Session {
  SessionId id = 0;
  net::Fd sock;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<codec::Bytes> outq;
  bool closing = false;
  std::atomic<int> finished{0};
  std::thread reader;
  std::thread writer;

  void enqueue(codec::Bytes bytes) {
    {
      std::lock_guard lock(mu);
      if (closing) return;
      outq.push_back(std::move(bytes));
    }
    cv.notify_one();
  }
  void close_after_flush() {
    {
      std::lock_guard lock(mu);
      closing = true;
    }
    cv.notify_one();
  }
};

std::unique_ptr<StubBroker> StubBroker::start(const net::Endpoint& listen, FaultPlan faults) {
  net::Fd fd = net::listen_on(listen);
  net::Endpoint ep{listen.host, net::local_port(fd)};
  return std::unique_ptr<StubBroker>(new StubBroker(std::move(fd), ep, faults));
}

StubBroker::StubBroker(net::Fd listener, net::Endpoint ep, FaultPlan faults)
    : listener_(std::move(listener)), endpoint_(std::move(ep)), core_(faults) {
  acceptor_ = std::thread([this] { accept_loop(); });
}

StubBroker::~StubBroker() { shutdown(); }

void StubBroker::shutdown() {
  if (stopped_.exchange(true)) return;
  stop_.signal();
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(mu_);
    for (auto& s : all_) {
      s->close_after_flush();
      ::shutdown(s->sock.get(), SHUT_RDWR);
    }
  }
  reap(true);
}

BrokerCounters StubBroker::counters() const {
  std::lock_guard lock(mu_);
  return core_.counters();
}

std::size_t StubBroker::connected_sessions() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [id, _] : live_) n += core_.connected(id) ? 1 : 0;
  return n;
}

std::vector<SubscriptionTable::Entry> StubBroker::subscriptions() const {
  std::lock_guard lock(mu_);
  return core_.subscriptions().entries();
}

void StubBroker::reap(bool all) {
  std::list<std::shared_ptr<Session>> done;
  {
    std::lock_guard lock(mu_);
    for (auto it = all_.begin(); it != all_.end();) {
      if (all || (*it)->finished.load() == 2) {
        done.push_back(*it);
        it = all_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& s : done) {
    if (s->reader.joinable()) s->reader.join();
    if (s->writer.joinable()) s->writer.join();
  }
}

void StubBroker::accept_loop() {
  while (true) {
    net::Readiness ready;
    try {
      ready = net::wait_readable(listener_.get(), std::chrono::milliseconds(200), stop_.fd());
    } catch (const net::NetError& e) {
      spdlog::error("stub broker accept loop: {}", e.what());
      return;
    }
    if (ready == net::Readiness::Woken) return;
    reap(false);
    if (ready == net::Readiness::Timeout) continue;

    net::Fd fd = net::accept_client(listener_);
    if (!fd) continue;

    auto s = std::make_shared<Session>();
    s->sock = std::move(fd);
    {
      std::lock_guard lock(mu_);
      s->id = next_id_++;
      live_[s->id] = s;
      all_.push_back(s);
    }
    s->writer = std::thread([this, s] { write_loop(s); });
    s->reader = std::thread([this, s] { serve(s); });
  }
}

void StubBroker::deliver(const Effects& fx) {
  for (const auto& o : fx.out) {
    auto it = live_.find(o.to);
    if (it == live_.end()) continue;
    it->second->enqueue(codec::encode_packet(o.packet));
  }
}

void StubBroker::serve(const std::shared_ptr<Session>& s) {
  std::vector<std::uint8_t> buf(64 * 1024);
  codec::StreamDecoder decoder;
  bool open = true;
  while (open) {
    net::Readiness ready;
    try {
      ready = net::wait_readable(s->sock.get(), std::chrono::seconds(1), stop_.fd());
    } catch (const net::NetError&) {
      break;
    }
    if (ready == net::Readiness::Woken) break;
    if (ready == net::Readiness::Timeout) continue;
    std::size_t n = 0;
    try {
      n = net::recv_some(s->sock.get(), buf);
    } catch (const net::NetError&) {
      break;
    }
    if (n == 0) break;
    decoder.feed(codec::ByteView(buf.data(), n));
    try {
      while (open) {
        auto packet = decoder.next();
        if (!packet) break;
        std::lock_guard lock(mu_);
        const Effects fx = core_.handle_packet(s->id, *packet);
        deliver(fx);
        if (fx.close_sender) {
          spdlog::debug("stub broker: closing session {}: {}", s->id, fx.reason);
          open = false;
        }
      }
    } catch (const codec::CodecError& e) {
      spdlog::debug("stub broker: malformed packet on session {}: {}", s->id, e.what());
      break;
    }
  }
  {
    std::lock_guard lock(mu_);
    core_.session_closed(s->id);
    live_.erase(s->id);
  }
  s->close_after_flush();
  s->finished.fetch_add(1);
}

void StubBroker::write_loop(const std::shared_ptr<Session>& s) {
  while (true) {
    codec::Bytes next;
    {
      std::unique_lock lock(s->mu);
      s->cv.wait(lock, [&] { return !s->outq.empty() || s->closing; });
      if (s->outq.empty()) break;
      next = std::move(s->outq.front());
      s->outq.pop_front();
    }
    try {
      net::send_all(s->sock.get(), next);
    } catch (const net::NetError&) {
      std::lock_guard lock(s->mu);
      s->closing = true;
      s->outq.clear();
      break;
    }
  }
  ::shutdown(s->sock.get(), SHUT_RDWR);
  s->finished.fetch_add(1);
}

}  // namespace benchkit::broker
