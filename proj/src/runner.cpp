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
#include "benchkit/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <condition_variable>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "benchkit/broker.hpp"
#include "benchkit/client.hpp"
#include "benchkit/clock.hpp"
#include "benchkit/stats.hpp"

namespace benchkit::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string iso_time(std::int64_t wall_ns) {
  const std::time_t secs = static_cast<std::time_t>(wall_ns / 1'000'000'000);
  const auto millis = (wall_ns / 1'000'000) % 1000;
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(secs), millis);
}

class EventLog {
 public:
  void add(EventKind kind, std::int64_t publisher = -1, std::int64_t at = 0) {
    std::lock_guard lock(mu_);
    events_.push_back(Event{kind, at != 0 ? at : mono_now_ns(), publisher});
  }
  std::vector<Event> take() {
    std::lock_guard lock(mu_);
    return std::move(events_);
  }

 private:
  std::mutex mu_;
  std::vector<Event> events_;
};

// Single consumer of deliveries for one run; fed from the subscriber's I/O thread.
class Collector {
 public:
  Collector(report::CellKey key, std::uint32_t repetition, std::string base_topic, std::uint32_t publishers,
            std::uint32_t per_publisher, std::size_t payload_size)
      : key_(std::move(key)),
        repetition_(repetition),
        prefix_(std::move(base_topic) + "/p"),
        publishers_(publishers),
        per_publisher_(per_publisher),
        payload_size_(payload_size),
        expected_(static_cast<std::uint64_t>(publishers) * per_publisher) {}

  void on_message(const client::IncomingMessage& msg) {
    std::lock_guard lock(mu_);
    if (cut_) return;
    const auto publisher = parse_publisher(msg.publish.topic);
    if (!publisher) {
      ++strays_;
      return;
    }
    const auto outcome = payload::extract_latency(msg.publish.payload, msg.received_ns);
    if (std::holds_alternative<payload::MalformedSample>(outcome)) {
      if (settled() < expected_) {
        ++exclusions_;
      } else {
        ++strays_;
      }
      spdlog::debug("excluded sample on {}: {}", msg.publish.topic, std::get<payload::MalformedSample>(outcome).reason);
      cv_.notify_all();
      return;
    }
    const auto& sample = std::get<payload::Sample>(outcome);
    if (sample.sequence >= per_publisher_) {
      ++strays_;
      return;
    }
    if (!seen_.emplace(*publisher, sample.sequence).second) {
      ++duplicates_;
      return;
    }
    if (settled() >= expected_) {
      ++strays_;
      return;
    }
    records_.push_back(payload::LatencyRecord{key_.broker, key_.scenario, key_.test, repetition_, *publisher,
                                              sample.sequence, sample.latency, payload_size_, wall_now_ns()});
    cv_.notify_all();
  }

  bool wait_until(MonoTime deadline) {
    std::unique_lock lock(mu_);
    return cv_.wait_until(lock, deadline, [&] { return settled() >= expected_; });
  }

  // Freezes the tallies; later deliveries are ignored.
  void cut(RunResult& r) {
    std::lock_guard lock(mu_);
    cut_ = true;
    r.records = records_;
    r.exclusions = exclusions_;
    r.duplicates = duplicates_;
    r.strays = strays_;
    r.undelivered = expected_ - settled();
  }

 private:
  std::uint64_t settled() const { return records_.size() + exclusions_; }

  std::optional<std::uint32_t> parse_publisher(std::string_view topic) const {
    if (!topic.starts_with(prefix_)) return std::nullopt;
    const auto digits = topic.substr(prefix_.size());
    std::uint32_t v = 0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || end != digits.data() + digits.size() || digits.empty()) return std::nullopt;
    if (v >= publishers_) return std::nullopt;
    return v;
  }

  report::CellKey key_;
  std::uint32_t repetition_;
  std::string prefix_;
  std::uint32_t publishers_;
  std::uint32_t per_publisher_;
  std::size_t payload_size_;
  std::uint64_t expected_;

  std::mutex mu_;
  std::condition_variable cv_;
  bool cut_ = false;
  std::vector<payload::LatencyRecord> records_;
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen_;
  std::uint64_t exclusions_ = 0;
  std::uint64_t duplicates_ = 0;
  std::uint64_t strays_ = 0;
};

client::ClientConfig client_config(const plan::TestSpec& t, std::string id) {
  client::ClientConfig c;
  c.client_id = std::move(id);
  c.keep_alive = t.keep_alive;
  c.connect_timeout = t.connect_timeout;
  c.ack_timeout = t.ack_timeout;
  c.max_retransmits = t.max_retransmits;
  return c;
}

json faults_json(const broker::FaultPlan& f) {
  json j{{"drop_pubacks", f.drop_first_n_pubacks}, {"connack", f.connack_return_code}};
  j["grant_qos"] = f.grant_qos_override ? json(static_cast<int>(*f.grant_qos_override)) : json(nullptr);
  return j;
}

json plan_metadata(const plan::TestPlan& plan, const RunOptions& opts) {
  json brokers = json::array();
  for (const auto& b : plan.brokers) {
    json jb{{"name", b.name},
            {"language", b.metadata.language},
            {"arm64_supported", b.metadata.arm64_supported},
            {"mqtt311", b.metadata.mqtt311},
            {"mqtt5", b.metadata.mqtt5},
            {"embedded_stub", b.embedded_stub}};
    if (b.embedded_stub) {
      jb["faults"] = faults_json(b.faults);
    } else {
      jb["address"] = b.endpoint.to_string();
    }
    brokers.push_back(std::move(jb));
  }
  json scenarios = json::array();
  for (const auto& s : plan.scenarios)
    scenarios.push_back({{"name", s.name}, {"latency_ms", s.latency_ms}, {"jitter_ms", s.jitter_ms}, {"loss_pct", s.loss_pct}});
  json tests = json::array();
  for (const auto& t : plan.tests) {
    tests.push_back({{"name", t.name},
                     {"kind", plan::test_kind_name(t.kind)},
                     {"publishers", t.publisher_threads},
                     {"interval_ms", t.publish_interval.count()},
                     {"messages_per_publisher", t.messages_per_publisher},
                     {"payload_size", t.message_size()},
                     {"qos", t.qos},
                     {"repetitions", t.repetitions},
                     {"warmup_runs", t.warmup_runs},
                     {"drain_timeout_ms", t.drain_timeout().count()},
                     {"connect_timeout_ms", t.connect_timeout.count()},
                     {"ack_timeout_ms", t.ack_timeout.count()},
                     {"max_retransmits", t.max_retransmits},
                     {"keep_alive_s", t.keep_alive.count()}});
  }
  const bool partial = !opts.only_brokers.empty() || opts.only_scenario.has_value();
  return json{
      {"tool", "benchkit"},
      {"seed", effective_seed(plan)},
      {"seed_source", plan.seed ? "plan" : "default"},
      {"units", {{"latency", "ms"}, {"payload_size", "bytes"}, {"size_suffixes", "binary: 1KB = 1024 B, 1MB = 1048576 B"}}},
      {"quantile_method", "linear interpolation between closest ranks, h = (n - 1) q"},
      {"pooling", "repetitions pooled into one distribution per cell; per-repetition stats kept"},
      {"loss_model",
       {{"segment_size", plan.proxy.loss.segment_size},
        {"rtt_multiplier", plan.proxy.loss.rtt_multiplier},
        {"penalty", "max(1 ms, rtt_multiplier * 2 * latency_ms) per chunk with at least one lost segment"}}},
      {"delay_model", "normal(latency_ms, jitter_ms) per chunk and direction, clamped at 0, FIFO release; delay and loss "
                      "draws come from separate seeded streams"},
      {"publish_schedule", "publisher i of n starts at i * interval / n, then every interval"},
      {"dedup", "(publisher, sequence), first arrival wins"},
      {"ack_policy", "PUBACK timeout then DUP retransmit, up to max_retransmits"},
      {"filters", {{"only", opts.only_brokers}, {"scenario", opts.only_scenario ? json(*opts.only_scenario) : json(nullptr)},
                   {"partial_matrix", partial}}},
      {"brokers", std::move(brokers)},
      {"scenarios", std::move(scenarios)},
      {"tests", std::move(tests)}};
}

json repetition_json(const RunResult& r) {
  return json{{"repetition", r.repetition},
              {"expected", r.expected},
              {"records", r.records.size()},
              {"exclusions", r.exclusions},
              {"undelivered", r.undelivered},
              {"duplicates", r.duplicates},
              {"strays", r.strays},
              {"publish_failures", r.publish_failures},
              {"drain_timed_out", r.drain_timed_out}};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw RunnerError(RunnerError::Kind::Io, fmt::format("cannot read '{}'", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> to_ms(const std::vector<payload::LatencyRecord>& records) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(static_cast<double>(r.latency.count()) / 1e6);
  return v;
}

template <class T>
T parse_field(std::string_view s) {
  T v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw RunnerError(RunnerError::Kind::Io, fmt::format("bad CSV field '{}'", s));
  return v;
}

}  // namespace

std::chrono::nanoseconds staggered_start(std::uint32_t i, std::uint32_t n, std::chrono::nanoseconds interval) {
  if (n == 0) throw std::invalid_argument("staggered_start: n must be >= 1");
  return std::chrono::nanoseconds(static_cast<std::int64_t>(i) * interval.count() / static_cast<std::int64_t>(n));
}

std::string cell_topic(const report::CellKey& key, std::uint32_t repetition, bool warmup) {
  return warmup ? fmt::format("bench/{}/{}/{}/w{}", key.broker, key.scenario, key.test, repetition)
                : fmt::format("bench/{}/{}/{}/{}", key.broker, key.scenario, key.test, repetition);
}

std::uint64_t cell_seed(std::uint64_t plan_seed, std::string_view scenario, std::uint32_t repetition, bool warmup) {
  std::uint64_t h = splitmix64(plan_seed);
  h = splitmix64(h ^ fnv1a(scenario));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(repetition) << 1 | (warmup ? 1 : 0)));
  return h;
}

std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::SubscriberConnected: return "subscriber_connected";
    case EventKind::SubAck: return "suback";
    case EventKind::PublishersConnected: return "publishers_connected";
    case EventKind::FirstPublish: return "first_publish";
    case EventKind::LastPublish: return "last_publish";
    case EventKind::Drained: return "drained";
  }
  return "unknown";
}

std::uint64_t effective_seed(const plan::TestPlan& plan) { return plan.seed.value_or(0); }

void probe_broker(const net::Endpoint& ep, milliseconds timeout) {
  std::string last;
  for (int attempt = 0; attempt < 3; ++attempt) {
    try {
      net::dial(ep, timeout);
      return;
    } catch (const net::NetError& e) {
      last = e.what();
    }
    std::this_thread::sleep_for(milliseconds(200));
  }
  throw RunnerError(RunnerError::Kind::BrokerUnreachable, fmt::format("broker {} unreachable: {}", ep.to_string(), last));
}

RunResult run_cell(const plan::TestPlan& plan, const plan::BrokerEndpoint& broker, const impair::Scenario& scenario,
                   const plan::TestSpec& test, std::uint32_t repetition, bool warmup) {
  if (test.publisher_threads == 0) throw std::invalid_argument("publisher_threads must be >= 1");
  RunResult r;
  r.key = report::CellKey{broker.name, scenario.name, test.name};
  r.repetition = repetition;
  r.warmup = warmup;
  r.expected = test.expected_messages();
  r.seed = cell_seed(effective_seed(plan), scenario.name, repetition, warmup);

  std::unique_ptr<broker::StubBroker> stub;
  net::Endpoint upstream = broker.endpoint;
  if (broker.embedded_stub) {
    stub = broker::StubBroker::start(net::Endpoint{"127.0.0.1", 0}, broker.faults);
    upstream = stub->endpoint();
  }
  probe_broker(upstream, test.connect_timeout);

  proxy::ProxyOptions po;
  po.listen = plan.proxy.listen;
  po.upstream = upstream;
  po.scenario = scenario;
  po.loss = plan.proxy.loss;
  po.seed = r.seed;
  std::unique_ptr<proxy::Proxy> px;
  try {
    px = proxy::Proxy::start(po);
  } catch (const proxy::ProxyError& e) {
    throw RunnerError(e.kind() == proxy::ProxyError::Kind::UpstreamUnreachable ? RunnerError::Kind::BrokerUnreachable
                                                                                : RunnerError::Kind::Setup,
                      e.what());
  }
  const net::Endpoint ep = px->endpoint();
  r.started_at_wall_ns = wall_now_ns();

  const std::string topic = cell_topic(r.key, repetition, warmup);
  const std::string id_stem = fmt::format("bk{:08x}", static_cast<std::uint32_t>(fnv1a(topic)));
  const std::uint32_t n = test.publisher_threads;
  const std::uint32_t m = test.messages_per_publisher;
  const std::size_t size = test.message_size();
  const auto qos = test.qos == 0 ? codec::QoS::AtMostOnce : codec::QoS::AtLeastOnce;

  EventLog events;
  Collector collector(r.key, repetition, topic, n, m, size);
  std::unique_ptr<client::Session> sub;
  std::vector<std::unique_ptr<client::Session>> pubs;
  try {
    sub = client::Session::connect(ep, client_config(test, id_stem + "s"),
                                   [&collector](const client::IncomingMessage& msg) { collector.on_message(msg); });
    events.add(EventKind::SubscriberConnected);
    sub->subscribe(topic + "/#", qos);
    events.add(EventKind::SubAck);
    pubs.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i)
      pubs.push_back(client::Session::connect(ep, client_config(test, fmt::format("{}p{}", id_stem, i))));
    events.add(EventKind::PublishersConnected);
  } catch (const client::ClientError& e) {
    throw RunnerError(RunnerError::Kind::Setup, fmt::format("{} session setup failed: {}", r.key.broker, e.what()));
  } catch (const net::NetError& e) {
    throw RunnerError(RunnerError::Kind::Setup, fmt::format("{} session setup failed: {}", r.key.broker, e.what()));
  }

  std::atomic<std::uint64_t> failures{0};
  const auto interval = std::chrono::duration_cast<std::chrono::nanoseconds>(test.publish_interval);
  const MonoTime t0 = MonoClock::now() + milliseconds(20);
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      client::Session& s = *pubs[i];
      const std::string my_topic = fmt::format("{}/p{}", topic, i);
      const MonoTime start = t0 + staggered_start(i, n, interval);
      for (std::uint32_t k = 0; k < m; ++k) {
        std::this_thread::sleep_until(start + k * interval);
        const std::int64_t now = mono_now_ns();
        const codec::Bytes body = test.kind == plan::TestKind::Offset ? payload::make_offset_payload(k, now)
                                                                      : payload::make_bench_payload(size, k, now);
        if (k == 0) events.add(EventKind::FirstPublish, i, now);
        try {
          if (qos == codec::QoS::AtLeastOnce) {
            s.publish_qos1(my_topic, body);
          } else {
            s.publish_qos0(my_topic, body);
          }
        } catch (const client::ClientError& e) {
          ++failures;
          spdlog::debug("publisher {} message {}: {}", i, k, e.what());
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  events.add(EventKind::LastPublish);

  const bool complete = collector.wait_until(MonoClock::now() + test.drain_timeout());
  collector.cut(r);
  events.add(EventKind::Drained);
  r.drain_timed_out = !complete;
  r.publish_failures = failures.load();

  for (auto& p : pubs) p->disconnect();
  sub->disconnect();
  pubs.clear();
  sub.reset();
  if (!px->wait_idle(std::chrono::seconds(5))) spdlog::warn("proxy relays still busy after teardown of {}", topic);
  px->shutdown();
  r.proxy_stats = px->stats();
  r.schedule = px->schedule_log();
  std::sort(r.schedule.begin(), r.schedule.end(), [](const auto& a, const auto& b) {
    return std::tie(a.connection, a.direction, a.chunk) < std::tie(b.connection, b.direction, b.chunk);
  });
  r.events = events.take();
  r.finished_at_wall_ns = wall_now_ns();
  if (stub) stub->shutdown();
  return r;
}

std::size_t PlanOutcome::count(std::string_view status) const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [&](const CellOutcome& c) { return c.status == status; }));
}

std::string records_to_csv(const std::vector<payload::LatencyRecord>& records) {
  std::string out = "broker,scenario,test,repetition,publisher,sequence,latency_ns,payload_size,received_at_wall_ns\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.broker, r.scenario, r.test, r.repetition, r.publisher,
                       r.sequence, r.latency.count(), r.payload_size, r.received_at_wall_ns);
  }
  return out;
}

std::vector<payload::LatencyRecord> records_from_csv(std::string_view text) {
  std::vector<payload::LatencyRecord> out;
  bool header = true;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    const std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 9) throw RunnerError(RunnerError::Kind::Io, fmt::format("bad record line '{}'", line));
    payload::LatencyRecord r;
    r.broker = std::string(f[0]);
    r.scenario = std::string(f[1]);
    r.test = std::string(f[2]);
    r.repetition = parse_field<std::uint32_t>(f[3]);
    r.publisher = parse_field<std::uint32_t>(f[4]);
    r.sequence = parse_field<std::uint32_t>(f[5]);
    r.latency = Nanos(parse_field<std::int64_t>(f[6]));
    r.payload_size = parse_field<std::size_t>(f[7]);
    r.received_at_wall_ns = parse_field<std::int64_t>(f[8]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string schedule_to_csv(const std::vector<proxy::ScheduleEntry>& schedule) {
  std::string out = "connection,direction,chunk,bytes,delay_ns,penalty_ns,arrival_ns,release_ns,written_ns\n";
  for (const auto& e : schedule) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", e.connection, proxy::direction_name(e.direction), e.chunk,
                       e.timing.bytes, e.timing.delay_ns, e.timing.penalty_ns, e.timing.arrival_ns,
                       e.timing.release_ns, e.written_ns);
  }
  return out;
}

json strip_wall_clock(json summary) {
  summary.erase("timing");
  return summary;
}

PlanOutcome run_plan(const plan::TestPlan& plan, const RunOptions& opts) {
  PlanOutcome outcome;
  outcome.output_dir = plan.output_dir;
  const fs::path& out = plan.output_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw RunnerError(RunnerError::Kind::Io, fmt::format("cannot create '{}': {}", out.string(), ec.message()));

  const std::int64_t plan_started = wall_now_ns();
  const json metadata = plan_metadata(plan, opts);
  json summary{{"schema", "benchkit.summary.v1"}, {"metadata", metadata}, {"cells", json::array()}};
  auto progress = [&](const std::string& line) {
    if (opts.progress) *opts.progress << line << std::endl;
    spdlog::info("{}", line);
  };

  // One stub per embedded broker, shared by all of its cells.
  std::vector<std::unique_ptr<broker::StubBroker>> stubs;
  std::vector<plan::BrokerEndpoint> brokers = plan.brokers;
  for (auto& b : brokers) {
    if (!b.embedded_stub) continue;
    stubs.push_back(broker::StubBroker::start(net::Endpoint{"127.0.0.1", 0}, b.faults));
    b.endpoint = stubs.back()->endpoint();
    b.embedded_stub = false;
  }

  const std::size_t total = plan.cell_count();
  std::size_t ordinal = 0;
  for (const auto& b : brokers) {
    for (const auto& s : plan.scenarios) {
      for (const auto& t : plan.tests) {
        ++ordinal;
        const report::CellKey key{b.name, s.name, t.name};
        const fs::path dir = out / b.name / s.name / t.name;
        const fs::path cell_file = dir / "cell.json";
        CellOutcome co{key, "failed", false, ""};

        if (opts.resume && fs::exists(cell_file)) {
          try {
            const json prior = json::parse(read_file(cell_file));
            const std::string status = prior.at("cell").at("status").get<std::string>();
            if (status == "complete" || status == "partial") {
              std::vector<report::RepetitionSamples> samples;
              for (const auto& jr : prior.at("cell").at("repetitions")) {
                const auto rep = jr.at("repetition").get<std::uint32_t>();
                const auto records = records_from_csv(read_file(dir / fmt::format("rep{}.csv", rep)));
                samples.push_back(report::RepetitionSamples{rep, to_ms(records), jr.at("exclusions").get<std::uint64_t>(),
                                                            jr.at("undelivered").get<std::uint64_t>()});
              }
              co.status = status;
              co.resumed = true;
              outcome.results.push_back(report::build_cell(key, t.message_size(), samples, status));
              outcome.cells.push_back(co);
              summary["cells"].push_back(prior.at("cell"));
              progress(fmt::format("[{}/{}] {}/{}/{}: {} (kept from previous run)", ordinal, total, b.name, s.name,
                                   t.name, status));
              continue;
            }
          } catch (const std::exception& e) {
            spdlog::warn("ignoring unreadable {}: {}", cell_file.string(), e.what());
          }
        }

        fs::create_directories(dir / "schedule", ec);
        const std::int64_t cell_started = wall_now_ns();
        std::vector<report::RepetitionSamples> samples;
        json reps = json::array();
        std::string status = "complete";
        try {
          for (std::uint32_t w = 0; w < t.warmup_runs; ++w) run_cell(plan, b, s, t, w, true);
          for (std::uint32_t k = 0; k < t.repetitions; ++k) {
            RunResult r = run_cell(plan, b, s, t, k, false);
            report::write_file_atomic(dir / fmt::format("rep{}.csv", k), records_to_csv(r.records));
            report::write_file_atomic(dir / "schedule" / fmt::format("rep{}.csv", k), schedule_to_csv(r.schedule));
            if (r.drain_timed_out) status = "partial";
            reps.push_back(repetition_json(r));
            samples.push_back(report::RepetitionSamples{k, to_ms(r.records), r.exclusions, r.undelivered});
            progress(fmt::format("[{}/{}] {}/{}/{} rep {}/{}: {}/{} delivered{}", ordinal, total, b.name, s.name,
                                 t.name, k + 1, t.repetitions, r.records.size(), r.expected,
                                 r.drain_timed_out ? " (drain timeout)" : ""));
          }
        } catch (const std::exception& e) {
          status = "failed";
          co.error = e.what();
          progress(fmt::format("[{}/{}] {}/{}/{}: failed: {}", ordinal, total, b.name, s.name, t.name, e.what()));
        }
        co.status = status;

        json cell{{"broker", b.name},
                  {"scenario", s.name},
                  {"test", t.name},
                  {"status", status},
                  {"payload_size", t.message_size()},
                  {"expected_per_repetition", t.expected_messages()},
                  {"repetitions", std::move(reps)}};
        if (!co.error.empty()) cell["error"] = co.error;
        const json cell_doc{{"cell", cell},
                            {"timing",
                             {{"started_at", iso_time(cell_started)},
                              {"finished_at", iso_time(wall_now_ns())},
                              {"duration_ms", (wall_now_ns() - cell_started) / 1'000'000}}}};
        report::write_file_atomic(cell_file, cell_doc.dump(2) + "\n");
        summary["cells"].push_back(cell);
        outcome.results.push_back(report::build_cell(key, t.message_size(), samples, status));
        outcome.cells.push_back(std::move(co));
        report::write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
      }
    }
  }
  for (auto& st : stubs) st->shutdown();

  const std::int64_t plan_finished = wall_now_ns();
  summary["totals"] = {{"cells", outcome.cells.size()},
                       {"complete", outcome.count("complete")},
                       {"partial", outcome.count("partial")},
                       {"failed", outcome.count("failed")}};
  summary["timing"] = {{"started_at", iso_time(plan_started)},
                       {"finished_at", iso_time(plan_finished)},
                       {"duration_ms", (plan_finished - plan_started) / 1'000'000}};
  report::write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  report::export_json(outcome.results, metadata, out / "results.json");
  report::export_csv(outcome.results, out);
  report::export_boxplot_data(outcome.results, out / "boxplot");
  report::write_file_atomic(out / "table.txt", report::render_median_iqr_table(outcome.results, report::TableStyle::Plain));
  report::write_file_atomic(out / "table.md",
                            report::render_median_iqr_table(outcome.results, report::TableStyle::Markdown));
  return outcome;
}

}  // namespace benchkit::runner
