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
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "benchkit/broker.hpp"
#include "benchkit/runner.hpp"
#include "support/fake_broker.hpp"

using namespace benchkit;
using namespace benchkit::runner;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() / fmt::format("bk_runner_{}_{}", ::getpid(), n++);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

plan::TestPlan stub_plan(const fs::path& out, std::string tests_yaml, std::string scenarios = "[local]") {
  auto p = plan::load_plan(fmt::format("brokers: [{{name: stub, stub: true}}]\nscenarios: {}\ntests:\n{}\nseed: 5\n",
                                       scenarios, tests_yaml));
  p.output_dir = out;
  return p;
}

}  // namespace

TEST_CASE("staggered start times") {
  const std::chrono::nanoseconds iv = 250ms;
  CHECK(staggered_start(0, 100, iv) == 0ns);
  CHECK(staggered_start(50, 100, iv) == 125ms);
  CHECK(staggered_start(99, 100, iv) == 247'500'000ns);
  CHECK(staggered_start(0, 1, iv) == 0ns);
  CHECK(staggered_start(2, 3, 1ns) == 0ns);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const auto n = static_cast<std::uint32_t>(1 + rng() % 500);
    const auto interval = std::chrono::nanoseconds(rng() % 2'000'000'000);
    std::chrono::nanoseconds prev{-1};
    for (std::uint32_t k = 0; k < n; k += 1 + static_cast<std::uint32_t>(rng() % 7)) {
      const auto s = staggered_start(k, n, interval);
      CHECK(s >= 0ns);
      CHECK(s < std::max(interval, 1ns));
      CHECK(s > prev);
      // exact value within rounding of the ideal i * interval / n
      const long double ideal = static_cast<long double>(k) * interval.count() / n;
      CHECK(std::abs(static_cast<long double>(s.count()) - ideal) < 1.0L);
      prev = s;
      if (interval < std::chrono::nanoseconds(n)) break;
    }
  }
}

TEST_CASE("topics and seeds") {
  const report::CellKey key{"emqx", "worst", "p1MB"};
  CHECK(cell_topic(key, 3) == "bench/emqx/worst/p1MB/3");
  CHECK(cell_topic(key, 0, true) == "bench/emqx/worst/p1MB/w0");

  CHECK(cell_seed(1, "optimal", 0, false) == cell_seed(1, "optimal", 0, false));
  CHECK(cell_seed(1, "optimal", 0, false) != cell_seed(1, "optimal", 1, false));
  CHECK(cell_seed(1, "optimal", 0, false) != cell_seed(1, "optimal", 0, true));
  CHECK(cell_seed(1, "optimal", 0, false) != cell_seed(1, "worst", 0, false));
  CHECK(cell_seed(1, "optimal", 0, false) != cell_seed(2, "optimal", 0, false));

  for (const char* name : {"subscriber_connected", "suback", "publishers_connected", "first_publish", "last_publish",
                           "drained"})
    CHECK_FALSE(std::string(name).empty());
  CHECK(event_kind_name(EventKind::SubAck) == "suback");
}

TEST_CASE("record csv round trip") {
  std::mt19937_64 rng(3);
  std::vector<payload::LatencyRecord> recs;
  for (int i = 0; i < 200; ++i) {
    recs.push_back(payload::LatencyRecord{"mosquitto", "optimal", "p10KB", static_cast<std::uint32_t>(rng() % 10),
                                          static_cast<std::uint32_t>(rng() % 100), static_cast<std::uint32_t>(rng()),
                                          Nanos(static_cast<std::int64_t>(rng() % 1'000'000'000)), 10240,
                                          static_cast<std::int64_t>(rng() >> 2)});
  }
  const auto csv = records_to_csv(recs);
  CHECK(csv.rfind("broker,scenario,test,repetition,publisher,sequence,", 0) == 0);
  CHECK(records_from_csv(csv) == recs);
  CHECK(records_from_csv(records_to_csv({})).empty());
  CHECK_THROWS_AS(records_from_csv("header\na,b,c\n"), RunnerError);
}

TEST_CASE("one offset run with a full publisher fleet") {
  TempDir tmp;
  auto p = stub_plan(tmp.path, "  - {name: offset, kind: offset, publishers: 100, interval_ms: 250}");
  auto b = p.brokers[0];
  auto stub = broker::StubBroker::start({"127.0.0.1", 0});
  b.embedded_stub = false;
  b.endpoint = stub->endpoint();
  const auto r = run_cell(p, b, p.scenarios[0], p.tests[0], 0);
  CHECK(r.expected == 100);
  CHECK(r.records.size() == 100);
  CHECK(r.exclusions == 0);
  CHECK(r.undelivered == 0);
  CHECK(r.duplicates == 0);
  CHECK(r.publish_failures == 0);
  CHECK_FALSE(r.drain_timed_out);
  CHECK(r.accounting_holds());
  std::set<std::uint32_t> pubs;
  for (const auto& rec : r.records) {
    pubs.insert(rec.publisher);
    CHECK(rec.payload_size == 27);
    CHECK(rec.latency >= Nanos(0));
    CHECK(rec.broker == "stub");
  }
  CHECK(pubs.size() == 100);

  std::int64_t suback = -1;
  std::int64_t first_publish = std::numeric_limits<std::int64_t>::max();
  std::int64_t last_first_publish = 0;
  std::size_t firsts = 0;
  for (const auto& e : r.events) {
    if (e.kind == EventKind::SubAck) suback = e.mono_ns;
    if (e.kind == EventKind::FirstPublish) {
      ++firsts;
      first_publish = std::min(first_publish, e.mono_ns);
      last_first_publish = std::max(last_first_publish, e.mono_ns);
    }
  }
  REQUIRE(suback > 0);
  CHECK(firsts == 100);
  CHECK(suback < first_publish);
  // publishers are spread over the interval
  CHECK(last_first_publish - first_publish >= 200'000'000);
  CHECK(last_first_publish - first_publish < 400'000'000);
  CHECK(r.proxy_stats.connections == 101);
  CHECK_FALSE(r.schedule.empty());
}

TEST_CASE("unreachable broker fails before anything is published") {
  TempDir tmp;
  auto p = stub_plan(tmp.path, "  - {name: offset, kind: offset, publishers: 2}");
  auto b = p.brokers[0];
  b.embedded_stub = false;
  std::uint16_t port = 0;
  {
    auto l = net::listen_on({"127.0.0.1", 0});
    port = net::local_port(l);
  }
  b.endpoint = {"127.0.0.1", port};
  try {
    run_cell(p, b, p.scenarios[0], p.tests[0], 0);
    FAIL("expected BrokerUnreachable");
  } catch (const RunnerError& e) {
    CHECK(e.kind() == RunnerError::Kind::BrokerUnreachable);
  }
  CHECK_THROWS_AS(probe_broker(b.endpoint, 100ms), RunnerError);
}

TEST_CASE("redelivered messages are counted once") {
  TempDir tmp;
  auto p = stub_plan(tmp.path, "  - {name: offset, kind: offset, publishers: 5, interval_ms: 20, ack_timeout_ms: 200}");
  auto b = p.brokers[0];
  b.faults = broker::parse_fault_plan("drop_pubacks=3");
  const auto r = run_cell(p, b, p.scenarios[0], p.tests[0], 0);
  CHECK(r.records.size() == 5);
  CHECK(r.duplicates == 3);
  CHECK(r.accounting_holds());
}

TEST_CASE("a drain timeout leaves the run partial but accounted") {
  // acks everything, forwards only publisher 0
  bktest::FakeBroker lossy([](bktest::RawConn& c, const codec::ControlPacket& p) {
    static std::mutex mu;
    static bktest::RawConn* subscriber = nullptr;
    std::lock_guard lock(mu);
    if (auto* s = std::get_if<codec::Subscribe>(&p)) {
      subscriber = &c;
      c.send(codec::SubAck{s->packet_id, {1}});
    } else if (auto* pub = std::get_if<codec::Publish>(&p)) {
      c.send(codec::PubAck{*pub->packet_id});
      if (subscriber && pub->topic.ends_with("/p0")) {
        codec::Publish fwd = *pub;
        fwd.qos = codec::QoS::AtMostOnce;
        fwd.packet_id.reset();
        subscriber->send(fwd);
      }
    } else if (std::holds_alternative<codec::Disconnect>(p) && &c == subscriber) {
      subscriber = nullptr;
    }
  });
  TempDir tmp;
  auto p = stub_plan(tmp.path, "  - {name: offset, kind: offset, publishers: 4, interval_ms: 10, drain_timeout_ms: 300, repetitions: 1, warmup_runs: 0}");
  auto b = p.brokers[0];
  b.embedded_stub = false;
  b.endpoint = lossy.endpoint();
  const auto t0 = MonoClock::now();
  const auto r = run_cell(p, b, p.scenarios[0], p.tests[0], 0);
  CHECK(MonoClock::now() - t0 >= 300ms);
  CHECK(r.drain_timed_out);
  CHECK(r.records.size() == 1);
  CHECK(r.undelivered == 3);
  CHECK(r.accounting_holds());

  p.output_dir = tmp.path / "plan";
  p.brokers[0] = b;
  const auto outcome = run_plan(p);
  CHECK(outcome.count("partial") == 1);
  CHECK_FALSE(outcome.fully_successful());
}

TEST_CASE("a plan writes per-repetition files, a summary and reports") {
  TempDir tmp;
  auto p = stub_plan(tmp.path, "  - {name: offset, kind: offset, publishers: 5, interval_ms: 20, repetitions: 10}",
                     "[local, optimal, worst]");
  std::ostringstream progress;
  const auto outcome = run_plan(p, RunOptions{{}, std::nullopt, true, &progress});
  CHECK(outcome.fully_successful());
  CHECK(outcome.count("complete") == 3);
  for (const char* s : {"local", "optimal", "worst"}) {
    const auto dir = tmp.path / "stub" / s / "offset";
    for (int k = 0; k < 10; ++k) {
      CHECK(fs::exists(dir / fmt::format("rep{}.csv", k)));
      CHECK(fs::exists(dir / "schedule" / fmt::format("rep{}.csv", k)));
      CHECK(records_from_csv(slurp(dir / fmt::format("rep{}.csv", k))).size() == 5);
    }
    CHECK_FALSE(fs::exists(dir / "rep10.csv"));
    const auto cell = nlohmann::json::parse(slurp(dir / "cell.json"));
    CHECK(cell["cell"]["status"] == "complete");
    CHECK(cell["cell"]["repetitions"].size() == 10);
    CHECK(cell.contains("timing"));
  }
  for (const char* f : {"summary.json", "results.json", "stats.csv", "stats_pooled.csv", "table.txt", "table.md"})
    CHECK(fs::exists(tmp.path / f));
  CHECK(fs::exists(tmp.path / "boxplot" / "stub__worst__offset.json"));
  const auto summary = nlohmann::json::parse(slurp(tmp.path / "summary.json"));
  CHECK(summary["totals"]["complete"] == 3);
  CHECK(summary["cells"].size() == 3);
  CHECK(summary.contains("timing"));
  CHECK_FALSE(strip_wall_clock(summary).contains("timing"));
  CHECK(progress.str().find("[3/3]") != std::string::npos);

  const auto cells = report::import_json(tmp.path / "results.json");
  REQUIRE(cells.size() == 3);
  for (const auto& c : cells) {
    REQUIRE(c.pooled);
    CHECK(c.pooled->n == 50);
  }

  SUBCASE("resume keeps finished cells untouched") {
    std::map<fs::path, std::string> before;
    for (const auto& e : fs::recursive_directory_iterator(tmp.path / "stub"))
      if (e.is_regular_file()) before[e.path()] = slurp(e.path());
    const auto again = run_plan(p, RunOptions{{}, std::nullopt, true, nullptr});
    CHECK(again.count("complete") == 3);
    for (const auto& c : again.cells) CHECK(c.resumed);
    for (const auto& [path, text] : before) CHECK(slurp(path) == text);
    const auto s2 = nlohmann::json::parse(slurp(tmp.path / "summary.json"));
    CHECK(strip_wall_clock(s2) == strip_wall_clock(summary));
  }
  SUBCASE("a failed cell is rerun") {
    const auto cell_file = tmp.path / "stub" / "worst" / "offset" / "cell.json";
    auto doc = nlohmann::json::parse(slurp(cell_file));
    doc["cell"]["status"] = "failed";
    std::ofstream(cell_file) << doc.dump();
    const auto again = run_plan(p, RunOptions{{}, std::nullopt, true, nullptr});
    CHECK(again.count("complete") == 3);
    for (const auto& c : again.cells) CHECK(c.resumed == (c.key.scenario != "worst"));
  }
}

TEST_CASE("summary is identical for the same seed") {
  TempDir a;
  TempDir b;
  auto pa = stub_plan(a.path, "  - {name: offset, kind: offset, publishers: 3, interval_ms: 10, repetitions: 2}", "[optimal]");
  auto pb = pa;
  pb.output_dir = b.path;
  run_plan(pa);
  run_plan(pb);
  const auto sa = nlohmann::json::parse(slurp(a.path / "summary.json"));
  const auto sb = nlohmann::json::parse(slurp(b.path / "summary.json"));
  CHECK(strip_wall_clock(sa) == strip_wall_clock(sb));
  CHECK(effective_seed(pa) == 5);
}

TEST_CASE("an unreachable broker marks its cells failed and the rest still run") {
  TempDir tmp;
  auto p = plan::load_plan(R"(
brokers:
  - {name: good, stub: true}
  - {name: gone, address: "127.0.0.1:1"}
scenarios: [local]
tests: [{name: offset, kind: offset, publishers: 2, interval_ms: 10, repetitions: 1, warmup_runs: 0}]
)");
  p.output_dir = tmp.path;
  const auto outcome = run_plan(p);
  CHECK_FALSE(outcome.fully_successful());
  CHECK(outcome.count("complete") == 1);
  CHECK(outcome.count("failed") == 1);
  const auto table = slurp(tmp.path / "table.txt");
  CHECK(table.find("—") != std::string::npos);
}
