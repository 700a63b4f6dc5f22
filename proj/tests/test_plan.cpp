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

#include <filesystem>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "benchkit/plan.hpp"

using namespace benchkit;
using namespace benchkit::plan;

namespace {

PlanError plan_error(std::string_view yaml) {
  try {
    load_plan(yaml);
  } catch (const PlanError& e) {
    return e;
  }
  FAIL("plan loaded without error");
  return PlanError(PlanError::Kind::Io, "", "");
}

constexpr std::string_view kMinimal = R"(
brokers:
  - name: mosquitto
tests:
  - name: offset
    kind: offset
)";

}  // namespace

TEST_CASE("minimal document gets the defaults") {
  const auto p = load_plan(kMinimal);
  REQUIRE(p.brokers.size() == 1);
  CHECK(p.brokers[0].endpoint.host == "127.0.0.1");
  CHECK(p.brokers[0].endpoint.port == 1883);
  CHECK_FALSE(p.brokers[0].embedded_stub);
  REQUIRE(p.scenarios.size() == 3);
  CHECK(p.scenarios[0].name == "local");
  CHECK(p.scenarios[1].name == "optimal");
  CHECK(p.scenarios[2].name == "worst");
  CHECK(p.scenarios[2].latency_ms == 6.25);
  REQUIRE(p.tests.size() == 1);
  const auto& t = p.tests[0];
  CHECK(t.kind == TestKind::Offset);
  CHECK(t.publisher_threads == 100);
  CHECK(t.publish_interval == std::chrono::milliseconds(250));
  CHECK(t.messages_per_publisher == 1);
  CHECK(t.qos == 1);
  CHECK(t.repetitions == 10);
  CHECK(t.warmup_runs == 1);
  CHECK(t.message_size() == 27);
  CHECK(t.expected_messages() == 100);
  CHECK(t.drain_timeout() == std::chrono::milliseconds(10'000));
  CHECK(p.output_dir == "results");
  CHECK_FALSE(p.seed.has_value());
  CHECK(p.proxy.loss.segment_size == 1460);
  CHECK(p.proxy.loss.rtt_multiplier == 1.5);
  CHECK(p.cell_count() == 3);
}

TEST_CASE("a full document") {
  const auto p = load_plan(R"(
seed: 1234
output_dir: out/here
proxy:
  listen: 127.0.0.1:0
  segment_size: 1000
  rtt_multiplier: 2
brokers:
  - {name: emqx, address: "10.0.0.2:1884"}
  - {name: stub, stub: true, faults: "drop_pubacks=2"}
  - {name: other, host: example.org, port: 2000, language: Go, arm64: true, mqtt5: true}
scenarios:
  - worst
  - {name: lan, latency_ms: 0.5, jitter_ms: 0.1, loss_pct: 0}
tests:
  - {name: big, kind: payload, payload_size: 1MB, publishers: 4, interval_ms: 100, repetitions: 3, warmup_runs: 0}
  - {name: timed, kind: payload, payload_size: 2048, drain_timeout_ms: 500}
)");
  CHECK(p.seed == 1234u);
  CHECK(p.output_dir == "out/here");
  CHECK(p.proxy.loss.segment_size == 1000);
  CHECK(p.proxy.loss.rtt_multiplier == 2.0);
  CHECK(p.brokers[0].endpoint.port == 1884);
  CHECK(p.brokers[0].metadata.language == "Erlang");
  CHECK(p.brokers[1].embedded_stub);
  CHECK(p.brokers[1].faults.drop_first_n_pubacks == 2);
  CHECK(p.brokers[2].endpoint.host == "example.org");
  CHECK(p.brokers[2].metadata.language == "Go");
  CHECK(p.brokers[2].metadata.arm64_supported);
  REQUIRE(p.scenarios.size() == 2);
  CHECK(p.scenarios[0].name == "worst");
  CHECK(p.scenarios[1].name == "lan");
  CHECK(p.scenarios[1].latency_ms == 0.5);
  REQUIRE(p.custom_scenarios.size() == 1);
  CHECK(p.tests[0].payload_size == 1024 * 1024);
  CHECK(p.tests[0].publisher_threads == 4);
  CHECK(p.tests[0].warmup_runs == 0);
  CHECK(p.tests[0].drain_timeout() == std::chrono::milliseconds(11'000));
  CHECK(p.tests[1].drain_timeout() == std::chrono::milliseconds(500));
  CHECK(p.cell_count() == 3 * 2 * 2);
}

TEST_CASE("cell count is the cross product") {
  std::string yaml = "brokers:\n";
  for (const char* b : {"mosquitto", "emqx", "rabbitmq", "vernemq", "hivemq"}) yaml += fmt::format("  - name: {}\n", b);
  yaml += "tests:\n";
  yaml += "  - {name: offset, kind: offset}\n";
  for (const char* s : {"1KB", "10KB", "1MB"}) yaml += fmt::format("  - {{name: p{}, kind: payload, payload_size: {}}}\n", s, s);
  const auto p = load_plan(yaml);
  CHECK(p.brokers.size() == 5);
  CHECK(p.tests.size() == 4);
  CHECK(p.cell_count() == 60);
}

TEST_CASE("unknown scenario name") {
  const auto e = plan_error(R"(
brokers: [{name: a}]
scenarios: [local, optimaal]
tests: [{name: t, kind: offset}]
)");
  CHECK(e.kind() == PlanError::Kind::UnknownScenario);
  CHECK(e.path() == "scenarios[1]");
  CHECK(std::string(e.what()).find("optimaal") != std::string::npos);
}

TEST_CASE("schema errors carry the path of the offending key") {
  struct Case {
    const char* yaml;
    const char* path;
  };
  const Case cases[] = {
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset, foo: 1}]", "tests[0].foo"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}, {name: u, kind: offset, publishers: 0}]", "tests[1].publishers"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: payload}]", "tests[0].payload_size"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset, payload_size: 10}]", "tests[0].payload_size"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: payload, payload_size: 8}]", "tests[0].payload_size"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: payload, payload_size: 1GB}]", "tests[0].payload_size"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset, qos: 2}]", "tests[0].qos"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset, repetitions: 0}]", "tests[0].repetitions"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: banana}]", "tests[0].kind"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}, {name: t, kind: offset}]", "tests[1]"},
      {"brokers: [{name: a, port: 0}]\ntests: [{name: t, kind: offset}]", "brokers[0].port"},
      {"brokers: [{name: a, faults: x}]\ntests: [{name: t, kind: offset}]", "brokers[0].faults"},
      {"brokers: [{name: a}, {name: a}]\ntests: [{name: t, kind: offset}]", "brokers[1]"},
      {"brokers: [{name: \"a/b\"}]\ntests: [{name: t, kind: offset}]", "brokers[0].name"},
      {"brokers: []\ntests: [{name: t, kind: offset}]", "brokers"},
      {"tests: [{name: t, kind: offset}]", "brokers"},
      {"brokers: [{name: a}]", "tests"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}]\nextra: 1", "extra"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}]\nscenarios: [local, local]", "scenarios[1]"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}]\nscenarios: [{name: local, latency_ms: 1}]", "scenarios[0]"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}]\nscenarios: [{name: x, loss_pct: 120}]", "scenarios[0]"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}]\nscenarios: [{name: x, latency_ms: -1}]", "scenarios[0]"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}]\nproxy: {segment_size: 0}", "proxy.segment_size"},
      {"brokers: [{name: a}]\ntests: [{name: t, kind: offset}]\nseed: -4", "seed"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.yaml);
    const auto e = plan_error(c.yaml);
    CHECK(e.kind() == PlanError::Kind::Schema);
    CHECK(e.path() == c.path);
  }
  CHECK(plan_error("brokers: [{name: a\n").kind() == PlanError::Kind::Schema);
  CHECK(plan_error("- 1\n- 2\n").kind() == PlanError::Kind::Schema);
}

TEST_CASE("sizes use binary units") {
  CHECK(parse_size("1024") == 1024);
  CHECK(parse_size("1KB") == 1024);
  CHECK(parse_size("10KB") == 10 * 1024);
  CHECK(parse_size("1MB") == 1024 * 1024);
  CHECK(parse_size("1 mib") == 1024 * 1024);
  CHECK(parse_size("16b") == 16);
  CHECK_THROWS_AS(parse_size("KB"), std::invalid_argument);
  CHECK_THROWS_AS(parse_size("3 furlongs"), std::invalid_argument);
}

TEST_CASE("known broker metadata") {
  const auto m = known_broker_metadata("Mosquitto");
  REQUIRE(m);
  CHECK(m->language == "C");
  CHECK(m->arm64_supported);
  CHECK(m->mqtt5);
  CHECK(known_broker_metadata("emqx")->language == "Erlang");
  const auto r = known_broker_metadata("rabbitmq");
  CHECK(r->language == "Starlark");
  CHECK(r->arm64_supported);
  CHECK_FALSE(r->mqtt5);
  CHECK_FALSE(known_broker_metadata("vernemq")->arm64_supported);
  CHECK(known_broker_metadata("vernemq")->mqtt5);
  CHECK_FALSE(known_broker_metadata("hivemq")->arm64_supported);
  CHECK(known_broker_metadata("hivemq")->language == "Java");
  for (const char* n : {"mosquitto", "emqx", "rabbitmq", "vernemq", "hivemq"}) CHECK(known_broker_metadata(n)->mqtt311);
  CHECK_FALSE(known_broker_metadata("nanomq"));
}

TEST_CASE("scenario catalog lists presets then custom entries") {
  CHECK(scenario_catalog("").size() == 3);
  const auto cat = scenario_catalog("scenarios:\n  - {name: lan, latency_ms: 0.2}\n  - local\n");
  REQUIRE(cat.size() == 4);
  CHECK(cat[3].name == "lan");
  CHECK(cat[3].jitter_ms == 0);
  CHECK_THROWS_AS(scenario_catalog("scenarios:\n  - {name: lan}\n  - {name: lan}\n"), PlanError);
}

TEST_CASE("restricting brokers and scenario") {
  auto p = load_plan(R"(
brokers: [{name: a}, {name: b}, {name: c}]
scenarios: [local, optimal, {name: lan, latency_ms: 1}]
tests: [{name: t, kind: offset}]
)");
  restrict_brokers(p, {"c", "a"});
  REQUIRE(p.brokers.size() == 2);
  CHECK(p.brokers[0].name == "c");
  CHECK(p.brokers[1].name == "a");
  CHECK_THROWS_AS(restrict_brokers(p, {"zz"}), PlanError);
  restrict_brokers(p, {});
  CHECK(p.brokers.size() == 2);

  auto q = p;
  restrict_scenario(q, "lan");
  REQUIRE(q.scenarios.size() == 1);
  CHECK(q.scenarios[0].latency_ms == 1.0);
  auto w = p;
  restrict_scenario(w, "worst");
  REQUIRE(w.scenarios.size() == 1);
  CHECK(w.scenarios[0].latency_ms == 6.25);
  try {
    restrict_scenario(p, "optimaal");
    FAIL("expected UnknownScenario");
  } catch (const PlanError& e) {
    CHECK(e.kind() == PlanError::Kind::UnknownScenario);
  }
}

TEST_CASE("names that end up in paths") {
  CHECK(is_safe_name("mosquitto"));
  CHECK(is_safe_name("emqx-5.0_x"));
  CHECK_FALSE(is_safe_name(""));
  CHECK_FALSE(is_safe_name(".."));
  CHECK_FALSE(is_safe_name("a/b"));
  CHECK_FALSE(is_safe_name("a b"));
  CHECK_FALSE(is_safe_name("a+"));
}

TEST_CASE("plan files") {
  const auto dir = std::filesystem::temp_directory_path() / fmt::format("bk_plan_{}", ::getpid());
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "benchkit.yml") << kMinimal;
  }
  CHECK(load_plan_file(dir / "benchkit.yml").brokers.size() == 1);
  try {
    load_plan_file(dir / "missing.yml");
    FAIL("expected Io");
  } catch (const PlanError& e) {
    CHECK(e.kind() == PlanError::Kind::Io);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("random garbage never escapes as anything but PlanError") {
  std::mt19937_64 rng(12);
  const std::string alphabet = "abc:- []{}\n\t,0123456789\"'#&*!|>";
  for (int i = 0; i < 500; ++i) {
    std::string doc;
    const auto n = rng() % 80;
    for (std::size_t k = 0; k < n; ++k) doc.push_back(alphabet[rng() % alphabet.size()]);
    CAPTURE(doc);
    try {
      load_plan(doc);
    } catch (const PlanError&) {
    }
  }
}
