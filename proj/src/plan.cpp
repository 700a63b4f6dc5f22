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
#include "benchkit/plan.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "benchkit/payload.hpp"

namespace benchkit::plan {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

[[noreturn]] void schema(const std::string& path, const std::string& msg) {
  throw PlanError(PlanError::Kind::Schema, path, msg);
}

std::string child(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : fmt::format("{}.{}", path, key);
}

std::string index(const std::string& path, std::size_t i) { return fmt::format("{}[{}]", path, i); }

void reject_unknown_keys(const YAML::Node& node, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!node.IsMap()) schema(path, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) schema(child(path, key), "unknown key");
  }
}

template <class T>
T scalar(const YAML::Node& node, const std::string& path, std::string_view expected) {
  if (!node.IsScalar()) schema(path, fmt::format("expected {}", expected));
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    schema(path, fmt::format("expected {}, got '{}'", expected, node.Scalar()));
  }
}

std::uint64_t non_negative(const YAML::Node& node, const std::string& path) {
  if (node.IsScalar() && !node.Scalar().empty() && node.Scalar().front() == '-')
    schema(path, "must not be negative");
  return scalar<std::uint64_t>(node, path, "a non-negative integer");
}

std::uint32_t count_at_least(const YAML::Node& node, const std::string& path, std::uint32_t min) {
  const auto v = non_negative(node, path);
  if (v < min) schema(path, fmt::format("must be >= {}", min));
  if (v > 0xFFFFFFFFULL) schema(path, "too large");
  return static_cast<std::uint32_t>(v);
}

double number(const YAML::Node& node, const std::string& path) { return scalar<double>(node, path, "a number"); }

bool flag(const YAML::Node& node, const std::string& path) { return scalar<bool>(node, path, "true or false"); }

std::string name_at(const YAML::Node& node, const std::string& path) {
  auto name = scalar<std::string>(node, path, "a name");
  if (!is_safe_name(name)) schema(path, fmt::format("'{}' may only use letters, digits, '_', '.', '-'", name));
  return name;
}

net::Endpoint endpoint_at(const YAML::Node& node, const std::string& path) {
  try {
    return net::parse_endpoint(scalar<std::string>(node, path, "host:port"));
  } catch (const std::invalid_argument& e) {
    schema(path, e.what());
  }
}

impair::Scenario scenario_definition(const YAML::Node& node, const std::string& path) {
  reject_unknown_keys(node, path, {"name", "latency_ms", "jitter_ms", "loss_pct"});
  if (!node["name"]) schema(child(path, "name"), "required");
  impair::Scenario s;
  s.name = name_at(node["name"], child(path, "name"));
  if (node["latency_ms"]) s.latency_ms = number(node["latency_ms"], child(path, "latency_ms"));
  if (node["jitter_ms"]) s.jitter_ms = number(node["jitter_ms"], child(path, "jitter_ms"));
  if (node["loss_pct"]) s.loss_pct = number(node["loss_pct"], child(path, "loss_pct"));
  try {
    impair::validate(s);
  } catch (const std::invalid_argument& e) {
    schema(path, e.what());
  }
  return s;
}

YAML::Node parse_document(std::string_view text) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw PlanError(PlanError::Kind::Schema, "", fmt::format("config does not parse: {}", e.what()));
  }
}

struct ScenarioSection {
  std::vector<impair::Scenario> selected;
  std::vector<impair::Scenario> custom;
};

ScenarioSection read_scenarios(const YAML::Node& root) {
  ScenarioSection out;
  const YAML::Node node = root["scenarios"];
  if (!node) {
    auto presets = impair::preset_scenarios();
    out.selected.assign(presets.begin(), presets.end());
    return out;
  }
  if (!node.IsSequence()) schema("scenarios", "expected a list");

  std::set<std::string> defined;
  for (const auto& p : impair::preset_scenarios()) defined.insert(p.name);
  std::set<std::string> selected;
  std::vector<std::pair<std::string, std::string>> references;  // name, path

  for (std::size_t i = 0; i < node.size(); ++i) {
    const std::string path = index("scenarios", i);
    const YAML::Node item = node[i];
    if (item.IsMap()) {
      impair::Scenario s = scenario_definition(item, path);
      if (!defined.insert(s.name).second) schema(path, fmt::format("duplicate scenario name '{}'", s.name));
      selected.insert(s.name);
      out.custom.push_back(s);
      out.selected.push_back(std::move(s));
    } else {
      const auto name = scalar<std::string>(item, path, "a scenario name or definition");
      if (!selected.insert(name).second) schema(path, fmt::format("duplicate scenario name '{}'", name));
      references.emplace_back(name, path);
      out.selected.push_back(impair::Scenario{name, 0, 0, 0});
    }
  }
  for (auto& s : out.selected) {
    if (auto preset = impair::find_preset(s.name)) {
      s = *preset;
      continue;
    }
    const auto custom = std::find_if(out.custom.begin(), out.custom.end(), [&](const auto& c) { return c.name == s.name; });
    if (custom != out.custom.end()) {
      s = *custom;
      continue;
    }
    const auto ref = std::find_if(references.begin(), references.end(), [&](const auto& r) { return r.first == s.name; });
    throw PlanError(PlanError::Kind::UnknownScenario, ref != references.end() ? ref->second : "scenarios",
                    fmt::format("UnknownScenario '{}'", s.name));
  }
  return out;
}

BrokerEndpoint read_broker(const YAML::Node& node, const std::string& path) {
  reject_unknown_keys(node, path, {"name", "address", "host", "port", "stub", "faults", "language", "arm64", "mqtt311", "mqtt5"});
  if (!node["name"]) schema(child(path, "name"), "required");
  BrokerEndpoint b;
  b.name = name_at(node["name"], child(path, "name"));
  if (node["stub"]) b.embedded_stub = flag(node["stub"], child(path, "stub"));
  if (node["address"]) {
    if (node["host"] || node["port"]) schema(path, "use either address or host/port");
    b.endpoint = endpoint_at(node["address"], child(path, "address"));
  } else {
    if (node["host"]) b.endpoint.host = scalar<std::string>(node["host"], child(path, "host"), "a host");
    if (node["port"]) {
      const auto port = non_negative(node["port"], child(path, "port"));
      if (port == 0 || port > 65535) schema(child(path, "port"), "must be within 1..65535");
      b.endpoint.port = static_cast<std::uint16_t>(port);
    } else if (!b.embedded_stub) {
      b.endpoint.port = 1883;
    }
  }
  if (node["faults"]) {
    if (!b.embedded_stub) schema(child(path, "faults"), "faults apply to stub brokers only");
    try {
      b.faults = broker::parse_fault_plan(scalar<std::string>(node["faults"], child(path, "faults"), "a fault spec"));
    } catch (const std::invalid_argument& e) {
      schema(child(path, "faults"), e.what());
    }
  }
  if (auto meta = known_broker_metadata(b.embedded_stub ? "stub" : b.name)) b.metadata = *meta;
  if (node["language"]) b.metadata.language = scalar<std::string>(node["language"], child(path, "language"), "a string");
  if (node["arm64"]) b.metadata.arm64_supported = flag(node["arm64"], child(path, "arm64"));
  if (node["mqtt311"]) b.metadata.mqtt311 = flag(node["mqtt311"], child(path, "mqtt311"));
  if (node["mqtt5"]) b.metadata.mqtt5 = flag(node["mqtt5"], child(path, "mqtt5"));
  return b;
}

TestSpec read_test(const YAML::Node& node, const std::string& path) {
  reject_unknown_keys(node, path,
                      {"name", "kind", "publishers", "interval_ms", "messages_per_publisher", "payload_size", "qos",
                       "repetitions", "warmup_runs", "drain_timeout_ms", "connect_timeout_ms", "ack_timeout_ms",
                       "max_retransmits", "keep_alive_s"});
  if (!node["name"]) schema(child(path, "name"), "required");
  TestSpec t;
  t.name = name_at(node["name"], child(path, "name"));
  if (!node["kind"]) schema(child(path, "kind"), "required (offset or payload)");
  const auto kind = scalar<std::string>(node["kind"], child(path, "kind"), "offset or payload");
  if (kind == "offset") {
    t.kind = TestKind::Offset;
    t.messages_per_publisher = 1;
  } else if (kind == "payload") {
    t.kind = TestKind::Payload;
    t.messages_per_publisher = 10;
  } else {
    schema(child(path, "kind"), fmt::format("expected offset or payload, got '{}'", kind));
  }

  if (node["publishers"]) t.publisher_threads = count_at_least(node["publishers"], child(path, "publishers"), 1);
  if (node["interval_ms"]) t.publish_interval = milliseconds(non_negative(node["interval_ms"], child(path, "interval_ms")));
  if (node["messages_per_publisher"])
    t.messages_per_publisher = count_at_least(node["messages_per_publisher"], child(path, "messages_per_publisher"), 1);
  if (node["qos"]) {
    if (non_negative(node["qos"], child(path, "qos")) != 1) schema(child(path, "qos"), "only QoS 1 is supported");
  }
  if (node["repetitions"]) t.repetitions = count_at_least(node["repetitions"], child(path, "repetitions"), 1);
  if (node["warmup_runs"]) t.warmup_runs = count_at_least(node["warmup_runs"], child(path, "warmup_runs"), 0);
  if (node["drain_timeout_ms"])
    t.drain_timeout_override = milliseconds(non_negative(node["drain_timeout_ms"], child(path, "drain_timeout_ms")));
  if (node["connect_timeout_ms"])
    t.connect_timeout = milliseconds(count_at_least(node["connect_timeout_ms"], child(path, "connect_timeout_ms"), 1));
  if (node["ack_timeout_ms"])
    t.ack_timeout = milliseconds(count_at_least(node["ack_timeout_ms"], child(path, "ack_timeout_ms"), 1));
  if (node["max_retransmits"])
    t.max_retransmits = static_cast<int>(count_at_least(node["max_retransmits"], child(path, "max_retransmits"), 0));
  if (node["keep_alive_s"]) {
    const auto ka = count_at_least(node["keep_alive_s"], child(path, "keep_alive_s"), 1);
    if (ka > 65535) schema(child(path, "keep_alive_s"), "must be <= 65535");
    t.keep_alive = std::chrono::seconds(ka);
  }

  if (t.kind == TestKind::Payload) {
    if (!node["payload_size"]) schema(child(path, "payload_size"), "required for payload tests");
    const auto p = child(path, "payload_size");
    try {
      t.payload_size = parse_size(scalar<std::string>(node["payload_size"], p, "a size"));
    } catch (const std::invalid_argument& e) {
      schema(p, e.what());
    }
    if (t.payload_size < payload::kHeaderSize)
      schema(p, fmt::format("must be at least {} bytes", payload::kHeaderSize));
    if (t.payload_size > 256u * 1024 * 1024) schema(p, "must be at most 256MB");
  } else if (node["payload_size"]) {
    schema(child(path, "payload_size"), "offset tests always publish the fixed hello world payload");
  }
  return t;
}

}  // namespace

std::optional<BrokerMetadata> known_broker_metadata(std::string_view name) {
  const std::string n = lower(name);
  if (n == "mosquitto") return BrokerMetadata{"C", true, true, true};
  if (n == "emqx") return BrokerMetadata{"Erlang", true, true, true};
  if (n == "rabbitmq") return BrokerMetadata{"Starlark", true, true, false};
  if (n == "vernemq") return BrokerMetadata{"Erlang", false, true, true};
  if (n == "hivemq") return BrokerMetadata{"Java", false, true, true};
  if (n == "stub") return BrokerMetadata{"C++", true, true, false};
  return std::nullopt;
}

std::string_view test_kind_name(TestKind k) { return k == TestKind::Offset ? "offset" : "payload"; }

std::size_t TestSpec::message_size() const {
  return kind == TestKind::Offset ? payload::kOffsetPayloadSize : payload_size;
}

milliseconds TestSpec::drain_timeout() const {
  if (drain_timeout_override) return *drain_timeout_override;
  const double mib = static_cast<double>(message_size()) / (1024.0 * 1024.0);
  return milliseconds(10'000) + milliseconds(std::llround(mib * 1000.0));
}

const impair::Scenario* TestPlan::find_scenario(std::string_view name) const {
  for (const auto& s : scenarios)
    if (s.name == name) return &s;
  return nullptr;
}

bool is_safe_name(std::string_view name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

std::size_t parse_size(std::string_view text) {
  std::string t;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(c);
  std::size_t digits = 0;
  while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) ++digits;
  if (digits == 0) throw std::invalid_argument(fmt::format("invalid size '{}'", text));
  std::uint64_t value = 0;
  std::from_chars(t.data(), t.data() + digits, value);
  const std::string unit = lower(std::string_view(t).substr(digits));
  std::uint64_t mult = 1;
  if (unit.empty() || unit == "b") mult = 1;
  else if (unit == "kb" || unit == "kib" || unit == "k") mult = 1024;
  else if (unit == "mb" || unit == "mib" || unit == "m") mult = 1024 * 1024;
  else throw std::invalid_argument(fmt::format("unknown size unit in '{}'", text));
  return static_cast<std::size_t>(value * mult);
}

TestPlan load_plan(std::string_view yaml_text) {
  const YAML::Node root = parse_document(yaml_text);
  if (!root.IsMap()) schema("", "config document must be a mapping");
  reject_unknown_keys(root, "", {"brokers", "scenarios", "tests", "proxy", "output_dir", "seed"});

  TestPlan plan;
  if (root["seed"]) plan.seed = non_negative(root["seed"], "seed");
  if (root["output_dir"]) plan.output_dir = scalar<std::string>(root["output_dir"], "output_dir", "a path");

  if (const YAML::Node proxy = root["proxy"]) {
    reject_unknown_keys(proxy, "proxy", {"listen", "segment_size", "rtt_multiplier"});
    if (proxy["listen"]) plan.proxy.listen = endpoint_at(proxy["listen"], "proxy.listen");
    if (proxy["segment_size"]) {
      const auto seg = non_negative(proxy["segment_size"], "proxy.segment_size");
      if (seg == 0) schema("proxy.segment_size", "must be > 0");
      plan.proxy.loss.segment_size = seg;
    }
    if (proxy["rtt_multiplier"]) {
      plan.proxy.loss.rtt_multiplier = number(proxy["rtt_multiplier"], "proxy.rtt_multiplier");
      if (!(plan.proxy.loss.rtt_multiplier >= 0)) schema("proxy.rtt_multiplier", "must be >= 0");
    }
  }

  const YAML::Node brokers = root["brokers"];
  if (!brokers) schema("brokers", "required");
  if (!brokers.IsSequence() || brokers.size() == 0) schema("brokers", "expected a non-empty list");
  std::set<std::string> broker_names;
  for (std::size_t i = 0; i < brokers.size(); ++i) {
    auto b = read_broker(brokers[i], index("brokers", i));
    if (!broker_names.insert(b.name).second) schema(index("brokers", i), fmt::format("duplicate broker name '{}'", b.name));
    plan.brokers.push_back(std::move(b));
  }

  auto scenarios = read_scenarios(root);
  plan.scenarios = std::move(scenarios.selected);
  plan.custom_scenarios = std::move(scenarios.custom);
  if (plan.scenarios.empty()) schema("scenarios", "expected at least one scenario");

  const YAML::Node tests = root["tests"];
  if (!tests) schema("tests", "required");
  if (!tests.IsSequence() || tests.size() == 0) schema("tests", "expected a non-empty list");
  std::set<std::string> test_names;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    auto t = read_test(tests[i], index("tests", i));
    if (!test_names.insert(t.name).second) schema(index("tests", i), fmt::format("duplicate test name '{}'", t.name));
    plan.tests.push_back(std::move(t));
  }
  return plan;
}

TestPlan load_plan_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PlanError(PlanError::Kind::Io, "", fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return load_plan(ss.str());
}

std::vector<impair::Scenario> scenario_catalog(std::string_view yaml_text) {
  auto presets = impair::preset_scenarios();
  std::vector<impair::Scenario> out(presets.begin(), presets.end());
  if (yaml_text.empty()) return out;
  const YAML::Node root = parse_document(yaml_text);
  if (!root.IsMap() || !root["scenarios"]) return out;
  const auto section = read_scenarios(root);
  out.insert(out.end(), section.custom.begin(), section.custom.end());
  return out;
}

void restrict_brokers(TestPlan& plan, const std::vector<std::string>& names) {
  if (names.empty()) return;
  std::vector<BrokerEndpoint> kept;
  for (const auto& n : names) {
    auto it = std::find_if(plan.brokers.begin(), plan.brokers.end(), [&](const auto& b) { return b.name == n; });
    if (it == plan.brokers.end()) throw PlanError(PlanError::Kind::Schema, "--only", fmt::format("unknown broker '{}'", n));
    kept.push_back(*it);
  }
  plan.brokers = std::move(kept);
}

void restrict_scenario(TestPlan& plan, std::string_view name) {
  if (const auto* s = plan.find_scenario(name)) {
    const impair::Scenario keep = *s;
    plan.scenarios = {keep};
    return;
  }
  for (const auto& c : plan.custom_scenarios) {
    if (c.name == name) {
      plan.scenarios = {c};
      return;
    }
  }
  if (auto preset = impair::find_preset(name)) {
    plan.scenarios = {*preset};
    return;
  }
  throw PlanError(PlanError::Kind::UnknownScenario, "--scenario", fmt::format("UnknownScenario '{}'", name));
}

}  // namespace benchkit::plan
