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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "benchkit/broker.hpp"
#include "benchkit/net.hpp"
#include "benchkit/scenario.hpp"

/// Benchmark plan: brokers x scenarios x tests, loaded from a YAML document.
namespace benchkit::plan {

using std::chrono::milliseconds;

struct BrokerMetadata {
  std::string language;
  bool arm64_supported = false;
  bool mqtt311 = true;
  bool mqtt5 = false;

  bool operator==(const BrokerMetadata&) const = default;
};

/// Defaults for mosquitto, emqx, rabbitmq, vernemq, hivemq (case-insensitive)
/// and the built-in stub.
std::optional<BrokerMetadata> known_broker_metadata(std::string_view name);

struct BrokerEndpoint {
  std::string name;
  net::Endpoint endpoint;
  BrokerMetadata metadata;
  bool embedded_stub = false;  ///< run the in-process stub broker instead of dialing endpoint
  broker::FaultPlan faults;
};

enum class TestKind { Offset, Payload };
std::string_view test_kind_name(TestKind k);

struct TestSpec {
  std::string name;
  TestKind kind = TestKind::Offset;
  std::uint32_t publisher_threads = 100;
  milliseconds publish_interval{250};
  std::uint32_t messages_per_publisher = 1;
  std::size_t payload_size = 0;  ///< payload kind only
  std::uint8_t qos = 1;
  std::uint32_t repetitions = 10;
  std::uint32_t warmup_runs = 1;
  std::optional<milliseconds> drain_timeout_override;

  milliseconds connect_timeout{5000};
  milliseconds ack_timeout{5000};
  int max_retransmits = 3;
  std::chrono::seconds keep_alive{60};

  /// Bytes per published message: 27 for offset tests.
  std::size_t message_size() const;
  std::uint64_t expected_messages() const {
    return static_cast<std::uint64_t>(publisher_threads) * messages_per_publisher;
  }
  /// 10 s plus 1 s per MiB of message size, unless overridden.
  milliseconds drain_timeout() const;
};

struct ProxySettings {
  net::Endpoint listen{"127.0.0.1", 0};
  impair::LossModel loss;
};

struct TestPlan {
  std::vector<BrokerEndpoint> brokers;
  std::vector<impair::Scenario> scenarios;         ///< selected, resolved
  std::vector<impair::Scenario> custom_scenarios;  ///< user-defined entries
  std::vector<TestSpec> tests;
  ProxySettings proxy;
  std::filesystem::path output_dir = "results";
  std::optional<std::uint64_t> seed;

  std::size_t cell_count() const { return brokers.size() * scenarios.size() * tests.size(); }
  const impair::Scenario* find_scenario(std::string_view name) const;
};

class PlanError : public std::runtime_error {
 public:
  enum class Kind { Schema, UnknownScenario, Io };
  PlanError(Kind kind, std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message), kind_(kind), path_(std::move(path)) {}
  Kind kind() const noexcept { return kind_; }
  /// Dotted path to the offending key, e.g. "tests[1].publishers".
  const std::string& path() const noexcept { return path_; }

 private:
  Kind kind_;
  std::string path_;
};

TestPlan load_plan(std::string_view yaml_text);
TestPlan load_plan_file(const std::filesystem::path& path);

/// "1024", "1KB", "10KB", "1MB" (binary units: 1KB = 1024 B).
std::size_t parse_size(std::string_view text);

/// Presets followed by the user-defined scenarios of the document. Throws
/// PlanError on duplicates or invalid values.
std::vector<impair::Scenario> scenario_catalog(std::string_view yaml_text);

/// Keeps only the named brokers / scenario. Throws PlanError for names that
/// are not in the plan.
void restrict_brokers(TestPlan& plan, const std::vector<std::string>& names);
void restrict_scenario(TestPlan& plan, std::string_view name);

/// Names end up in topics and directory names: [A-Za-z0-9_.-]+.
bool is_safe_name(std::string_view name);

}  // namespace benchkit::plan
