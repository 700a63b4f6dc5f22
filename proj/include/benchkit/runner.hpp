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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "benchkit/payload.hpp"
#include "benchkit/plan.hpp"
#include "benchkit/proxy.hpp"
#include "benchkit/report.hpp"

/// Test scheduler: runs every broker x scenario x test cell of a plan.
namespace benchkit::runner {

using std::chrono::milliseconds;

/// i * interval / n, rounded down to whole nanoseconds.
std::chrono::nanoseconds staggered_start(std::uint32_t i, std::uint32_t n, std::chrono::nanoseconds interval);

/// bench/<broker>/<scenario>/<test>/<rep>; warm-up runs use w<k> instead of the index.
std::string cell_topic(const report::CellKey& key, std::uint32_t repetition, bool warmup = false);

/// Proxy seed of one run. Depends on the plan seed, scenario, repetition and
/// warm-up flag only, so every broker and test sees the same network draws.
std::uint64_t cell_seed(std::uint64_t plan_seed, std::string_view scenario, std::uint32_t repetition, bool warmup);

enum class EventKind { SubscriberConnected, SubAck, PublishersConnected, FirstPublish, LastPublish, Drained };
std::string_view event_kind_name(EventKind k);

struct Event {
  EventKind kind;
  std::int64_t mono_ns = 0;
  std::int64_t publisher = -1;
};

struct RunResult {
  report::CellKey key;
  std::uint32_t repetition = 0;
  bool warmup = false;
  std::uint64_t seed = 0;

  std::vector<payload::LatencyRecord> records;
  std::uint64_t expected = 0;
  std::uint64_t exclusions = 0;   ///< malformed or negative samples
  std::uint64_t undelivered = 0;  ///< expected - records - exclusions
  std::uint64_t duplicates = 0;   ///< redeliveries dropped by (publisher, sequence) dedup
  std::uint64_t strays = 0;       ///< deliveries that match no expected message
  std::uint64_t publish_failures = 0;
  bool drain_timed_out = false;

  std::int64_t started_at_wall_ns = 0;
  std::int64_t finished_at_wall_ns = 0;

  proxy::ProxyStats proxy_stats;
  std::vector<proxy::ScheduleEntry> schedule;
  std::vector<Event> events;

  bool accounting_holds() const { return records.size() + exclusions + undelivered == expected; }
};

class RunnerError : public std::runtime_error {
 public:
  enum class Kind { BrokerUnreachable, Setup, Io };
  RunnerError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Tries to open a TCP connection up to three times. Throws BrokerUnreachable.
void probe_broker(const net::Endpoint& ep, milliseconds timeout);

/// One run of one cell. An embedded-stub broker is started for the duration
/// of the call. Throws RunnerError(BrokerUnreachable) before any publisher starts.
RunResult run_cell(const plan::TestPlan& plan, const plan::BrokerEndpoint& broker, const impair::Scenario& scenario,
                   const plan::TestSpec& test, std::uint32_t repetition, bool warmup = false);

struct RunOptions {
  std::vector<std::string> only_brokers;  ///< recorded as filters
  std::optional<std::string> only_scenario;
  bool resume = true;
  std::ostream* progress = nullptr;
};

struct CellOutcome {
  report::CellKey key;
  std::string status;  ///< complete | partial | failed | skipped
  bool resumed = false;
  std::string error;
};

struct PlanOutcome {
  std::filesystem::path output_dir;
  std::vector<CellOutcome> cells;
  std::vector<report::ResultCell> results;

  std::size_t count(std::string_view status) const;
  bool fully_successful() const { return count("failed") == 0 && count("partial") == 0; }
};

/// Runs the whole matrix one cell at a time and writes:
///   <out>/<broker>/<scenario>/<test>/rep<k>.csv, schedule/rep<k>.csv, cell.json
///   <out>/summary.json, results.json, stats.csv, stats_pooled.csv,
///   table.txt, table.md, boxplot/*.json
/// Cells whose cell.json says complete or partial are not rerun.
PlanOutcome run_plan(const plan::TestPlan& plan, const RunOptions& opts = {});

std::uint64_t effective_seed(const plan::TestPlan& plan);

/// Record CSV of one repetition.
std::string records_to_csv(const std::vector<payload::LatencyRecord>& records);
std::vector<payload::LatencyRecord> records_from_csv(std::string_view text);
std::string schedule_to_csv(const std::vector<proxy::ScheduleEntry>& schedule);

/// summary.json without the "timing" object, for run-to-run comparison.
nlohmann::json strip_wall_clock(nlohmann::json summary);

}  // namespace benchkit::runner
