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

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "benchkit/clock.hpp"
#include "benchkit/codec.hpp"

/// Network impairment model applied per direction by the proxy.
namespace benchkit::impair {

/// Per-direction impairment: mean one-way delay, its standard deviation,
/// and loss probability in percent.
struct Scenario {
  std::string name;
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
  double loss_pct = 0.0;

  bool operator==(const Scenario&) const = default;
};

/// local(0, 0, 0), optimal(2.5, 0.5, 0.04), worst(6.25, 1.25, 0.1).
std::span<const Scenario> preset_scenarios();
std::optional<Scenario> find_preset(std::string_view name);

/// Throws std::invalid_argument for negative values, loss > 100 or an empty name.
void validate(const Scenario& s);

/// Approximates the TCP retransmission cost of IP-level loss: a chunk is cut
/// into virtual segments, and if any of them is lost the whole chunk pays
/// one retransmission penalty.
struct LossModel {
  std::size_t segment_size = 1460;
  double rtt_multiplier = 1.5;

  /// max(1 ms, rtt_multiplier * 2 * latency_ms)
  Nanos penalty(const Scenario& s) const;
  bool operator==(const LossModel&) const = default;
};

using Rng = std::mt19937_64;

/// Normal(latency_ms, jitter_ms) clamped at 0. Always consumes the same
/// amount of randomness, whatever the scenario.
Nanos sample_delay(const Scenario& s, Rng& rng);

/// Either 0 or m.penalty(s).
Nanos apply_loss(std::size_t chunk_len, const Scenario& s, const LossModel& m, Rng& rng);

/// Bookkeeping for one scheduled chunk, kept for statistics and replay.
struct ChunkTiming {
  std::size_t bytes = 0;
  std::int64_t arrival_ns = 0;
  std::int64_t release_ns = 0;
  std::int64_t delay_ns = 0;    ///< sampled delay
  std::int64_t penalty_ns = 0;  ///< loss penalty, 0 when nothing was lost

  bool operator==(const ChunkTiming&) const = default;
};

/// FIFO of chunks waiting for their release time in one direction. Release
/// times never decrease, so bytes leave in the order they arrived.
class ReleaseSchedule {
 public:
  struct Entry {
    codec::Bytes data;
    std::int64_t release_ns = 0;
  };

  /// Throws std::invalid_argument for an empty chunk.
  ChunkTiming schedule(codec::Bytes chunk, std::int64_t now_ns, const Scenario& s, const LossModel& m, Rng& rng) {
    return schedule(std::move(chunk), now_ns, s, m, rng, rng);
  }
  /// Separate delay and loss streams keep the n-th delay draw independent of
  /// how many segments earlier chunks had.
  ChunkTiming schedule(codec::Bytes chunk, std::int64_t now_ns, const Scenario& s, const LossModel& m, Rng& delay_rng,
                       Rng& loss_rng);

  bool empty() const noexcept { return queue_.empty(); }
  std::size_t size() const noexcept { return queue_.size(); }
  const Entry& front() const { return queue_.front(); }
  Entry pop();
  std::optional<std::int64_t> next_release() const;
  std::int64_t last_release() const noexcept { return last_release_ns_; }

 private:
  std::deque<Entry> queue_;
  std::int64_t last_release_ns_ = 0;
};

}  // namespace benchkit::impair
