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
#include "benchkit/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace benchkit::impair {

namespace {

const std::array<Scenario, 3> kPresets = {{
    {"local", 0.0, 0.0, 0.0},
    {"optimal", 2.5, 0.5, 0.04},
    {"worst", 6.25, 1.25, 0.1},
}};

Nanos from_ms(double ms) { return Nanos(static_cast<std::int64_t>(std::llround(ms * 1e6))); }

}  // namespace

std::span<const Scenario> preset_scenarios() { return kPresets; }

std::optional<Scenario> find_preset(std::string_view name) {
  for (const auto& s : kPresets)
    if (s.name == name) return s;
  return std::nullopt;
}

void validate(const Scenario& s) {
  if (s.name.empty()) throw std::invalid_argument("scenario name must not be empty");
  if (!(s.latency_ms >= 0.0) || !std::isfinite(s.latency_ms))
    throw std::invalid_argument(fmt::format("scenario '{}': latency_ms must be >= 0", s.name));
  if (!(s.jitter_ms >= 0.0) || !std::isfinite(s.jitter_ms))
    throw std::invalid_argument(fmt::format("scenario '{}': jitter_ms must be >= 0", s.name));
  if (!(s.loss_pct >= 0.0 && s.loss_pct <= 100.0))
    throw std::invalid_argument(fmt::format("scenario '{}': loss_pct must be within 0..100", s.name));
}

Nanos LossModel::penalty(const Scenario& s) const {
  return std::max(Nanos(std::chrono::milliseconds(1)), from_ms(rtt_multiplier * 2.0 * s.latency_ms));
}

Nanos sample_delay(const Scenario& s, Rng& rng) {
  std::normal_distribution<double> standard(0.0, 1.0);
  const double z = standard(rng);
  const double ms = s.latency_ms + s.jitter_ms * z;
  return ms <= 0.0 ? Nanos(0) : from_ms(ms);
}

Nanos apply_loss(std::size_t chunk_len, const Scenario& s, const LossModel& m, Rng& rng) {
  if (m.segment_size == 0) throw std::invalid_argument("segment_size must be > 0");
  const std::size_t segments = (chunk_len + m.segment_size - 1) / m.segment_size;
  const double p = s.loss_pct / 100.0;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  bool lost = false;
  for (std::size_t i = 0; i < segments; ++i) lost = (uniform(rng) < p) || lost;
  return lost ? m.penalty(s) : Nanos(0);
}

ChunkTiming ReleaseSchedule::schedule(codec::Bytes chunk, std::int64_t now_ns, const Scenario& s, const LossModel& m,
                                      Rng& delay_rng, Rng& loss_rng) {
  if (chunk.empty()) throw std::invalid_argument("cannot schedule an empty chunk");
  ChunkTiming t;
  t.bytes = chunk.size();
  t.arrival_ns = now_ns;
  t.delay_ns = sample_delay(s, delay_rng).count();
  t.penalty_ns = apply_loss(chunk.size(), s, m, loss_rng).count();
  t.release_ns = std::max(last_release_ns_, now_ns + t.delay_ns + t.penalty_ns);
  last_release_ns_ = t.release_ns;
  queue_.push_back(Entry{std::move(chunk), t.release_ns});
  return t;
}

ReleaseSchedule::Entry ReleaseSchedule::pop() {
  Entry e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

std::optional<std::int64_t> ReleaseSchedule::next_release() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.front().release_ns;
}

}  // namespace benchkit::impair
