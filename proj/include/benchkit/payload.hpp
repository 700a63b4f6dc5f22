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

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

#include "benchkit/clock.hpp"
#include "benchkit/codec.hpp"

namespace benchkit::payload {

// Layout (big-endian):
//   0..4   magic "MQBK"
//   4..12  send timestamp, monotonic ns
//   12..16 publisher-local sequence
//   16..   padding (0x5A) or an application body
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::array<std::uint8_t, 4> kMagic = {'M', 'Q', 'B', 'K'};
inline constexpr std::uint8_t kPadByte = 0x5A;
inline constexpr std::string_view kOffsetBody = "hello world";
inline constexpr std::size_t kOffsetPayloadSize = kHeaderSize + kOffsetBody.size();

class PayloadError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exactly \p size bytes. Throws PayloadError when size < kHeaderSize
/// (SizeTooSmall) or the timestamp is not strictly positive.
codec::Bytes make_bench_payload(std::size_t size, std::uint32_t sequence, std::int64_t now_ns);

/// Header followed by "hello world", 27 bytes in total.
codec::Bytes make_offset_payload(std::uint32_t sequence, std::int64_t now_ns);

struct Sample {
  Nanos latency{0};
  std::uint32_t sequence = 0;
};

enum class SampleError { ShortPayload, BadMagic, NegativeLatency };

struct MalformedSample {
  SampleError kind;
  std::string reason;
};

std::variant<Sample, MalformedSample> extract_latency(codec::ByteView payload, std::int64_t receive_ns);

/// One accepted publish-to-subscribe measurement.
struct LatencyRecord {
  std::string broker;
  std::string scenario;
  std::string test;
  std::uint32_t repetition = 0;
  std::uint32_t publisher = 0;
  std::uint32_t sequence = 0;
  Nanos latency{0};
  std::size_t payload_size = 0;
  std::int64_t received_at_wall_ns = 0;

  bool operator==(const LatencyRecord&) const = default;
};

}  // namespace benchkit::payload
