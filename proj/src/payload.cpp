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
#include "benchkit/payload.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace benchkit::payload {

namespace {

void write_header(codec::Bytes& out, std::uint32_t sequence, std::int64_t now_ns) {
  if (now_ns <= 0) throw PayloadError(fmt::format("send timestamp must be positive, got {}", now_ns));
  std::copy(kMagic.begin(), kMagic.end(), out.begin());
  const auto ts = static_cast<std::uint64_t>(now_ns);
  for (int i = 0; i < 8; ++i) out[4 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(ts >> (56 - 8 * i));
  for (int i = 0; i < 4; ++i)
    out[12 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(sequence >> (24 - 8 * i));
}

}  // namespace

codec::Bytes make_bench_payload(std::size_t size, std::uint32_t sequence, std::int64_t now_ns) {
  if (size < kHeaderSize)
    throw PayloadError(fmt::format("SizeTooSmall: payload size {} below the {}-byte header", size, kHeaderSize));
  codec::Bytes out(size, kPadByte);
  write_header(out, sequence, now_ns);
  return out;
}

codec::Bytes make_offset_payload(std::uint32_t sequence, std::int64_t now_ns) {
  codec::Bytes out(kOffsetPayloadSize);
  write_header(out, sequence, now_ns);
  std::copy(kOffsetBody.begin(), kOffsetBody.end(), out.begin() + kHeaderSize);
  return out;
}

std::variant<Sample, MalformedSample> extract_latency(codec::ByteView payload, std::int64_t receive_ns) {
  if (payload.size() < kHeaderSize)
    return MalformedSample{SampleError::ShortPayload, fmt::format("payload of {} bytes is shorter than the header", payload.size())};
  if (!std::equal(kMagic.begin(), kMagic.end(), payload.begin()))
    return MalformedSample{SampleError::BadMagic, "payload does not start with MQBK"};
  std::uint64_t ts = 0;
  for (std::size_t i = 0; i < 8; ++i) ts = (ts << 8) | payload[4 + i];
  std::uint32_t seq = 0;
  for (std::size_t i = 0; i < 4; ++i) seq = (seq << 8) | payload[12 + i];
  const auto sent = static_cast<std::int64_t>(ts);
  if (sent <= 0 || receive_ns < sent)
    return MalformedSample{SampleError::NegativeLatency,
                           fmt::format("negative latency: received at {} ns before send stamp {} ns", receive_ns, sent)};
  return Sample{Nanos(receive_ns - sent), seq};
}

}  // namespace benchkit::payload
