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

#include "benchkit/payload.hpp"

using namespace benchkit;
using namespace benchkit::payload;

TEST_CASE("bench payload layout is big-endian and exact in size") {
  const auto p = make_bench_payload(1024, 0x01020304, 0x0A0B0C0D0E0F1011);
  REQUIRE(p.size() == 1024);
  CHECK(std::string(p.begin(), p.begin() + 4) == "MQBK");
  const codec::Bytes ts = {0x0A, 0x0B, 0x0C, 0x0D, 0x0E, 0x0F, 0x10, 0x11};
  CHECK(codec::Bytes(p.begin() + 4, p.begin() + 12) == ts);
  const codec::Bytes seq = {0x01, 0x02, 0x03, 0x04};
  CHECK(codec::Bytes(p.begin() + 12, p.begin() + 16) == seq);
  CHECK(std::all_of(p.begin() + 16, p.end(), [](auto b) { return b == 0x5A; }));
}

TEST_CASE("payload size boundaries") {
  CHECK(make_bench_payload(16, 1, 1).size() == 16);
  CHECK_THROWS_AS(make_bench_payload(15, 1, 1), PayloadError);
  CHECK_THROWS_WITH_AS(make_bench_payload(0, 1, 1), doctest::Contains("SizeTooSmall"), PayloadError);
  CHECK_THROWS_AS(make_bench_payload(64, 1, 0), PayloadError);
  for (std::size_t size : {1024u, 10240u, 1048576u}) CHECK(make_bench_payload(size, 0, 5).size() == size);
}

TEST_CASE("offset payload is the header plus hello world") {
  const auto p = make_offset_payload(3, 1000);
  REQUIRE(p.size() == 27);
  CHECK(kOffsetPayloadSize == 27);
  CHECK(std::string(p.begin() + 16, p.end()) == "hello world");
  const auto out = extract_latency(p, 1500);
  REQUIRE(std::holds_alternative<Sample>(out));
  CHECK(std::get<Sample>(out).latency == Nanos(500));
  CHECK(std::get<Sample>(out).sequence == 3);
}

TEST_CASE("extract latency") {
  const std::int64_t t = 1'000'000'000;
  const auto p = make_bench_payload(64, 9, t);
  const auto ok = extract_latency(p, t + 5'000'000);
  REQUIRE(std::holds_alternative<Sample>(ok));
  CHECK(std::get<Sample>(ok).latency == std::chrono::milliseconds(5));
  CHECK(std::get<Sample>(ok).sequence == 9);

  const auto zero = extract_latency(p, t);
  REQUIRE(std::holds_alternative<Sample>(zero));
  CHECK(std::get<Sample>(zero).latency == Nanos(0));

  const codec::Bytes hello = {'h', 'e', 'l', 'l', 'o'};
  const auto short_one = extract_latency(hello, t);
  REQUIRE(std::holds_alternative<MalformedSample>(short_one));
  CHECK(std::get<MalformedSample>(short_one).kind == SampleError::ShortPayload);

  auto wrong = p;
  wrong[0] = 'X';
  const auto bad_magic = extract_latency(wrong, t + 1);
  REQUIRE(std::holds_alternative<MalformedSample>(bad_magic));
  CHECK(std::get<MalformedSample>(bad_magic).kind == SampleError::BadMagic);

  const auto early = extract_latency(p, t - 1);
  REQUIRE(std::holds_alternative<MalformedSample>(early));
  CHECK(std::get<MalformedSample>(early).kind == SampleError::NegativeLatency);
  CHECK(std::get<MalformedSample>(early).reason.find("negative") != std::string::npos);
}
