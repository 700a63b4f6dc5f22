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

namespace benchkit {

/// Every latency in the harness is read off this one clock, shared by the
/// publishers and the subscriber of a run.
using MonoClock = std::chrono::steady_clock;
using MonoTime = MonoClock::time_point;
using Nanos = std::chrono::nanoseconds;

inline std::int64_t mono_now_ns() {
  return std::chrono::duration_cast<Nanos>(MonoClock::now().time_since_epoch()).count();
}

inline std::int64_t to_ns(MonoTime t) {
  return std::chrono::duration_cast<Nanos>(t.time_since_epoch()).count();
}

inline MonoTime from_ns(std::int64_t ns) { return MonoTime(Nanos(ns)); }

inline double to_ms(Nanos d) { return std::chrono::duration<double, std::milli>(d).count(); }

inline std::int64_t wall_now_ns() {
  return std::chrono::duration_cast<Nanos>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace benchkit
