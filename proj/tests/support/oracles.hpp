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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Deliberately naive reference implementations, written without looking at
// the production code paths they check.
namespace bktest::oracle {

// Base-128 digits by repeated division, least significant group first.
inline std::vector<std::uint8_t> varint(std::uint32_t n) {
  std::vector<std::uint8_t> digits;
  while (true) {
    digits.push_back(static_cast<std::uint8_t>(n % 128));
    n /= 128;
    if (n == 0) break;
  }
  for (std::size_t i = 0; i + 1 < digits.size(); ++i) digits[i] = static_cast<std::uint8_t>(digits[i] + 128);
  return digits;
}

inline std::uint64_t varint_value(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t value = 0;
  std::uint64_t scale = 1;
  for (auto b : bytes) {
    value += (b % 128) * scale;
    scale *= 128;
  }
  return value;
}

// Sorted copy, then direct rank interpolation.
inline double quantile(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - std::floor(h)) * (x[hi] - x[lo]);
}

inline std::vector<std::string> split_levels(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == '/') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Recursive level-by-level matcher.
inline bool matches(const std::vector<std::string>& f, std::size_t fi, const std::vector<std::string>& t,
                    std::size_t ti) {
  if (fi == f.size()) return ti == t.size();
  if (f[fi] == "#") return true;
  if (ti == t.size()) return false;
  if (f[fi] == "+" || f[fi] == t[ti]) return matches(f, fi + 1, t, ti + 1);
  return false;
}

inline bool filter_matches(std::string_view filter, std::string_view topic) {
  if (!topic.empty() && topic[0] == '$' && !filter.empty() && (filter[0] == '+' || filter[0] == '#')) return false;
  return matches(split_levels(filter), 0, split_levels(topic), 0);
}

}  // namespace bktest::oracle
