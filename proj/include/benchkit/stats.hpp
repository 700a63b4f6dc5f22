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
#include <span>
#include <stdexcept>
#include <vector>

#include "benchkit/payload.hpp"

namespace benchkit::stats {

class EmptyInput : public std::invalid_argument {
 public:
  EmptyInput() : std::invalid_argument("EmptyInput: no samples") {}
};

/// Linear interpolation between closest ranks: h = (n-1)q,
/// x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
/// \p sorted must be ascending; q is clamped to [0, 1].
double quantile(std::span<const double> sorted, double q);

/// Five-number summary plus IQR, mean and Tukey whiskers, in milliseconds.
struct SummaryStats {
  std::size_t n = 0;
  double min = 0;
  double q1 = 0;
  double median = 0;
  double q3 = 0;
  double max = 0;
  double iqr = 0;
  double mean = 0;
  double whisker_low = 0;   ///< smallest sample >= q1 - 1.5 iqr
  double whisker_high = 0;  ///< largest sample <= q3 + 1.5 iqr
  std::size_t outlier_count = 0;

  bool operator==(const SummaryStats&) const = default;
};

SummaryStats summarize(std::span<const double> samples_ms);
SummaryStats summarize(const std::vector<payload::LatencyRecord>& records);

std::vector<double> latencies_ms(const std::vector<payload::LatencyRecord>& records);

/// Samples outside the Tukey fences of \p s, ascending.
std::vector<double> outliers(std::span<const double> samples_ms, const SummaryStats& s);

}  // namespace benchkit::stats
