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
#include "benchkit/stats.hpp"

#include <algorithm>
#include <cmath>

namespace benchkit::stats {

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw EmptyInput();
  q = std::clamp(q, 0.0, 1.0);
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted[lo];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

SummaryStats summarize(std::span<const double> samples_ms) {
  if (samples_ms.empty()) throw EmptyInput();
  std::vector<double> x(samples_ms.begin(), samples_ms.end());
  std::sort(x.begin(), x.end());

  SummaryStats s;
  s.n = x.size();
  s.min = x.front();
  s.max = x.back();
  s.q1 = quantile(x, 0.25);
  s.median = quantile(x, 0.5);
  s.q3 = quantile(x, 0.75);
  s.iqr = s.q3 - s.q1;

  double sum = 0;
  for (double v : x) sum += v;
  s.mean = sum / static_cast<double>(x.size());

  const double lo_fence = s.q1 - 1.5 * s.iqr;
  const double hi_fence = s.q3 + 1.5 * s.iqr;
  s.whisker_low = *std::lower_bound(x.begin(), x.end(), lo_fence);
  s.whisker_high = *(std::upper_bound(x.begin(), x.end(), hi_fence) - 1);
  s.outlier_count = static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [&](double v) {
    return v < lo_fence || v > hi_fence;
  }));
  return s;
}

std::vector<double> latencies_ms(const std::vector<payload::LatencyRecord>& records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(to_ms(r.latency));
  return out;
}

SummaryStats summarize(const std::vector<payload::LatencyRecord>& records) {
  return summarize(latencies_ms(records));
}

std::vector<double> outliers(std::span<const double> samples_ms, const SummaryStats& s) {
  const double lo_fence = s.q1 - 1.5 * s.iqr;
  const double hi_fence = s.q3 + 1.5 * s.iqr;
  std::vector<double> out;
  for (double v : samples_ms)
    if (v < lo_fence || v > hi_fence) out.push_back(v);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace benchkit::stats
