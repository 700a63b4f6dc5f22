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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "benchkit/stats.hpp"

/// Aggregated results per (broker, scenario, test) cell and their renderings:
/// median/IQR tables, CSV, JSON and boxplot data files.
namespace benchkit::report {

struct CellKey {
  std::string broker;
  std::string scenario;
  std::string test;

  auto operator<=>(const CellKey&) const = default;
  bool operator==(const CellKey&) const = default;
};

struct RepetitionStats {
  std::uint32_t repetition = 0;
  stats::SummaryStats stats;
  std::uint64_t exclusions = 0;
  std::uint64_t undelivered = 0;

  bool operator==(const RepetitionStats&) const = default;
};

struct ResultCell {
  CellKey key;
  std::size_t payload_size = 0;
  std::string status = "complete";  ///< complete | partial | failed
  std::vector<RepetitionStats> repetitions;
  std::optional<stats::SummaryStats> pooled;  ///< all repetitions as one distribution
  std::vector<double> pooled_outliers;
  std::uint64_t exclusions = 0;
  std::uint64_t undelivered = 0;

  bool operator==(const ResultCell&) const = default;
};

struct RepetitionSamples {
  std::uint32_t repetition = 0;
  std::vector<double> latencies_ms;
  std::uint64_t exclusions = 0;
  std::uint64_t undelivered = 0;
};

/// Repetitions without samples keep their tallies but get no stats row.
ResultCell build_cell(CellKey key, std::size_t payload_size, const std::vector<RepetitionSamples>& reps,
                      std::string status = "complete");

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "<median> - <iqr>" with two decimals, e.g. "5.39 - 1.00".
std::string format_median_iqr(double median, double iqr);
std::optional<std::pair<double, double>> parse_median_iqr(std::string_view text);

/// Placeholder for cells without data.
inline constexpr std::string_view kEmptyCell = "—";

enum class TableStyle { Plain, Markdown };

/// Rows are tests (payload sizes), columns broker x scenario.
std::string render_median_iqr_table(const std::vector<ResultCell>& cells, TableStyle style = TableStyle::Plain);

nlohmann::json cells_to_json(const std::vector<ResultCell>& cells, const nlohmann::json& metadata = nlohmann::json::object());
std::vector<ResultCell> cells_from_json(const nlohmann::json& doc);

/// CSV text: one row per repetition, or one "pooled" row per cell.
std::string render_csv(const std::vector<ResultCell>& cells, bool pooled);

/// stats.csv (one row per repetition) and stats_pooled.csv (one row per cell).
std::vector<std::filesystem::path> export_csv(const std::vector<ResultCell>& cells, const std::filesystem::path& dir);
std::filesystem::path export_json(const std::vector<ResultCell>& cells, const nlohmann::json& metadata,
                                  const std::filesystem::path& file);
std::vector<ResultCell> import_json(const std::filesystem::path& file);

std::string boxplot_file_name(const CellKey& key);
/// One JSON file per cell with a pooled distribution.
std::vector<std::filesystem::path> export_boxplot_data(const std::vector<ResultCell>& cells,
                                                       const std::filesystem::path& dir);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& file, std::string_view contents);

}  // namespace benchkit::report
