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
#include "benchkit/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace benchkit::report {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t display_width(std::string_view s) {
  std::size_t w = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++w;
  return w;
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  const auto w = display_width(s);
  if (w < width) out.append(width - w, ' ');
  return out;
}

template <class T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

json stats_json(const stats::SummaryStats& s) {
  return json{{"n", s.n},           {"min", s.min},
              {"q1", s.q1},         {"median", s.median},
              {"q3", s.q3},         {"max", s.max},
              {"iqr", s.iqr},       {"mean", s.mean},
              {"whisker_low", s.whisker_low}, {"whisker_high", s.whisker_high},
              {"outlier_count", s.outlier_count}};
}

stats::SummaryStats stats_from_json(const json& j) {
  stats::SummaryStats s;
  s.n = j.at("n").get<std::size_t>();
  s.min = j.at("min").get<double>();
  s.q1 = j.at("q1").get<double>();
  s.median = j.at("median").get<double>();
  s.q3 = j.at("q3").get<double>();
  s.max = j.at("max").get<double>();
  s.iqr = j.at("iqr").get<double>();
  s.mean = j.at("mean").get<double>();
  s.whisker_low = j.at("whisker_low").get<double>();
  s.whisker_high = j.at("whisker_high").get<double>();
  s.outlier_count = j.at("outlier_count").get<std::size_t>();
  return s;
}

std::string csv_row(const CellKey& k, std::string_view rep, const stats::SummaryStats& s, std::uint64_t exclusions) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", k.broker, k.scenario, k.test, rep, s.n, s.min, s.q1,
                     s.median, s.q3, s.max, s.iqr, s.mean, exclusions);
}

constexpr std::string_view kCsvHeader = "broker,scenario,test,repetition,n,min,q1,median,q3,max,iqr,mean,exclusions\n";

}  // namespace

ResultCell build_cell(CellKey key, std::size_t payload_size, const std::vector<RepetitionSamples>& reps,
                      std::string status) {
  ResultCell cell;
  cell.key = std::move(key);
  cell.payload_size = payload_size;
  cell.status = std::move(status);
  std::vector<double> pooled;
  for (const auto& r : reps) {
    cell.exclusions += r.exclusions;
    cell.undelivered += r.undelivered;
    pooled.insert(pooled.end(), r.latencies_ms.begin(), r.latencies_ms.end());
    if (r.latencies_ms.empty()) continue;
    cell.repetitions.push_back(RepetitionStats{r.repetition, stats::summarize(r.latencies_ms), r.exclusions, r.undelivered});
  }
  if (!pooled.empty()) {
    cell.pooled = stats::summarize(pooled);
    cell.pooled_outliers = stats::outliers(pooled, *cell.pooled);
  }
  return cell;
}

std::string format_median_iqr(double median, double iqr) { return fmt::format("{:.2f} - {:.2f}", median, iqr); }

std::optional<std::pair<double, double>> parse_median_iqr(std::string_view text) {
  const auto sep = text.find(" - ");
  if (sep == std::string_view::npos) return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string a(text.substr(0, sep));
    const std::string b(text.substr(sep + 3));
    const double median = std::stod(a, &used);
    if (used != a.size()) return std::nullopt;
    const double iqr = std::stod(b, &used);
    if (used != b.size()) return std::nullopt;
    return std::make_pair(median, iqr);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string render_median_iqr_table(const std::vector<ResultCell>& cells, TableStyle style) {
  std::vector<std::string> brokers, scenarios, tests;
  std::map<std::string, std::size_t> sizes;
  std::map<CellKey, const ResultCell*> index;
  for (const auto& c : cells) {
    push_unique(brokers, c.key.broker);
    push_unique(scenarios, c.key.scenario);
    push_unique(tests, c.key.test);
    sizes.emplace(c.key.test, c.payload_size);
    index[c.key] = &c;
  }

  bool any_empty = false;
  auto cell_text = [&](const std::string& b, const std::string& s, const std::string& t) -> std::string {
    auto it = index.find(CellKey{b, s, t});
    if (it == index.end() || !it->second->pooled) {
      any_empty = true;
      return std::string(kEmptyCell);
    }
    return format_median_iqr(it->second->pooled->median, it->second->pooled->iqr);
  };
  auto row_label = [&](const std::string& t) { return fmt::format("{} ({} B)", t, sizes[t]); };

  std::ostringstream out;
  if (style == TableStyle::Markdown) {
    out << "| test |";
    for (const auto& b : brokers)
      for (const auto& s : scenarios) out << ' ' << b << ' ' << s << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < brokers.size() * scenarios.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& t : tests) {
      out << "| " << row_label(t) << " |";
      for (const auto& b : brokers)
        for (const auto& s : scenarios) out << ' ' << cell_text(b, s, t) << " |";
      out << '\n';
    }
  } else {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header_brokers{""}, header_scenarios{"test"};
    for (const auto& b : brokers) {
      for (std::size_t i = 0; i < scenarios.size(); ++i) {
        header_brokers.push_back(i == 0 ? b : "");
        header_scenarios.push_back(scenarios[i]);
      }
    }
    grid.push_back(header_brokers);
    grid.push_back(header_scenarios);
    for (const auto& t : tests) {
      std::vector<std::string> row{row_label(t)};
      for (const auto& b : brokers)
        for (const auto& s : scenarios) row.push_back(cell_text(b, s, t));
      grid.push_back(std::move(row));
    }
    std::vector<std::size_t> widths(grid.front().size(), 0);
    for (const auto& row : grid)
      for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], display_width(row[i]));
    out << "Latency median - IQR (ms)\n";
    for (const auto& row : grid) {
      std::string line;
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) line += "  ";
        line += pad(row[i], widths[i]);
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out << line << '\n';
    }
  }
  if (any_empty) out << '\n' << kEmptyCell << " no data (failed or missing cell)\n";
  return out.str();
}

json cells_to_json(const std::vector<ResultCell>& cells, const json& metadata) {
  json arr = json::array();
  for (const auto& c : cells) {
    json reps = json::array();
    for (const auto& r : c.repetitions) {
      json jr = stats_json(r.stats);
      jr["repetition"] = r.repetition;
      jr["exclusions"] = r.exclusions;
      jr["undelivered"] = r.undelivered;
      reps.push_back(std::move(jr));
    }
    arr.push_back(json{{"broker", c.key.broker},
                       {"scenario", c.key.scenario},
                       {"test", c.key.test},
                       {"payload_size", c.payload_size},
                       {"status", c.status},
                       {"exclusions", c.exclusions},
                       {"undelivered", c.undelivered},
                       {"repetitions", std::move(reps)},
                       {"pooled", c.pooled ? stats_json(*c.pooled) : json(nullptr)},
                       {"pooled_outliers", c.pooled_outliers}});
  }
  return json{{"schema", "benchkit.results.v1"}, {"metadata", metadata}, {"cells", std::move(arr)}};
}

std::vector<ResultCell> cells_from_json(const json& doc) {
  std::vector<ResultCell> out;
  try {
    for (const auto& jc : doc.at("cells")) {
      ResultCell c;
      c.key = CellKey{jc.at("broker").get<std::string>(), jc.at("scenario").get<std::string>(),
                      jc.at("test").get<std::string>()};
      c.payload_size = jc.at("payload_size").get<std::size_t>();
      c.status = jc.at("status").get<std::string>();
      c.exclusions = jc.at("exclusions").get<std::uint64_t>();
      c.undelivered = jc.at("undelivered").get<std::uint64_t>();
      for (const auto& jr : jc.at("repetitions")) {
        c.repetitions.push_back(RepetitionStats{jr.at("repetition").get<std::uint32_t>(), stats_from_json(jr),
                                                jr.at("exclusions").get<std::uint64_t>(),
                                                jr.at("undelivered").get<std::uint64_t>()});
      }
      if (!jc.at("pooled").is_null()) c.pooled = stats_from_json(jc.at("pooled"));
      c.pooled_outliers = jc.at("pooled_outliers").get<std::vector<double>>();
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ReportError(fmt::format("results document is not valid: {}", e.what()));
  }
  return out;
}

void write_file_atomic(const fs::path& file, std::string_view contents) {
  std::error_code ec;
  if (file.has_parent_path()) fs::create_directories(file.parent_path(), ec);
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ReportError(fmt::format("IoError: cannot write '{}'", tmp.string()));
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ReportError(fmt::format("IoError: short write to '{}'", tmp.string()));
  }
  fs::rename(tmp, file, ec);
  if (ec) throw ReportError(fmt::format("IoError: cannot rename into '{}': {}", file.string(), ec.message()));
}

std::string render_csv(const std::vector<ResultCell>& cells, bool pooled) {
  std::string out(kCsvHeader);
  for (const auto& c : cells) {
    if (pooled) {
      if (c.pooled) out += csv_row(c.key, "pooled", *c.pooled, c.exclusions);
    } else {
      for (const auto& r : c.repetitions) out += csv_row(c.key, std::to_string(r.repetition), r.stats, r.exclusions);
    }
  }
  return out;
}

std::vector<fs::path> export_csv(const std::vector<ResultCell>& cells, const fs::path& dir) {
  const fs::path a = dir / "stats.csv";
  const fs::path b = dir / "stats_pooled.csv";
  write_file_atomic(a, render_csv(cells, false));
  write_file_atomic(b, render_csv(cells, true));
  return {a, b};
}

fs::path export_json(const std::vector<ResultCell>& cells, const json& metadata, const fs::path& file) {
  write_file_atomic(file, cells_to_json(cells, metadata).dump(2) + "\n");
  return file;
}

std::vector<ResultCell> import_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ReportError(fmt::format("IoError: cannot read '{}'", file.string()));
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ReportError(fmt::format("'{}' is not valid JSON: {}", file.string(), e.what()));
  }
  return cells_from_json(doc);
}

std::string boxplot_file_name(const CellKey& key) {
  return fmt::format("{}__{}__{}.json", key.broker, key.scenario, key.test);
}

std::vector<fs::path> export_boxplot_data(const std::vector<ResultCell>& cells, const fs::path& dir) {
  std::vector<fs::path> written;
  for (const auto& c : cells) {
    if (!c.pooled) continue;
    const auto& s = *c.pooled;
    json doc{{"broker", c.key.broker},
             {"scenario", c.key.scenario},
             {"test", c.key.test},
             {"payload_size", c.payload_size},
             {"unit", "ms"},
             {"n", s.n},
             {"min", s.min},
             {"q1", s.q1},
             {"median", s.median},
             {"q3", s.q3},
             {"max", s.max},
             {"whisker_low", s.whisker_low},
             {"whisker_high", s.whisker_high},
             {"outliers", c.pooled_outliers}};
    const fs::path file = dir / boxplot_file_name(c.key);
    write_file_atomic(file, doc.dump(2) + "\n");
    written.push_back(file);
  }
  return written;
}

}  // namespace benchkit::report
