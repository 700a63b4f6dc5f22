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
#include "benchkit/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "benchkit/broker.hpp"
#include "benchkit/plan.hpp"
#include "benchkit/proxy.hpp"
#include "benchkit/report.hpp"
#include "benchkit/runner.hpp"
#include "benchkit/scenario.hpp"

namespace benchkit::cli {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};
std::atomic<bool> g_serving{false};

constexpr const char* kDefaultConfig = "./benchkit.yml";

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw plan::PlanError(plan::PlanError::Kind::Io, "", fmt::format("cannot read '{}'", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void wait_for_stop() {
  g_serving.store(true);
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  g_serving.store(false);
}

struct RunArgs {
  std::string config = kDefaultConfig;
  std::vector<std::string> only;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  plan::TestPlan p;
  runner::RunOptions opts;
  try {
    p = plan::load_plan_file(a.config);
    plan::restrict_brokers(p, a.only);
    opts.only_brokers = a.only;
    if (!a.scenario.empty()) {
      plan::restrict_scenario(p, a.scenario);
      opts.only_scenario = a.scenario;
    }
  } catch (const plan::PlanError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  if (a.seed) p.seed = *a.seed;
  if (!a.out_dir.empty()) {
    p.output_dir = a.out_dir;
  } else if (const char* env = std::getenv("BENCHKIT_OUT"); env && *env) {
    p.output_dir = env;
  }
  opts.progress = &out;

  runner::PlanOutcome outcome;
  try {
    outcome = runner::run_plan(p, opts);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  out << '\n' << report::render_median_iqr_table(outcome.results);
  out << fmt::format("\n{} cells: {} complete, {} partial, {} failed; summary in {}\n", outcome.cells.size(),
                     outcome.count("complete"), outcome.count("partial"), outcome.count("failed"),
                     (outcome.output_dir / "summary.json").string());
  for (const auto& c : outcome.cells)
    if (!c.error.empty()) err << fmt::format("{}/{}/{}: {}\n", c.key.broker, c.key.scenario, c.key.test, c.error);
  return outcome.fully_successful() ? 0 : 2;
}

int cmd_scenarios(const std::string& config, bool explicit_config, std::ostream& out, std::ostream& err) {
  std::vector<impair::Scenario> catalog;
  try {
    if (explicit_config || fs::exists(config)) {
      catalog = plan::scenario_catalog(read_text(config));
    } else {
      const auto presets = impair::preset_scenarios();
      catalog.assign(presets.begin(), presets.end());
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  out << fmt::format("{:<12} {:>10} {:>9} {:>8}\n", "name", "latency_ms", "jitter_ms", "loss_pct");
  for (const auto& s : catalog)
    out << fmt::format("{:<12} {:>10} {:>9} {:>8}\n", s.name, s.latency_ms, s.jitter_ms, s.loss_pct);
  return 0;
}

struct ProxyArgs {
  std::string listen;
  std::string upstream;
  std::string scenario = "local";
  std::uint64_t seed = 0;
  std::string config;
};

int cmd_proxy(const ProxyArgs& a, std::ostream& out, std::ostream& err) {
  proxy::ProxyOptions po;
  try {
    po.listen = net::parse_endpoint(a.listen);
    po.upstream = net::parse_endpoint(a.upstream);
    std::vector<impair::Scenario> catalog;
    if (!a.config.empty()) {
      const auto p = plan::load_plan_file(a.config);
      po.loss = p.proxy.loss;
      catalog = plan::scenario_catalog(read_text(a.config));
    } else {
      const auto presets = impair::preset_scenarios();
      catalog.assign(presets.begin(), presets.end());
    }
    const auto it = std::find_if(catalog.begin(), catalog.end(), [&](const auto& s) { return s.name == a.scenario; });
    if (it == catalog.end()) {
      err << fmt::format("error: UnknownScenario '{}'\n", a.scenario);
      return 1;
    }
    po.scenario = *it;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  po.seed = a.seed;
  po.record_schedule = false;
  std::unique_ptr<proxy::Proxy> px;
  try {
    px = proxy::Proxy::start(po);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  out << fmt::format("proxy listening on {} -> {} (scenario {}: {} ms, {} ms, {} %)", px->endpoint().to_string(),
                     po.upstream.to_string(), po.scenario.name, po.scenario.latency_ms, po.scenario.jitter_ms,
                     po.scenario.loss_pct)
      << std::endl;
  wait_for_stop();
  px->shutdown();
  const auto st = px->stats();
  out << fmt::format("connections {}, chunks {}/{}, penalties {}/{}\n", st.connections, st.chunks[0], st.chunks[1],
                     st.penalties[0], st.penalties[1]);
  return 0;
}

int cmd_stub(const std::string& listen, const std::string& faults, std::ostream& out, std::ostream& err) {
  std::unique_ptr<broker::StubBroker> stub;
  try {
    stub = broker::StubBroker::start(net::parse_endpoint(listen), broker::parse_fault_plan(faults));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  out << fmt::format("stub broker listening on {}", stub->endpoint().to_string()) << std::endl;
  wait_for_stop();
  stub->shutdown();
  const auto c = stub->counters();
  out << fmt::format("connects {}, publishes {}, deliveries {}\n", c.connects_accepted, c.publishes_received,
                     c.deliveries);
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format, std::ostream& out, std::ostream& err) {
  const fs::path file = fs::path(in_dir) / "results.json";
  std::vector<report::ResultCell> cells;
  if (fs::exists(file)) {
    try {
      cells = report::import_json(file);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
  }
  if (cells.empty()) {
    err << fmt::format("no results found in '{}'\n", in_dir);
    return 1;
  }
  try {
    if (format == "table") {
      out << report::render_median_iqr_table(cells, report::TableStyle::Plain);
    } else if (format == "markdown") {
      out << report::render_median_iqr_table(cells, report::TableStyle::Markdown);
    } else if (format == "csv") {
      out << report::render_csv(cells, false);
    } else if (format == "json") {
      out << report::cells_to_json(cells).dump(2) << '\n';
    } else {
      for (const auto& p : report::export_boxplot_data(cells, fs::path(in_dir) / "boxplot")) out << p.string() << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

void request_stop() noexcept { g_stop.store(true); }

bool serving() noexcept { return g_serving.load(); }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  g_stop.store(false);
  CLI::App app{"MQTT broker latency benchmark harness", "benchkit"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging on stderr");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run a benchmark plan");
  run->add_option("--config", run_args.config, "Plan file")->capture_default_str();
  run->add_option("--only", run_args.only, "Only these brokers")->delimiter(',');
  run->add_option("--scenario", run_args.scenario, "Only this scenario");
  run->add_option("--seed", run_args.seed, "Override the plan seed");
  run->add_option("--out", run_args.out_dir, "Output directory (default: BENCHKIT_OUT, then the plan's output_dir)");

  ProxyArgs proxy_args;
  auto* prx = app.add_subcommand("proxy", "Run the impairment proxy standalone");
  prx->add_option("--listen", proxy_args.listen, "host:port to accept on")->required();
  prx->add_option("--upstream", proxy_args.upstream, "Broker host:port")->required();
  prx->add_option("--scenario", proxy_args.scenario, "Scenario name")->capture_default_str();
  prx->add_option("--seed", proxy_args.seed, "RNG seed")->capture_default_str();
  prx->add_option("--config", proxy_args.config, "Plan file with custom scenarios and loss model");

  std::string stub_listen = "127.0.0.1:1883";
  std::string stub_faults;
  auto* stub = app.add_subcommand("stub", "Run the stub broker standalone");
  stub->add_option("--listen", stub_listen, "host:port to accept on")->capture_default_str();
  stub->add_option("--faults", stub_faults, "drop_pubacks=N,connack=C,grant_qos=Q");

  std::string scenarios_config = kDefaultConfig;
  auto* scen = app.add_subcommand("scenarios", "List network scenarios");
  auto* scen_cfg = scen->add_option("--config", scenarios_config, "Plan file with custom scenarios");

  std::string report_in;
  std::string report_format = "table";
  auto* rep = app.add_subcommand("report", "Render stored results");
  rep->add_option("--in", report_in, "Results directory (default: BENCHKIT_OUT, then ./results)");
  rep->add_option("--format", report_format, "Output format")
      ->check(CLI::IsMember({"table", "markdown", "csv", "json", "boxplot"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  if (*run) return cmd_run(run_args, out, err);
  if (*prx) return cmd_proxy(proxy_args, out, err);
  if (*stub) return cmd_stub(stub_listen, stub_faults, out, err);
  if (*scen) return cmd_scenarios(scenarios_config, scen_cfg->count() > 0, out, err);
  if (report_in.empty()) {
    const char* env = std::getenv("BENCHKIT_OUT");
    report_in = env && *env ? env : "results";
  }
  return cmd_report(report_in, report_format, out, err);
}

}  // namespace benchkit::cli
