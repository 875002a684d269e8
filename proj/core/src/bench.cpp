#include "gateflow/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "gateflow/config.hpp"
#include "gateflow/error.hpp"
#include "gateflow/gateway.hpp"
#include "gateflow/loadgen.hpp"
#include "gateflow/metrics.hpp"
#include "gateflow/segment_server.hpp"

namespace gateflow {

using nlohmann::json;

void BenchScenario::validate() const {
  if (nodes.empty()) throw ConfigError("bench: nodes must not be empty");
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k] == 0) throw ConfigError("bench: node counts must be >= 1");
    if (k > 0 && nodes[k] <= nodes[k - 1]) throw ConfigError("bench: node counts must be strictly increasing");
  }
  if (segments_per_node == 0) throw ConfigError("bench: segments_per_node must be >= 1");
  if (rows == 0) throw ConfigError("bench: rows must be >= 1");
  if (interval_ms <= 0) throw ConfigError("bench: interval_ms must be > 0");
  if (dispatch_cycle_ms < interval_ms) throw ConfigError("bench: dispatch_cycle_ms must be >= interval_ms");
  if (batch_rows == 0 || connections == 0 || devices == 0) {
    throw ConfigError("bench: batch_rows, connections and devices must be >= 1");
  }
  if (timeout_ms <= 0) throw ConfigError("bench: timeout_ms must be > 0");
}

BenchScenario parse_bench_scenario(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("bench: scenario must be a JSON object");
  static const std::vector<std::string> known{"nodes",      "segments_per_node", "segment",     "rows",
                                              "interval_ms", "dispatch_cycle_ms", "batch_rows",  "connections",
                                              "devices",    "timeout_ms"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("bench: unknown key '" + it.key() + "'");
    }
  }
  BenchScenario s;
  try {
    s.nodes = j.value("nodes", s.nodes);
    s.segments_per_node = j.value("segments_per_node", s.segments_per_node);
    s.rows = j.value("rows", s.rows);
    s.interval_ms = j.value("interval_ms", s.interval_ms);
    s.dispatch_cycle_ms = j.value("dispatch_cycle_ms", s.dispatch_cycle_ms);
    s.batch_rows = j.value("batch_rows", s.batch_rows);
    s.connections = j.value("connections", s.connections);
    s.devices = j.value("devices", s.devices);
    s.timeout_ms = j.value("timeout_ms", s.timeout_ms);
    if (auto it = j.find("segment"); it != j.end()) {
      for (auto f = it->begin(); f != it->end(); ++f) {
        if (f.key() != "begin_latency_ms" && f.key() != "commit_fixed_ms" && f.key() != "commit_per_row_us") {
          throw ConfigError("bench: unknown key '" + f.key() + "' in segment");
        }
      }
      const auto to_us = [](double v) { return Duration(std::llround(v * 1000.0)); };
      s.segment.begin_latency = to_us(it->value("begin_latency_ms", 0.0));
      s.segment.commit_fixed = to_us(it->value("commit_fixed_ms", 0.0));
      s.segment.commit_per_row_ns = std::llround(it->value("commit_per_row_us", 0.0) * 1000.0);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bench: ") + e.what());
  }
  s.validate();
  return s;
}

BenchScenario load_bench_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_bench_scenario(ss.str());
}

std::optional<double> BenchReport::ratio(std::uint32_t i, std::uint32_t j) const {
  for (const auto& r : p) {
    if (r.i == i && r.j == j) return r.value;
  }
  return std::nullopt;
}

namespace {

GatewayConfig run_config(const BenchScenario& s, std::uint32_t nodes) {
  GatewayConfig c;
  c.listen_addr = "127.0.0.1:0";
  c.schema = synthetic_schema();
  c.interval_ms = s.interval_ms;
  c.dispatch_cycle_ms = s.dispatch_cycle_ms;
  c.listeners = s.connections + 1;
  for (std::uint32_t n = 0; n < nodes; ++n) {
    for (std::uint32_t k = 0; k < s.segments_per_node; ++k) {
      SegmentSpec spec;
      spec.endpoint.id = "node" + std::to_string(n) + "-seg" + std::to_string(k);
      spec.latency = s.segment;
      c.segments.push_back(spec);
    }
  }
  return c;
}

BenchRun run_once(const BenchScenario& s, std::uint32_t nodes) {
  // Ports are still 0 here, so the hash does not depend on which free ports
  // the run happened to get.
  GatewayConfig config = run_config(s, nodes);
  BenchRun run;
  run.nodes = nodes;
  run.rows = s.rows;
  run.config_hash = config_hash(config);

  SegmentDaemon daemon(config.segments);
  daemon.start();
  const auto bound = daemon.endpoints();
  for (std::size_t k = 0; k < bound.size(); ++k) config.segments[k].endpoint = bound[k];

  Gateway gateway(config);
  gateway.start();

  LoadgenOptions lo;
  lo.target = gateway.address();
  lo.rate = 0;
  lo.total_rows = s.rows;
  lo.batch_rows = s.batch_rows;
  lo.connections = s.connections;
  lo.devices = s.devices;

  run.ts_us = epoch_micros();
  const auto summary = run_loadgen(lo);
  if (summary.accepted != s.rows) {
    throw DependencyError("bench: gateway accepted " + std::to_string(summary.accepted) + " of " +
                          std::to_string(s.rows) + " rows");
  }
  if (!gateway.wait_until_drained(ms(s.timeout_ms))) {
    throw DependencyError("bench: rows not committed within " + std::to_string(s.timeout_ms) + " ms");
  }
  gateway.stop();

  IngestionRun ir;
  ir.rows = s.rows;
  ir.nodes = nodes;
  ir.start = at_us(run.ts_us);
  for (std::size_t k = 0; k < daemon.size(); ++k) {
    // A segment that received no rows has no completion instant; it does not
    // bound the run.
    if (auto te = daemon.store(k).last_data_commit_epoch_us()) {
      run.te_us.push_back(*te);
      ir.segment_done.push_back(at_us(*te));
    }
  }
  daemon.stop();
  run.v = ingestion_speed(ir);
  return run;
}

}  // namespace

BenchReport run_bench(const BenchScenario& scenario) {
  scenario.validate();
  BenchReport report;
  try {
    for (auto n : scenario.nodes) {
      report.runs.push_back(run_once(scenario, n));
      spdlog::info("bench: nodes={} V={:.0f} rows/s", n, report.runs.back().v);
    }
  } catch (const std::exception& e) {
    report.error = e.what();
  }
  for (std::size_t a = 0; a < report.runs.size(); ++a) {
    for (std::size_t b = a + 1; b < report.runs.size(); ++b) {
      const auto& ra = report.runs[a];
      const auto& rb = report.runs[b];
      if (ra.v > 0) report.p.push_back({ra.nodes, rb.nodes, scalability(ra.nodes, rb.nodes, ra.v, rb.v)});
    }
  }
  report.complete = !report.error && report.runs.size() == scenario.nodes.size();
  return report;
}

std::string to_json(const BenchReport& r) {
  json j;
  auto& runs = j["runs"] = json::array();
  for (const auto& run : r.runs) {
    runs.push_back({{"nodes", run.nodes},
                    {"N", run.rows},
                    {"ts", run.ts_us},
                    {"te", run.te_us},
                    {"V", run.v},
                    {"config_hash", run.config_hash}});
  }
  auto& p = j["P"] = json::array();
  for (const auto& x : r.p) p.push_back({{"i", x.i}, {"j", x.j}, {"value", x.value}});
  j["complete"] = r.complete;
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  return j.dump(2);
}

}  // namespace gateflow
