#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gateflow/segment_proto.hpp"
#include "gateflow/time.hpp"

namespace gateflow {

/// Scalability scenario: the same load against 1..k node groups. A node is a
/// group of mock segments sharing one latency model.
struct BenchScenario {
  /// Strictly increasing node counts, each >= 1.
  std::vector<std::uint32_t> nodes{1};
  std::uint32_t segments_per_node = 1;
  LatencyModel segment;
  std::uint64_t rows = 100'000;
  std::int64_t interval_ms = 100;
  std::int64_t dispatch_cycle_ms = 10'000;
  std::size_t batch_rows = 1000;
  std::size_t connections = 2;
  std::size_t devices = 100;
  std::int64_t timeout_ms = 120'000;

  /// Throws ConfigError.
  void validate() const;
};

/// Parses a scenario document (JSON); unknown keys are rejected.
BenchScenario parse_bench_scenario(const std::string& text);
BenchScenario load_bench_scenario(const std::string& path);

struct BenchRun {
  std::uint32_t nodes = 0;
  std::uint64_t rows = 0;
  /// Wall-clock epoch microseconds.
  std::int64_t ts_us = 0;
  std::vector<std::int64_t> te_us;
  double v = 0.0;
  std::string config_hash;
};

struct BenchRatio {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double value = 0.0;
};

struct BenchReport {
  std::vector<BenchRun> runs;
  std::vector<BenchRatio> p;
  bool complete = false;
  std::optional<std::string> error;

  std::optional<double> ratio(std::uint32_t i, std::uint32_t j) const;
};

/// Runs every node count in order with in-process segments, gateway and
/// load generator. A failing run stops the sweep; the report then holds the
/// runs so far and complete == false.
BenchReport run_bench(const BenchScenario& scenario);

std::string to_json(const BenchReport& report);

}  // namespace gateflow
