#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "gateflow/time.hpp"

namespace gateflow {

/// One load run: N rows, started at ts, with one completion instant per
/// segment (the instant its last COMMITTED arrived).
struct IngestionRun {
  std::uint64_t rows = 0;
  TimePoint start;
  std::vector<TimePoint> segment_done;
  std::uint32_t nodes = 1;
};

/// N / (max_i te_i - ts) in rows per second. N = 0 gives 0 regardless of
/// timing. Throws ParameterError when no completion lies after ts, or when a
/// completion precedes ts.
double ingestion_speed(const IngestionRun& run);

/// P_{i,j} = (i * V_j) / (j * V_i). Throws ParameterError unless i < j and
/// V_i > 0.
double scalability(std::uint32_t i, std::uint32_t j, double v_i, double v_j);

/// de - ds. Throws ParameterError if de < ds.
Duration query_latency(TimePoint ds, TimePoint de);

/// Live gateway counters. Each counter is atomic on its own; a snapshot is
/// not consistent across counters.
struct LiveCounters {
  std::atomic<std::uint64_t> rows_accepted{0};
  std::atomic<std::uint64_t> rows_committed{0};
  std::atomic<std::uint64_t> rows_rejected{0};
  std::atomic<std::uint64_t> rows_backpressured{0};
  std::atomic<std::uint64_t> active_slots{0};
  std::atomic<std::uint64_t> slots_activated_total{0};
  std::atomic<std::uint64_t> slots_aborted_total{0};
  /// Wall-clock milliseconds since the epoch of the last COMMITTED frame; 0
  /// until the first commit.
  std::atomic<std::int64_t> last_commit_ms{0};
};

struct CounterSnapshot {
  std::uint64_t rows_accepted = 0;
  std::uint64_t rows_committed = 0;
  std::uint64_t rows_rejected = 0;
  std::uint64_t rows_backpressured = 0;
  std::uint64_t active_slots = 0;
  std::uint64_t slots_activated_total = 0;
  std::uint64_t slots_aborted_total = 0;
  std::int64_t last_commit_ms = 0;

  friend bool operator==(const CounterSnapshot&, const CounterSnapshot&) = default;
};

CounterSnapshot snapshot(const LiveCounters& counters);

/// Flat "key=value\n" document in a fixed key order.
std::string to_text(const CounterSnapshot& s);
/// Inverse of to_text; unknown keys are ignored. Throws ParameterError on a
/// malformed line.
CounterSnapshot parse_counters(const std::string& text);

}  // namespace gateflow
