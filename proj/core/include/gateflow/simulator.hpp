#pragma once

// Discrete-event simulation of the scheduler, its slots and latency-model
// segments on a virtual microsecond clock. The scheduler is the production
// class; only the slots and segments are modelled.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gateflow/scheduler.hpp"

namespace gateflow {

/// Arrival rate from `from` until the next step (rows per second).
struct RateStep {
  TimePoint from;
  std::int64_t rows_per_sec = 0;

  friend bool operator==(const RateStep&, const RateStep&) = default;
};

/// A one-off injection of `rows` rows at `at`.
struct Burst {
  TimePoint at;
  std::uint64_t rows = 0;

  friend bool operator==(const Burst&, const Burst&) = default;
};

struct SimConfig {
  Duration interval{ms(100)};
  Duration start_latency{ms(50)};
  /// Commit latency is commit_fixed + rows * commit_per_row_ns / 1000 us.
  Duration commit_fixed{ms(150)};
  std::int64_t commit_per_row_ns = 0;
  Duration dispatch_cycle{ms(10000)};
  Duration duration{ms(20000)};
  /// Virtual-time step of the control loop.
  Duration tick{ms(1)};
  std::vector<RateStep> arrivals{{TimePoint{}, 10000}};
  std::vector<Burst> bursts;
  /// Draw per-tick arrivals from a Poisson distribution around the schedule.
  bool poisson = false;
  std::uint64_t seed = 1;
  Strategy strategy = Strategy::Gate;
  std::size_t max_slots = 64;
  std::size_t ewma_window = 8;
  /// When set, the pool is pinned to this many slots (no tuning policies).
  std::optional<std::size_t> forced_slots;

  void validate() const;
  Duration commit_latency(std::uint64_t rows) const;
  /// Cumulative deterministic arrivals in [0, t], bursts included.
  std::uint64_t arrivals_until(TimePoint t) const;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

/// One committed micro-batch.
struct BatchRecord {
  SlotId slot;
  TimePoint send_start;
  TimePoint send_end;
  TimePoint committed_at;
  std::uint64_t rows = 0;
  /// Arrival instant of the oldest row in the batch; empty for empty batches.
  std::optional<TimePoint> oldest_arrival;

  /// committed_at - oldest_arrival, the batch's end-to-end latency.
  std::optional<Duration> latency() const;

  friend bool operator==(const BatchRecord&, const BatchRecord&) = default;
};

/// Slot counts sampled at every interval boundary after the control tick.
struct IntervalSample {
  TimePoint at;
  std::uint32_t live = 0;
  std::uint32_t in_send = 0;
  std::uint32_t in_wait = 0;

  friend bool operator==(const IntervalSample&, const IntervalSample&) = default;
};

struct SimTrace {
  Strategy strategy = Strategy::Gate;
  Duration interval{0};
  TimePoint end;
  std::vector<TraceEvent> events;
  std::vector<IntervalSample> samples;
  std::vector<BatchRecord> batches;
  /// Ticks after the first dispatch where rows were waiting but no slot was
  /// in Send or Wait: data could not be picked up.
  std::vector<TimePoint> starved_ticks;
  std::uint64_t rows_arrived = 0;
  std::uint64_t rows_committed = 0;
  std::uint64_t activations = 0;
  std::uint64_t aborts = 0;

  friend bool operator==(const SimTrace&, const SimTrace&) = default;
};

/// Thrown when the simulation reaches a state the model forbids.
class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SimTrace run_sim(const SimConfig& config);

struct StrategyComparison {
  Duration naive_mean_latency{0};
  Duration gate_mean_latency{0};
  std::size_t naive_batches = 0;
  std::size_t gate_batches = 0;
};

/// Mean batch latency of each strategy over the second half of the run.
StrategyComparison compare_strategies(const SimConfig& config);

/// Mean latency of the batches committed in the second half of the run.
std::optional<Duration> steady_mean_latency(const SimTrace& trace);

/// Phase span of one slot reconstructed from the trace.
struct PhaseSpan {
  SlotId slot;
  SlotPhase phase = SlotPhase::Connect;
  TimePoint from;
  TimePoint to;
};

std::vector<PhaseSpan> phase_spans(const SimTrace& trace);

/// Send windows, one per Send span, ordered by start.
std::vector<PhaseSpan> send_spans(const SimTrace& trace);

/// Text Gantt chart: one row per slot, one column per `resolution`.
/// Legend: '-' connect, '.' wait, '#' send, '=' commit. Empty trace -> "".
std::string render_gantt(const SimTrace& trace, std::optional<Duration> resolution = std::nullopt);

std::string trace_to_json(const SimTrace& trace);
SimTrace trace_from_json(const std::string& text);

std::string sim_config_to_json(const SimConfig& config);
SimConfig sim_config_from_json(const std::string& text);

}  // namespace gateflow
