#pragma once

// Control scheduling: the optimal slot count, the single-sender dispatch rule
// and the seven pool-tuning policies. Everything in this header is pure with
// respect to time: callers pass `now` in, so the simulator (virtual clock) and
// the live gateway (monotonic clock) drive the same code.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gateflow/slot_phase.hpp"
#include "gateflow/time.hpp"

namespace gateflow {

/// Interval t_d, observed start/commit latencies t_s and t_c, and the
/// dispatch cycle used for idle-slot evaluation.
struct TimingParams {
  Duration interval{ms(100)};
  Duration start_latency{0};
  Duration commit_latency{0};
  Duration dispatch_cycle{ms(10000)};

  /// Throws ParameterError unless interval > 0 and dispatch_cycle >= interval.
  void validate() const;
};

/// ceil((t_d + t_c + t_s) / t_d). Throws ParameterError if t_d <= 0 or a
/// latency is negative.
std::uint32_t optimal_slots(Duration interval, Duration start_latency, Duration commit_latency);

enum class Strategy { Naive, Gate };

/// Arrival-to-visibility time of one micro-batch: t_d + t_s + t_c when the
/// transaction is started after collection, t_d + t_c when it is pre-opened.
Duration end_to_end_latency_model(Strategy strategy, Duration interval, Duration start_latency,
                                  Duration commit_latency);

struct WaitingSlot {
  SlotId id;
  TimePoint wait_entered_at;
};

/// Earliest wait_entered_at wins; ties go to the lowest id. Throws
/// PreconditionError on an empty list.
SlotId select_sender(std::span<const WaitingSlot> waiting);

/// Exponentially weighted moving average with a span-style smoothing factor
/// alpha = 2 / (window + 1).
class LatencyEstimator {
 public:
  explicit LatencyEstimator(std::size_t window = 8);
  void observe(Duration sample);
  std::optional<Duration> value() const;
  std::size_t samples() const { return samples_; }

 private:
  double alpha_;
  double value_us_ = 0.0;
  std::size_t samples_ = 0;
};

struct SchedulerConfig {
  Duration interval{ms(100)};
  Duration dispatch_cycle{ms(10000)};
  std::size_t max_slots = 64;
  std::size_t ewma_window = 8;
  /// Added to the one-interval wait threshold before a waiting slot counts as
  /// surplus. Zero under virtual time; one tick in live mode.
  Duration wait_grace{0};
  /// Slots activated on the very first tick. The tuning policies start with 1.
  std::size_t initial_slots = 1;
  /// When false the pool stays at initial_slots: no activations after the
  /// first tick, no aborts. Used to study forced pool sizes.
  bool auto_tune = true;

  void validate() const;
};

/// Reason attached to every scheduler decision.
enum class Policy {
  Initial,     // first tick, or the forced pool
  Activate,    // data waiting and no free slot; spacing rules apply
  WaitAbort,   // waited longer than one interval
  IdleAbort,   // sent nothing for a whole dispatch cycle
  Dispatch,    // single-sender dispatch
};

std::string_view to_string(Policy policy);

enum class ActionKind { ActivateSlot, DispatchSender, AbortSlot };

std::string_view to_string(ActionKind kind);

struct Action {
  ActionKind kind = ActionKind::ActivateSlot;
  SlotId slot;
  Policy reason = Policy::Initial;
  /// For AbortSlot: true when the slot left service immediately (it was in
  /// Wait), false when the abort takes effect at its next phase boundary.
  bool immediate = false;

  friend bool operator==(const Action&, const Action&) = default;
};

enum class TraceKind { Activation, Transition, Abort, Dispatch };

std::string_view to_string(TraceKind kind);

struct TraceEvent {
  TimePoint at;
  SlotId slot;
  TraceKind kind = TraceKind::Transition;
  SlotPhase from = SlotPhase::Connect;
  SlotPhase to = SlotPhase::Connect;
  Initiator initiator = Initiator::Scheduler;
  Policy reason = Policy::Initial;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Scheduler-side view of one slot.
struct SlotState {
  SlotId id;
  SlotPhase phase = SlotPhase::Connect;
  TimePoint activated_at;
  TimePoint phase_entered_at;
  std::optional<TimePoint> wait_entered_at;
  std::optional<TimePoint> last_send_ended_at;
  std::uint64_t sent_rows_this_cycle = 0;
  std::uint64_t batch_rows = 0;
  bool entered_send_once = false;
  /// Marked by a wait or idle abort; the slot retires at its next legal boundary.
  bool abort_pending = false;
  /// Zero loss: the slot was the last one in service when marked, so it must
  /// finish a Send phase before it may retire.
  bool abort_after_send = false;
};

enum class ReadyOutcome { Wait, Retire };
enum class CommitOutcome { Reconnect, Retire };

/// Every input the scheduler receives, with the output it produced. Replaying
/// the inputs into a fresh scheduler must reproduce the outputs exactly.
struct JournalEntry {
  enum class Kind { Tick, Ready, RowsSent, SendFinished, Committed, Failure, StartLatency, CommitLatency };
  Kind kind = Kind::Tick;
  TimePoint at;
  SlotId slot;
  std::uint64_t value = 0;  // pipeline flag, row count or latency in us
  std::vector<Action> actions;
  int outcome = 0;

  friend bool operator==(const JournalEntry&, const JournalEntry&) = default;
};

class Scheduler {
 public:
  explicit Scheduler(SchedulerConfig config);

  /// Evaluates the policies in precedence order: first-tick activation,
  /// idle aborts at a cycle boundary, one wait abort, guarded activation,
  /// then dispatch. State changes implied by the returned actions are
  /// already applied when this returns.
  std::vector<Action> tick(TimePoint now, bool pipeline_nonempty);

  /// The slot's segments acknowledged BEGIN.
  ReadyOutcome on_ready(SlotId id, TimePoint now);
  void on_rows_sent(SlotId id, std::uint64_t rows);
  /// Slot-initiated Send -> Commit.
  void on_send_finished(SlotId id, TimePoint now);
  CommitOutcome on_committed(SlotId id, TimePoint now);
  /// I/O or protocol failure; the slot is retired.
  void on_failure(SlotId id, TimePoint now);

  void observe_start_latency(Duration d);
  void observe_commit_latency(Duration d);

  const SchedulerConfig& config() const { return config_; }
  const SlotState* slot(SlotId id) const;
  std::vector<SlotState> live_slots() const;
  std::size_t live_count() const;
  std::optional<SlotId> current_sender() const { return current_sender_; }
  std::optional<TimePoint> last_activation_at() const { return last_activation_at_; }
  std::optional<SlotId> last_activated_slot() const { return last_activated_; }
  std::uint64_t activated_total() const { return activated_total_; }
  std::uint64_t aborted_total() const { return aborted_total_; }

  std::optional<Duration> estimated_start_latency() const { return start_estimate_.value(); }
  std::optional<Duration> estimated_commit_latency() const { return commit_estimate_.value(); }
  /// optimal_slots over the current estimates, once both have samples.
  std::optional<std::uint32_t> estimated_optimal_slots() const;

  const std::vector<TraceEvent>& trace() const { return trace_; }

  void enable_journal(bool on = true) { journal_on_ = on; }
  const std::vector<JournalEntry>& journal() const { return journal_; }

 private:
  SlotState& require(SlotId id, const char* op);
  void transition(SlotState& s, SlotPhase to, Initiator by, TimePoint now, Policy reason);
  SlotId activate(TimePoint now, Policy reason, std::vector<Action>& out);
  void abort(SlotState& s, TimePoint now, Policy reason, std::vector<Action>& out);
  std::size_t in_service_count() const;
  void journal(JournalEntry entry);

  SchedulerConfig config_;
  std::map<SlotId, SlotState> slots_;
  std::uint32_t next_id_ = 1;
  bool started_ = false;
  TimePoint cycle_start_;
  std::optional<TimePoint> last_activation_at_;
  std::optional<SlotId> last_activated_;
  std::optional<SlotId> current_sender_;
  std::optional<TimePoint> last_wait_abort_at_;
  std::uint64_t activated_total_ = 0;
  std::uint64_t aborted_total_ = 0;
  LatencyEstimator start_estimate_;
  LatencyEstimator commit_estimate_;
  std::vector<TraceEvent> trace_;
  bool journal_on_ = false;
  std::vector<JournalEntry> journal_;
};

/// Feeds the inputs of `journal` into a fresh Scheduler and returns one
/// message per entry whose output differs. Empty means parity.
std::vector<std::string> replay_journal(const SchedulerConfig& config,
                                        std::span<const JournalEntry> journal);

}  // namespace gateflow
