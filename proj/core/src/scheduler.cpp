#include "gateflow/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gateflow/error.hpp"

namespace gateflow {

void TimingParams::validate() const {
  if (interval <= Duration::zero()) throw ParameterError("interval must be > 0");
  if (dispatch_cycle < interval) throw ParameterError("dispatch cycle must be >= interval");
  if (start_latency < Duration::zero() || commit_latency < Duration::zero()) {
    throw ParameterError("latencies must be >= 0");
  }
}

std::uint32_t optimal_slots(Duration interval, Duration start_latency, Duration commit_latency) {
  if (interval <= Duration::zero()) throw ParameterError("optimal_slots: interval must be > 0");
  if (start_latency < Duration::zero() || commit_latency < Duration::zero()) {
    throw ParameterError("optimal_slots: latencies must be >= 0");
  }
  const auto busy = interval.count() + commit_latency.count() + start_latency.count();
  return static_cast<std::uint32_t>((busy + interval.count() - 1) / interval.count());
}

Duration end_to_end_latency_model(Strategy strategy, Duration interval, Duration start_latency,
                                  Duration commit_latency) {
  if (interval <= Duration::zero()) throw ParameterError("latency model: interval must be > 0");
  switch (strategy) {
    case Strategy::Naive:
      return interval + start_latency + commit_latency;
    case Strategy::Gate:
      return interval + commit_latency;
  }
  return interval + start_latency + commit_latency;
}

SlotId select_sender(std::span<const WaitingSlot> waiting) {
  if (waiting.empty()) throw PreconditionError("select_sender: no waiting slot");
  const auto it = std::min_element(waiting.begin(), waiting.end(), [](const auto& a, const auto& b) {
    if (a.wait_entered_at != b.wait_entered_at) return a.wait_entered_at < b.wait_entered_at;
    return a.id < b.id;
  });
  return it->id;
}

LatencyEstimator::LatencyEstimator(std::size_t window)
    : alpha_(2.0 / (static_cast<double>(std::max<std::size_t>(window, 1)) + 1.0)) {}

void LatencyEstimator::observe(Duration sample) {
  const auto x = static_cast<double>(sample.count());
  value_us_ = samples_ == 0 ? x : alpha_ * x + (1.0 - alpha_) * value_us_;
  ++samples_;
}

std::optional<Duration> LatencyEstimator::value() const {
  if (samples_ == 0) return std::nullopt;
  return Duration(static_cast<Duration::rep>(std::llround(value_us_)));
}

void SchedulerConfig::validate() const {
  if (interval <= Duration::zero()) throw ParameterError("interval must be > 0");
  if (dispatch_cycle < interval) throw ParameterError("dispatch cycle must be >= interval");
  if (max_slots == 0) throw ParameterError("max_slots must be >= 1");
  if (initial_slots > max_slots) throw ParameterError("initial_slots exceeds max_slots");
  if (wait_grace < Duration::zero()) throw ParameterError("wait_grace must be >= 0");
}

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::Initial:
      return "initial";
    case Policy::Activate:
      return "activate";
    case Policy::WaitAbort:
      return "wait-abort";
    case Policy::IdleAbort:
      return "idle-abort";
    case Policy::Dispatch:
      return "dispatch";
  }
  return "initial";
}

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::ActivateSlot:
      return "activate";
    case ActionKind::DispatchSender:
      return "dispatch";
    case ActionKind::AbortSlot:
      return "abort";
  }
  return "activate";
}

std::string_view to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::Activation:
      return "activation";
    case TraceKind::Transition:
      return "transition";
    case TraceKind::Abort:
      return "abort";
    case TraceKind::Dispatch:
      return "dispatch";
  }
  return "transition";
}

Scheduler::Scheduler(SchedulerConfig config)
    : config_(config), start_estimate_(config.ewma_window), commit_estimate_(config.ewma_window) {
  config_.validate();
}

SlotState& Scheduler::require(SlotId id, const char* op) {
  auto it = slots_.find(id);
  if (it == slots_.end()) {
    throw PreconditionError(std::string(op) + ": unknown slot " + std::to_string(id.value));
  }
  return it->second;
}

const SlotState* Scheduler::slot(SlotId id) const {
  auto it = slots_.find(id);
  return it == slots_.end() ? nullptr : &it->second;
}

std::vector<SlotState> Scheduler::live_slots() const {
  std::vector<SlotState> out;
  for (const auto& [id, s] : slots_) {
    if (s.phase != SlotPhase::Retired) out.push_back(s);
  }
  return out;
}

std::size_t Scheduler::live_count() const {
  return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const auto& kv) {
    return kv.second.phase != SlotPhase::Retired;
  }));
}

std::size_t Scheduler::in_service_count() const {
  return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const auto& kv) {
    return kv.second.phase != SlotPhase::Retired && !kv.second.abort_pending;
  }));
}

std::optional<std::uint32_t> Scheduler::estimated_optimal_slots() const {
  auto ts = start_estimate_.value();
  auto tc = commit_estimate_.value();
  if (!ts || !tc) return std::nullopt;
  return optimal_slots(config_.interval, *ts, *tc);
}

void Scheduler::transition(SlotState& s, SlotPhase to, Initiator by, TimePoint now, Policy reason) {
  if (!is_legal_transition(s.phase, to, by)) {
    throw PreconditionError("illegal slot transition " + std::string(to_string(s.phase)) + " -> " +
                            std::string(to_string(to)) + " by " + std::string(to_string(by)) +
                            " (slot " + std::to_string(s.id.value) + ")");
  }
  trace_.push_back({now, s.id, TraceKind::Transition, s.phase, to, by, reason});
  if (s.phase == SlotPhase::Wait) s.wait_entered_at.reset();
  if (s.phase == SlotPhase::Send && current_sender_ == s.id) current_sender_.reset();
  s.phase = to;
  s.phase_entered_at = now;
  if (to == SlotPhase::Wait) s.wait_entered_at = now;
  if (to == SlotPhase::Send) {
    s.entered_send_once = true;
    s.batch_rows = 0;
    current_sender_ = s.id;
  }
}

SlotId Scheduler::activate(TimePoint now, Policy reason, std::vector<Action>& out) {
  const SlotId id{next_id_++};
  SlotState s;
  s.id = id;
  s.phase = SlotPhase::Connect;
  s.activated_at = now;
  s.phase_entered_at = now;
  slots_.emplace(id, s);
  last_activation_at_ = now;
  last_activated_ = id;
  ++activated_total_;
  trace_.push_back({now, id, TraceKind::Activation, SlotPhase::Connect, SlotPhase::Connect,
                    Initiator::Scheduler, reason});
  out.push_back({ActionKind::ActivateSlot, id, reason, false});
  return id;
}

void Scheduler::abort(SlotState& s, TimePoint now, Policy reason, std::vector<Action>& out) {
  // Zero loss: the last slot in service is never taken out before it has
  // finished a Send phase. A slot already in Commit has just finished one.
  const bool last_in_service = in_service_count() == 1;
  ++aborted_total_;
  trace_.push_back({now, s.id, TraceKind::Abort, s.phase, s.phase, Initiator::Scheduler, reason});
  if (s.phase == SlotPhase::Wait && !last_in_service) {
    transition(s, SlotPhase::Retired, Initiator::Scheduler, now, reason);
    out.push_back({ActionKind::AbortSlot, s.id, reason, true});
    return;
  }
  s.abort_pending = true;
  s.abort_after_send = last_in_service && s.phase != SlotPhase::Commit;
  out.push_back({ActionKind::AbortSlot, s.id, reason, false});
}

std::vector<Action> Scheduler::tick(TimePoint now, bool pipeline_nonempty) {
  std::vector<Action> out;

  if (!started_) {
    started_ = true;
    cycle_start_ = now;
    for (std::size_t i = 0; i < config_.initial_slots; ++i) {
      activate(now, Policy::Initial, out);
    }
  }

  if (config_.auto_tune) {
    // Idle sweep: at a dispatch-cycle boundary, slots that were in service for
    // the whole cycle and sent no rows are aborted.
    if (now - cycle_start_ >= config_.dispatch_cycle) {
      const TimePoint closed_cycle_start = cycle_start_;
      const auto cycles = (now - cycle_start_) / config_.dispatch_cycle;
      cycle_start_ += cycles * config_.dispatch_cycle;
      for (auto& [id, s] : slots_) {
        if (s.phase == SlotPhase::Retired || s.abort_pending) continue;
        if (s.activated_at > closed_cycle_start) continue;
        if (s.sent_rows_this_cycle == 0) abort(s, now, Policy::IdleAbort, out);
      }
      for (auto& [id, s] : slots_) s.sent_rows_this_cycle = 0;
    }

    // Surplus waiter: one abort per interval, never the last slot in service.
    const bool cooled = !last_wait_abort_at_ || now - *last_wait_abort_at_ >= config_.interval;
    if (cooled && in_service_count() > 1) {
      SlotState* victim = nullptr;
      for (auto& [id, s] : slots_) {
        if (s.phase != SlotPhase::Wait || s.abort_pending || !s.wait_entered_at) continue;
        if (now - *s.wait_entered_at <= config_.interval + config_.wait_grace) continue;
        if (victim == nullptr || *s.wait_entered_at < *victim->wait_entered_at) victim = &s;
      }
      if (victim != nullptr) {
        abort(*victim, now, Policy::WaitAbort, out);
        last_wait_abort_at_ = now;
      }
    }

    // Grow the pool when data waits and no slot can take it, at most once per
    // interval and only after the previous newcomer has started sending.
    bool sending_or_ready = false;
    for (const auto& [id, s] : slots_) {
      if (s.phase == SlotPhase::Send || s.phase == SlotPhase::Wait) sending_or_ready = true;
    }
    if (pipeline_nonempty && !sending_or_ready && live_count() < config_.max_slots) {
      const bool spaced = !last_activation_at_ || now - *last_activation_at_ >= config_.interval;
      bool previous_sent = true;
      if (last_activated_) {
        const auto& prev = slots_.at(*last_activated_);
        previous_sent = prev.entered_send_once || prev.phase == SlotPhase::Retired;
      }
      if (spaced && previous_sent) activate(now, Policy::Activate, out);
    }
  }

  // Dispatch: at most one sender at any time.
  if (!current_sender_) {
    std::vector<WaitingSlot> waiting;
    for (const auto& [id, s] : slots_) {
      if (s.phase == SlotPhase::Wait && s.wait_entered_at) waiting.push_back({id, *s.wait_entered_at});
    }
    if (!waiting.empty()) {
      const SlotId chosen = select_sender(waiting);
      auto& s = slots_.at(chosen);
      trace_.push_back({now, chosen, TraceKind::Dispatch, SlotPhase::Wait, SlotPhase::Send,
                        Initiator::Scheduler, Policy::Dispatch});
      transition(s, SlotPhase::Send, Initiator::Scheduler, now, Policy::Dispatch);
      out.push_back({ActionKind::DispatchSender, chosen, Policy::Dispatch, false});
    }
  }

  journal({JournalEntry::Kind::Tick, now, SlotId{}, pipeline_nonempty ? 1u : 0u, out, 0});
  return out;
}

ReadyOutcome Scheduler::on_ready(SlotId id, TimePoint now) {
  auto& s = require(id, "on_ready");
  if (s.phase != SlotPhase::Connect) {
    throw PreconditionError("on_ready: slot " + std::to_string(id.value) + " is not connecting");
  }
  transition(s, SlotPhase::Wait, Initiator::Scheduler, now, Policy::Dispatch);
  ReadyOutcome outcome = ReadyOutcome::Wait;
  if (s.abort_pending && !s.abort_after_send) {
    transition(s, SlotPhase::Retired, Initiator::Scheduler, now, Policy::IdleAbort);
    outcome = ReadyOutcome::Retire;
  }
  journal({JournalEntry::Kind::Ready, now, id, 0, {}, static_cast<int>(outcome)});
  return outcome;
}

void Scheduler::on_rows_sent(SlotId id, std::uint64_t rows) {
  auto& s = require(id, "on_rows_sent");
  if (s.phase != SlotPhase::Send) {
    throw PreconditionError("on_rows_sent: slot " + std::to_string(id.value) + " is not sending");
  }
  s.sent_rows_this_cycle += rows;
  s.batch_rows += rows;
  journal({JournalEntry::Kind::RowsSent, TimePoint{}, id, rows, {}, 0});
}

void Scheduler::on_send_finished(SlotId id, TimePoint now) {
  auto& s = require(id, "on_send_finished");
  transition(s, SlotPhase::Commit, Initiator::Slot, now, Policy::Dispatch);
  s.last_send_ended_at = now;
  s.abort_after_send = false;
  journal({JournalEntry::Kind::SendFinished, now, id, 0, {}, 0});
}

CommitOutcome Scheduler::on_committed(SlotId id, TimePoint now) {
  auto& s = require(id, "on_committed");
  if (s.phase != SlotPhase::Commit) {
    throw PreconditionError("on_committed: slot " + std::to_string(id.value) + " is not committing");
  }
  CommitOutcome outcome = CommitOutcome::Reconnect;
  if (s.abort_pending && !s.abort_after_send) {
    transition(s, SlotPhase::Retired, Initiator::Scheduler, now, Policy::IdleAbort);
    outcome = CommitOutcome::Retire;
  } else {
    transition(s, SlotPhase::Connect, Initiator::Scheduler, now, Policy::Dispatch);
  }
  journal({JournalEntry::Kind::Committed, now, id, 0, {}, static_cast<int>(outcome)});
  return outcome;
}

void Scheduler::on_failure(SlotId id, TimePoint now) {
  auto& s = require(id, "on_failure");
  if (s.phase != SlotPhase::Retired) {
    transition(s, SlotPhase::Retired, Initiator::Failure, now, Policy::Dispatch);
  }
  journal({JournalEntry::Kind::Failure, now, id, 0, {}, 0});
}

void Scheduler::observe_start_latency(Duration d) {
  start_estimate_.observe(d);
  journal({JournalEntry::Kind::StartLatency, TimePoint{}, SlotId{}, static_cast<std::uint64_t>(d.count()), {}, 0});
}

void Scheduler::observe_commit_latency(Duration d) {
  commit_estimate_.observe(d);
  journal({JournalEntry::Kind::CommitLatency, TimePoint{}, SlotId{}, static_cast<std::uint64_t>(d.count()), {}, 0});
}

void Scheduler::journal(JournalEntry entry) {
  if (journal_on_) journal_.push_back(std::move(entry));
}

std::vector<std::string> replay_journal(const SchedulerConfig& config,
                                        std::span<const JournalEntry> journal) {
  Scheduler replica(config);
  std::vector<std::string> mismatches;
  std::size_t index = 0;
  for (const auto& e : journal) {
    using K = JournalEntry::Kind;
    switch (e.kind) {
      case K::Tick: {
        auto actions = replica.tick(e.at, e.value != 0);
        if (actions != e.actions) {
          mismatches.push_back("entry " + std::to_string(index) + ": tick at " +
                               std::to_string(count_us(e.at)) + " produced different actions");
        }
        break;
      }
      case K::Ready: {
        auto outcome = static_cast<int>(replica.on_ready(e.slot, e.at));
        if (outcome != e.outcome) mismatches.push_back("entry " + std::to_string(index) + ": ready outcome");
        break;
      }
      case K::RowsSent:
        replica.on_rows_sent(e.slot, e.value);
        break;
      case K::SendFinished:
        replica.on_send_finished(e.slot, e.at);
        break;
      case K::Committed: {
        auto outcome = static_cast<int>(replica.on_committed(e.slot, e.at));
        if (outcome != e.outcome) mismatches.push_back("entry " + std::to_string(index) + ": commit outcome");
        break;
      }
      case K::Failure:
        replica.on_failure(e.slot, e.at);
        break;
      case K::StartLatency:
        replica.observe_start_latency(Duration(static_cast<Duration::rep>(e.value)));
        break;
      case K::CommitLatency:
        replica.observe_commit_latency(Duration(static_cast<Duration::rep>(e.value)));
        break;
    }
    ++index;
  }
  return mismatches;
}

}  // namespace gateflow
