#include "gateflow/simulator.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <queue>
#include <random>

#include "gateflow/error.hpp"

namespace gateflow {

void SimConfig::validate() const {
  if (tick <= Duration::zero()) throw ParameterError("sim tick must be > 0");
  if (interval <= Duration::zero()) throw ParameterError("interval must be > 0");
  if (interval % tick != Duration::zero()) throw ParameterError("interval must be a multiple of the tick");
  if (dispatch_cycle < interval) throw ParameterError("dispatch cycle must be >= interval");
  if (start_latency < Duration::zero() || commit_fixed < Duration::zero() || commit_per_row_ns < 0) {
    throw ParameterError("latencies must be >= 0");
  }
  if (duration <= Duration::zero()) throw ParameterError("duration must be > 0");
  for (const auto& step : arrivals) {
    if (step.rows_per_sec < 0) throw ParameterError("arrival rate must be >= 0");
  }
  if (forced_slots && (*forced_slots == 0 || *forced_slots > max_slots)) {
    throw ParameterError("forced_slots must be in [1, max_slots]");
  }
}

Duration SimConfig::commit_latency(std::uint64_t rows) const {
  return commit_fixed + Duration(static_cast<std::int64_t>(rows) * commit_per_row_ns / 1000);
}

std::uint64_t SimConfig::arrivals_until(TimePoint t) const {
  auto steps = arrivals;
  std::stable_sort(steps.begin(), steps.end(), [](const auto& a, const auto& b) { return a.from < b.from; });
  // Integrate rate * time in rows*us/s and divide once, so the count is exact.
  std::int64_t scaled = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const TimePoint begin = std::max(steps[i].from, TimePoint{});
    const TimePoint end = i + 1 < steps.size() ? std::min(steps[i + 1].from, t) : t;
    if (end > begin) scaled += steps[i].rows_per_sec * (end - begin).count();
  }
  std::uint64_t total = static_cast<std::uint64_t>(scaled / 1'000'000);
  for (const auto& b : bursts) {
    if (b.at <= t) total += b.rows;
  }
  return total;
}

std::optional<Duration> BatchRecord::latency() const {
  if (!oldest_arrival) return std::nullopt;
  return committed_at - *oldest_arrival;
}

namespace {

enum class EventKind { ConnectDone, SendDone, CommitDone };

struct SimEvent {
  TimePoint at;
  std::uint64_t order = 0;
  EventKind kind = EventKind::ConnectDone;
  SlotId slot;
};

struct LaterFirst {
  bool operator()(const SimEvent& a, const SimEvent& b) const {
    if (a.at != b.at) return a.at > b.at;
    return a.order > b.order;
  }
};

class EventQueue {
 public:
  void push(TimePoint at, EventKind kind, SlotId slot) { q_.push({at, next_++, kind, slot}); }
  bool due(TimePoint now) const { return !q_.empty() && q_.top().at <= now; }
  SimEvent pop() {
    auto e = q_.top();
    q_.pop();
    return e;
  }

 private:
  std::priority_queue<SimEvent, std::vector<SimEvent>, LaterFirst> q_;
  std::uint64_t next_ = 0;
};

// Rows waiting in the pipeline, grouped by arrival tick.
class Backlog {
 public:
  void add(TimePoint at, std::uint64_t rows) {
    if (rows == 0) return;
    chunks_.push_back({at, rows});
    total_ += rows;
  }
  bool empty() const { return total_ == 0; }
  std::optional<TimePoint> oldest() const {
    if (chunks_.empty()) return std::nullopt;
    return chunks_.front().first;
  }
  std::uint64_t take_all() {
    const auto n = total_;
    chunks_.clear();
    total_ = 0;
    return n;
  }

 private:
  std::deque<std::pair<TimePoint, std::uint64_t>> chunks_;
  std::uint64_t total_ = 0;
};

class ArrivalSource {
 public:
  explicit ArrivalSource(const SimConfig& config) : config_(config), rng_(config.seed) {}

  std::uint64_t rows_at(TimePoint now) {
    std::uint64_t n = 0;
    if (!config_.poisson) {
      const auto cumulative = config_.arrivals_until(now);
      n = cumulative - cumulative_;
      cumulative_ = cumulative;
      return n;
    }
    const double mean = static_cast<double>(rate_at(now)) * static_cast<double>(config_.tick.count()) / 1e6;
    if (mean > 0.0 && now > TimePoint{}) n = std::poisson_distribution<std::uint64_t>(mean)(rng_);
    for (const auto& b : config_.bursts) {
      if (b.at <= now && b.at > now - config_.tick) n += b.rows;
    }
    return n;
  }

 private:
  std::int64_t rate_at(TimePoint t) const {
    std::int64_t rate = 0;
    TimePoint best = TimePoint::min();
    for (const auto& s : config_.arrivals) {
      if (s.from <= t && s.from >= best) {
        best = s.from;
        rate = s.rows_per_sec;
      }
    }
    return rate;
  }

  const SimConfig& config_;
  std::mt19937_64 rng_;
  std::uint64_t cumulative_ = 0;
};

struct InFlightBatch {
  TimePoint send_start;
  TimePoint send_end;
  std::uint64_t rows = 0;
  std::optional<TimePoint> oldest;
};

SimTrace run_gate(const SimConfig& config) {
  SchedulerConfig sc;
  sc.interval = config.interval;
  sc.dispatch_cycle = config.dispatch_cycle;
  sc.max_slots = config.max_slots;
  sc.ewma_window = config.ewma_window;
  sc.initial_slots = config.forced_slots.value_or(1);
  sc.auto_tune = !config.forced_slots;
  Scheduler sched(sc);

  SimTrace trace;
  trace.strategy = Strategy::Gate;
  trace.interval = config.interval;
  EventQueue events;
  Backlog backlog;
  ArrivalSource source(config);
  std::map<SlotId, InFlightBatch> batches;
  bool dispatched_once = false;

  auto handle = [&](const SimEvent& e, TimePoint now) {
    switch (e.kind) {
      case EventKind::ConnectDone:
        sched.observe_start_latency(config.start_latency);
        sched.on_ready(e.slot, now);
        break;
      case EventKind::SendDone: {
        sched.on_send_finished(e.slot, now);
        auto& b = batches.at(e.slot);
        b.send_end = now;
        events.push(now + config.commit_latency(b.rows), EventKind::CommitDone, e.slot);
        break;
      }
      case EventKind::CommitDone: {
        const auto b = batches.at(e.slot);
        batches.erase(e.slot);
        sched.observe_commit_latency(now - b.send_end);
        trace.batches.push_back({e.slot, b.send_start, b.send_end, now, b.rows, b.oldest});
        trace.rows_committed += b.rows;
        if (sched.on_committed(e.slot, now) == CommitOutcome::Reconnect) {
          events.push(now + config.start_latency, EventKind::ConnectDone, e.slot);
        }
        break;
      }
    }
  };

  const TimePoint end = TimePoint{} + config.duration;
  for (TimePoint now{}; now <= end; now += config.tick) {
    bool first_pass = true;
    do {
      while (events.due(now)) handle(events.pop(), now);
      if (first_pass) {
        const auto rows = source.rows_at(now);
        backlog.add(now, rows);
        trace.rows_arrived += rows;
        first_pass = false;
      }
      for (const auto& a : sched.tick(now, !backlog.empty())) {
        if (a.kind == ActionKind::ActivateSlot) {
          events.push(now + config.start_latency, EventKind::ConnectDone, a.slot);
        } else if (a.kind == ActionKind::DispatchSender) {
          batches[a.slot] = InFlightBatch{now, now, 0, std::nullopt};
          events.push(now + config.interval, EventKind::SendDone, a.slot);
          dispatched_once = true;
        }
      }
    } while (events.due(now));

    if (auto sender = sched.current_sender()) {
      auto& b = batches.at(*sender);
      if (!backlog.empty()) {
        if (!b.oldest) b.oldest = backlog.oldest();
        const auto rows = backlog.take_all();
        b.rows += rows;
        sched.on_rows_sent(*sender, rows);
      }
    } else if (dispatched_once && !backlog.empty()) {
      const auto live = sched.live_slots();
      const bool ready = std::any_of(live.begin(), live.end(), [](const SlotState& s) {
        return s.phase == SlotPhase::Wait || s.phase == SlotPhase::Send;
      });
      if (!ready) trace.starved_ticks.push_back(now);
    }

    if ((now - TimePoint{}) % config.interval == Duration::zero()) {
      IntervalSample sample{now, 0, 0, 0};
      for (const auto& s : sched.live_slots()) {
        ++sample.live;
        if (s.phase == SlotPhase::Send) ++sample.in_send;
        if (s.phase == SlotPhase::Wait) ++sample.in_wait;
      }
      trace.samples.push_back(sample);
    }
  }

  trace.end = end;
  trace.events = sched.trace();
  trace.activations = sched.activated_total();
  trace.aborts = sched.aborted_total();
  return trace;
}

// Each batch gets a fresh loader when the previous Send ends: connect, send
// for one interval, commit. Nothing is opened ahead of time.
SimTrace run_naive(const SimConfig& config) {
  SimTrace trace;
  trace.strategy = Strategy::Naive;
  trace.interval = config.interval;
  EventQueue events;
  Backlog backlog;
  ArrivalSource source(config);
  std::map<SlotId, InFlightBatch> batches;
  std::optional<SlotId> sender;
  std::uint32_t next_id = 1;
  std::map<SlotId, SlotPhase> phase;
  bool dispatched_once = false;

  auto move = [&](SlotId id, SlotPhase to, Initiator by, TimePoint now) {
    const auto from = phase.at(id);
    if (!is_legal_transition(from, to, by)) throw SimulationFault("naive loader made an illegal transition");
    trace.events.push_back({now, id, TraceKind::Transition, from, to, by, Policy::Dispatch});
    phase[id] = to;
  };
  auto start_loader = [&](TimePoint now) {
    const SlotId id{next_id++};
    phase[id] = SlotPhase::Connect;
    ++trace.activations;
    trace.events.push_back({now, id, TraceKind::Activation, SlotPhase::Connect, SlotPhase::Connect,
                            Initiator::Scheduler, Policy::Activate});
    events.push(now + config.start_latency, EventKind::ConnectDone, id);
  };

  auto handle = [&](const SimEvent& e, TimePoint now) {
    switch (e.kind) {
      case EventKind::ConnectDone:
        if (sender) throw SimulationFault("naive loader ready while another one sends");
        move(e.slot, SlotPhase::Wait, Initiator::Scheduler, now);
        trace.events.push_back({now, e.slot, TraceKind::Dispatch, SlotPhase::Wait, SlotPhase::Send,
                                Initiator::Scheduler, Policy::Dispatch});
        move(e.slot, SlotPhase::Send, Initiator::Scheduler, now);
        sender = e.slot;
        dispatched_once = true;
        batches[e.slot] = InFlightBatch{now, now, 0, std::nullopt};
        events.push(now + config.interval, EventKind::SendDone, e.slot);
        break;
      case EventKind::SendDone: {
        move(e.slot, SlotPhase::Commit, Initiator::Slot, now);
        sender.reset();
        auto& b = batches.at(e.slot);
        b.send_end = now;
        events.push(now + config.commit_latency(b.rows), EventKind::CommitDone, e.slot);
        start_loader(now);
        break;
      }
      case EventKind::CommitDone: {
        const auto b = batches.at(e.slot);
        batches.erase(e.slot);
        trace.batches.push_back({e.slot, b.send_start, b.send_end, now, b.rows, b.oldest});
        trace.rows_committed += b.rows;
        move(e.slot, SlotPhase::Retired, Initiator::Scheduler, now);
        break;
      }
    }
  };

  const TimePoint end = TimePoint{} + config.duration;
  start_loader(TimePoint{});
  for (TimePoint now{}; now <= end; now += config.tick) {
    while (events.due(now)) handle(events.pop(), now);
    const auto rows = source.rows_at(now);
    backlog.add(now, rows);
    trace.rows_arrived += rows;
    while (events.due(now)) handle(events.pop(), now);

    if (sender) {
      auto& b = batches.at(*sender);
      if (!backlog.empty()) {
        if (!b.oldest) b.oldest = backlog.oldest();
        b.rows += backlog.take_all();
      }
    } else if (dispatched_once && !backlog.empty()) {
      trace.starved_ticks.push_back(now);
    }

    if ((now - TimePoint{}) % config.interval == Duration::zero()) {
      IntervalSample sample{now, 0, 0, 0};
      for (const auto& [id, p] : phase) {
        if (p == SlotPhase::Retired) continue;
        ++sample.live;
        if (p == SlotPhase::Send) ++sample.in_send;
      }
      trace.samples.push_back(sample);
    }
  }
  trace.end = end;
  return trace;
}

}  // namespace

SimTrace run_sim(const SimConfig& config) {
  config.validate();
  try {
    return config.strategy == Strategy::Gate ? run_gate(config) : run_naive(config);
  } catch (const PreconditionError& e) {
    throw SimulationFault(std::string("simulation invariant violated: ") + e.what());
  }
}

std::optional<Duration> steady_mean_latency(const SimTrace& trace) {
  const TimePoint half = TimePoint{} + (trace.end - TimePoint{}) / 2;
  std::int64_t sum = 0;
  std::int64_t n = 0;
  for (const auto& b : trace.batches) {
    if (b.committed_at < half) continue;
    if (auto l = b.latency()) {
      sum += l->count();
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return Duration(sum / n);
}

StrategyComparison compare_strategies(const SimConfig& config) {
  SimConfig naive = config;
  naive.strategy = Strategy::Naive;
  SimConfig gate = config;
  gate.strategy = Strategy::Gate;
  const auto nt = run_sim(naive);
  const auto gt = run_sim(gate);
  StrategyComparison out;
  out.naive_mean_latency = steady_mean_latency(nt).value_or(Duration::zero());
  out.gate_mean_latency = steady_mean_latency(gt).value_or(Duration::zero());
  out.naive_batches = nt.batches.size();
  out.gate_batches = gt.batches.size();
  return out;
}

std::vector<PhaseSpan> phase_spans(const SimTrace& trace) {
  std::vector<PhaseSpan> out;
  std::map<SlotId, std::pair<SlotPhase, TimePoint>> open;
  for (const auto& e : trace.events) {
    if (e.kind == TraceKind::Activation) {
      open[e.slot] = {SlotPhase::Connect, e.at};
    } else if (e.kind == TraceKind::Transition) {
      auto it = open.find(e.slot);
      if (it == open.end()) continue;
      out.push_back({e.slot, it->second.first, it->second.second, e.at});
      if (e.to == SlotPhase::Retired) {
        open.erase(it);
      } else {
        it->second = {e.to, e.at};
      }
    }
  }
  for (const auto& [id, p] : open) out.push_back({id, p.first, p.second, std::max(trace.end, p.second)});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.from != b.from) return a.from < b.from;
    return a.slot < b.slot;
  });
  return out;
}

std::vector<PhaseSpan> send_spans(const SimTrace& trace) {
  auto spans = phase_spans(trace);
  std::erase_if(spans, [](const PhaseSpan& s) { return s.phase != SlotPhase::Send; });
  return spans;
}

std::string render_gantt(const SimTrace& trace, std::optional<Duration> resolution) {
  if (trace.events.empty()) return {};
  Duration res = resolution.value_or(trace.interval / 10);
  if (res <= Duration::zero()) res = ms(10);
  const auto spans = phase_spans(trace);
  TimePoint end = trace.end;
  for (const auto& s : spans) end = std::max(end, s.to);
  const auto columns = static_cast<std::size_t>((end - TimePoint{} + res - Duration(1)) / res);

  std::map<SlotId, std::string> rows;
  for (const auto& s : spans) rows.try_emplace(s.slot, std::string(columns, ' '));
  for (const auto& s : spans) {
    char mark = ' ';
    switch (s.phase) {
      case SlotPhase::Connect:
        mark = '-';
        break;
      case SlotPhase::Wait:
        mark = '.';
        break;
      case SlotPhase::Send:
        mark = '#';
        break;
      case SlotPhase::Commit:
        mark = '=';
        break;
      case SlotPhase::Retired:
        break;
    }
    // A column shows the phase that holds at its left edge.
    auto first = static_cast<std::size_t>((s.from - TimePoint{} + res - Duration(1)) / res);
    auto last = static_cast<std::size_t>((s.to - TimePoint{} + res - Duration(1)) / res);
    for (auto c = first; c < last && c < columns; ++c) rows[s.slot][c] = mark;
  }

  std::string out = "# resolution_us=" + std::to_string(res.count()) +
                    " end_us=" + std::to_string(count_us(end)) +
                    " legend: '-' connect '.' wait '#' send '=' commit\n";
  for (const auto& [id, line] : rows) {
    std::string label = "slot " + std::to_string(id.value);
    label.resize(std::max<std::size_t>(label.size(), 9), ' ');
    out += label + " |" + line + "|\n";
  }
  return out;
}

}  // namespace gateflow
