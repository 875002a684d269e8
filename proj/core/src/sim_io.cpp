#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "gateflow/error.hpp"
#include "gateflow/simulator.hpp"

namespace gateflow {

using nlohmann::json;

namespace {

std::string_view strategy_name(Strategy s) { return s == Strategy::Gate ? "gate" : "naive"; }

Strategy parse_strategy(const std::string& s) {
  if (s == "gate") return Strategy::Gate;
  if (s == "naive") return Strategy::Naive;
  throw ConfigError("unknown strategy '" + s + "'");
}

TraceKind parse_trace_kind(const std::string& s) {
  for (auto k : {TraceKind::Activation, TraceKind::Transition, TraceKind::Abort, TraceKind::Dispatch}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown trace event kind '" + s + "'");
}

Initiator parse_initiator(const std::string& s) {
  for (auto i : {Initiator::Scheduler, Initiator::Slot, Initiator::Failure}) {
    if (to_string(i) == s) return i;
  }
  throw ConfigError("unknown initiator '" + s + "'");
}

Policy parse_policy(const std::string& s) {
  for (auto p : {Policy::Initial, Policy::Activate, Policy::WaitAbort, Policy::IdleAbort, Policy::Dispatch}) {
    if (to_string(p) == s) return p;
  }
  throw ConfigError("unknown policy '" + s + "'");
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

}  // namespace

std::string trace_to_json(const SimTrace& trace) {
  json j;
  j["strategy"] = strategy_name(trace.strategy);
  j["interval_us"] = trace.interval.count();
  j["end_us"] = count_us(trace.end);
  j["rows_arrived"] = trace.rows_arrived;
  j["rows_committed"] = trace.rows_committed;
  j["activations"] = trace.activations;
  j["aborts"] = trace.aborts;
  auto& events = j["events"] = json::array();
  for (const auto& e : trace.events) {
    events.push_back({{"at_us", count_us(e.at)},
                      {"slot", e.slot.value},
                      {"kind", to_string(e.kind)},
                      {"from", to_string(e.from)},
                      {"to", to_string(e.to)},
                      {"by", to_string(e.initiator)},
                      {"reason", to_string(e.reason)}});
  }
  auto& samples = j["samples"] = json::array();
  for (const auto& s : trace.samples) {
    samples.push_back({count_us(s.at), s.live, s.in_send, s.in_wait});
  }
  auto& batches = j["batches"] = json::array();
  for (const auto& b : trace.batches) {
    json jb = {{"slot", b.slot.value},
               {"send_start_us", count_us(b.send_start)},
               {"send_end_us", count_us(b.send_end)},
               {"committed_us", count_us(b.committed_at)},
               {"rows", b.rows}};
    jb["oldest_arrival_us"] = b.oldest_arrival ? json(count_us(*b.oldest_arrival)) : json(nullptr);
    batches.push_back(std::move(jb));
  }
  auto& starved = j["starved_us"] = json::array();
  for (auto t : trace.starved_ticks) starved.push_back(count_us(t));
  return j.dump();
}

SimTrace trace_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    SimTrace t;
    t.strategy = parse_strategy(j.at("strategy").get<std::string>());
    t.interval = Duration(j.at("interval_us").get<std::int64_t>());
    t.end = at_us(j.at("end_us").get<std::int64_t>());
    t.rows_arrived = j.at("rows_arrived").get<std::uint64_t>();
    t.rows_committed = j.at("rows_committed").get<std::uint64_t>();
    t.activations = j.at("activations").get<std::uint64_t>();
    t.aborts = j.at("aborts").get<std::uint64_t>();
    for (const auto& e : j.at("events")) {
      t.events.push_back({at_us(e.at("at_us").get<std::int64_t>()),
                          SlotId{e.at("slot").get<std::uint32_t>()},
                          parse_trace_kind(e.at("kind").get<std::string>()),
                          parse_slot_phase(e.at("from").get<std::string>()),
                          parse_slot_phase(e.at("to").get<std::string>()),
                          parse_initiator(e.at("by").get<std::string>()),
                          parse_policy(e.at("reason").get<std::string>())});
    }
    for (const auto& s : j.at("samples")) {
      t.samples.push_back({at_us(s.at(0).get<std::int64_t>()), s.at(1).get<std::uint32_t>(),
                           s.at(2).get<std::uint32_t>(), s.at(3).get<std::uint32_t>()});
    }
    for (const auto& b : j.at("batches")) {
      BatchRecord r;
      r.slot = SlotId{b.at("slot").get<std::uint32_t>()};
      r.send_start = at_us(b.at("send_start_us").get<std::int64_t>());
      r.send_end = at_us(b.at("send_end_us").get<std::int64_t>());
      r.committed_at = at_us(b.at("committed_us").get<std::int64_t>());
      r.rows = b.at("rows").get<std::uint64_t>();
      if (!b.at("oldest_arrival_us").is_null()) r.oldest_arrival = at_us(b.at("oldest_arrival_us").get<std::int64_t>());
      t.batches.push_back(r);
    }
    for (const auto& s : j.at("starved_us")) t.starved_ticks.push_back(at_us(s.get<std::int64_t>()));
    return t;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed trace: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("malformed trace: ") + e.what());
  }
}

std::string sim_config_to_json(const SimConfig& c) {
  json j;
  j["interval_ms"] = c.interval.count() / 1000.0;
  j["start_latency_ms"] = c.start_latency.count() / 1000.0;
  j["commit_fixed_ms"] = c.commit_fixed.count() / 1000.0;
  j["commit_per_row_ns"] = c.commit_per_row_ns;
  j["dispatch_cycle_ms"] = c.dispatch_cycle.count() / 1000.0;
  j["duration_ms"] = c.duration.count() / 1000.0;
  j["tick_ms"] = c.tick.count() / 1000.0;
  auto& arrivals = j["arrivals"] = json::array();
  for (const auto& a : c.arrivals) arrivals.push_back({{"from_ms", count_us(a.from) / 1000.0}, {"rows_per_sec", a.rows_per_sec}});
  auto& bursts = j["bursts"] = json::array();
  for (const auto& b : c.bursts) bursts.push_back({{"at_ms", count_us(b.at) / 1000.0}, {"rows", b.rows}});
  j["poisson"] = c.poisson;
  j["seed"] = c.seed;
  j["strategy"] = strategy_name(c.strategy);
  j["max_slots"] = c.max_slots;
  j["ewma_window"] = c.ewma_window;
  j["forced_slots"] = c.forced_slots ? json(*c.forced_slots) : json(nullptr);
  return j.dump(2);
}

namespace {

Duration from_ms(double v) { return Duration(static_cast<std::int64_t>(std::llround(v * 1000.0))); }

}  // namespace

SimConfig sim_config_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("simulation config must be a JSON object");
    static constexpr std::string_view kKnown[] = {
        "interval_ms", "start_latency_ms", "commit_fixed_ms", "commit_per_row_ns", "dispatch_cycle_ms",
        "duration_ms", "tick_ms",          "arrivals",        "bursts",            "poisson",
        "seed",        "strategy",         "max_slots",       "ewma_window",       "forced_slots"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::find(std::begin(kKnown), std::end(kKnown), it.key()) == std::end(kKnown)) {
        throw ConfigError("unknown simulation config key '" + it.key() + "'");
      }
    }
    SimConfig c;
    c.interval = from_ms(get_or(j, "interval_ms", c.interval.count() / 1000.0));
    c.start_latency = from_ms(get_or(j, "start_latency_ms", c.start_latency.count() / 1000.0));
    c.commit_fixed = from_ms(get_or(j, "commit_fixed_ms", c.commit_fixed.count() / 1000.0));
    c.commit_per_row_ns = get_or<std::int64_t>(j, "commit_per_row_ns", c.commit_per_row_ns);
    c.dispatch_cycle = from_ms(get_or(j, "dispatch_cycle_ms", c.dispatch_cycle.count() / 1000.0));
    c.duration = from_ms(get_or(j, "duration_ms", c.duration.count() / 1000.0));
    c.tick = from_ms(get_or(j, "tick_ms", c.tick.count() / 1000.0));
    if (auto it = j.find("arrivals"); it != j.end()) {
      c.arrivals.clear();
      for (const auto& a : *it) {
        c.arrivals.push_back({TimePoint{} + from_ms(get_or(a, "from_ms", 0.0)), a.at("rows_per_sec").get<std::int64_t>()});
      }
    }
    if (auto it = j.find("bursts"); it != j.end()) {
      for (const auto& b : *it) {
        c.bursts.push_back({TimePoint{} + from_ms(b.at("at_ms").get<double>()), b.at("rows").get<std::uint64_t>()});
      }
    }
    c.poisson = get_or(j, "poisson", c.poisson);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.strategy = parse_strategy(get_or<std::string>(j, "strategy", "gate"));
    c.max_slots = get_or<std::size_t>(j, "max_slots", c.max_slots);
    c.ewma_window = get_or<std::size_t>(j, "ewma_window", c.ewma_window);
    if (auto it = j.find("forced_slots"); it != j.end() && !it->is_null()) c.forced_slots = it->get<std::size_t>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed simulation config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("invalid simulation config: ") + e.what());
  }
}

}  // namespace gateflow
