#include "gateflow/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <string_view>

#include "gateflow/error.hpp"

namespace gateflow {

double ingestion_speed(const IngestionRun& run) {
  if (run.rows == 0) return 0.0;
  if (run.segment_done.empty()) throw ParameterError("ingestion_speed: no segment completion time");
  const auto last = *std::max_element(run.segment_done.begin(), run.segment_done.end());
  for (const auto& te : run.segment_done) {
    if (te < run.start) throw ParameterError("ingestion_speed: completion precedes start");
  }
  if (last <= run.start) throw ParameterError("ingestion_speed: zero elapsed time, rate undefined");
  const double seconds = static_cast<double>((last - run.start).count()) / 1e6;
  return static_cast<double>(run.rows) / seconds;
}

double scalability(std::uint32_t i, std::uint32_t j, double v_i, double v_j) {
  if (i == 0 || i >= j) throw ParameterError("scalability: node counts must satisfy 0 < i < j");
  if (!(v_i > 0.0)) throw ParameterError("scalability: V_i must be > 0");
  return (static_cast<double>(i) * v_j) / (static_cast<double>(j) * v_i);
}

Duration query_latency(TimePoint ds, TimePoint de) {
  if (de < ds) throw ParameterError("query_latency: answer precedes the query");
  return de - ds;
}

CounterSnapshot snapshot(const LiveCounters& c) {
  CounterSnapshot s;
  s.rows_accepted = c.rows_accepted.load(std::memory_order_relaxed);
  s.rows_committed = c.rows_committed.load(std::memory_order_relaxed);
  s.rows_rejected = c.rows_rejected.load(std::memory_order_relaxed);
  s.rows_backpressured = c.rows_backpressured.load(std::memory_order_relaxed);
  s.active_slots = c.active_slots.load(std::memory_order_relaxed);
  s.slots_activated_total = c.slots_activated_total.load(std::memory_order_relaxed);
  s.slots_aborted_total = c.slots_aborted_total.load(std::memory_order_relaxed);
  s.last_commit_ms = c.last_commit_ms.load(std::memory_order_relaxed);
  return s;
}

std::string to_text(const CounterSnapshot& s) {
  std::ostringstream out;
  out << "rows_accepted=" << s.rows_accepted << '\n'
      << "rows_committed=" << s.rows_committed << '\n'
      << "rows_rejected=" << s.rows_rejected << '\n'
      << "rows_backpressured=" << s.rows_backpressured << '\n'
      << "active_slots=" << s.active_slots << '\n'
      << "slots_activated_total=" << s.slots_activated_total << '\n'
      << "slots_aborted_total=" << s.slots_aborted_total << '\n'
      << "last_commit_ms=" << s.last_commit_ms << '\n';
  return out.str();
}

CounterSnapshot parse_counters(const std::string& text) {
  CounterSnapshot s;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParameterError("metrics line without '=': " + line);
    const std::string_view key(line.data(), eq);
    const std::string_view value(line.data() + eq + 1, line.size() - eq - 1);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw ParameterError("metrics value is not an integer: " + line);
    }
    const auto u = static_cast<std::uint64_t>(v);
    if (key == "rows_accepted") s.rows_accepted = u;
    else if (key == "rows_committed") s.rows_committed = u;
    else if (key == "rows_rejected") s.rows_rejected = u;
    else if (key == "rows_backpressured") s.rows_backpressured = u;
    else if (key == "active_slots") s.active_slots = u;
    else if (key == "slots_activated_total") s.slots_activated_total = u;
    else if (key == "slots_aborted_total") s.slots_aborted_total = u;
    else if (key == "last_commit_ms") s.last_commit_ms = v;
  }
  return s;
}

}  // namespace gateflow
