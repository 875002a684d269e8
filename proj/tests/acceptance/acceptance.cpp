// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// failed. Every tolerance is a named constant below.

#include <boost/asio.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "gateflow/bench.hpp"
#include "gateflow/error.hpp"
#include "gateflow/gateway.hpp"
#include "gateflow/loadgen.hpp"
#include "gateflow/metrics.hpp"
#include "gateflow/pipeline.hpp"
#include "gateflow/segment_server.hpp"
#include "gateflow/simulator.hpp"
#include "gateflow/slot.hpp"

namespace gateflow {

template <>
struct LockFreeQueueTestAccess<int> {
  using Queue = LockFreeQueue<int>;
  using Node = Queue::Node;

  static VersionedRef<Node> head(Queue& q) { return q.head_.load(); }
  static Node* next_of(Node* n) { return n->next.load().ptr; }
  static bool cas_head(Queue& q, VersionedRef<Node> expected, Node* desired) {
    return q.head_.compare_and_swap(expected, desired);
  }
};

}  // namespace gateflow

namespace {

using namespace gateflow;
using Steady = std::chrono::steady_clock;

// ---- pinned tolerances ----------------------------------------------------

constexpr int kConvergeIntervals = 5;
constexpr int kSweepTriples = 20;
constexpr std::uint64_t kSweepSeed = 20240611;
constexpr double kConvergeBudgetSeconds = 5.0;
constexpr Duration kLatencyTolerance{1000};  // one virtual tick
constexpr int kDrainCycles = 3;
constexpr int kLiveRunSeconds = 60;
constexpr std::size_t kAllowedOverlaps = 0;
constexpr std::uint64_t kExactlyOnceRows = 1'000'000;
constexpr double kExactlyOnceBudgetSeconds = 120.0;
constexpr int kQueueThreads = 4;
constexpr int kQueueItems = 1'000'000;
constexpr double kRatioTolerance = 0.005;
constexpr double kMinP12 = 0.8;
constexpr double kMinP14 = 0.7;
constexpr std::uint64_t kVisibilityRows = 100'000;
constexpr auto kProbePeriod = std::chrono::milliseconds(1);

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(Steady::time_point t0) {
  return std::chrono::duration<double>(Steady::now() - t0).count();
}

TimePoint at_ms(std::int64_t v) { return at_us(v * 1000); }

// ---- simulator helpers ----------------------------------------------------

// First sample from which the pool stays at `target` to the end of the run.
std::optional<TimePoint> settled_at(const SimTrace& t, std::uint32_t target) {
  std::optional<TimePoint> since;
  for (const auto& s : t.samples) {
    if (s.live != target) {
      since.reset();
    } else if (!since) {
      since = s.at;
    }
  }
  return since;
}

std::vector<TraceEvent> events_of(const SimTrace& t, TraceKind kind, Policy reason) {
  std::vector<TraceEvent> out;
  for (const auto& e : t.events) {
    if (e.kind == kind && e.reason == reason) out.push_back(e);
  }
  return out;
}

// How long `slot` had been in Wait when the event at `at` happened.
std::optional<Duration> wait_age(const SimTrace& t, SlotId slot, TimePoint at) {
  std::optional<TimePoint> entered;
  for (const auto& e : t.events) {
    if (e.at >= at) break;
    if (e.slot == slot && e.kind == TraceKind::Transition) {
      if (e.to == SlotPhase::Wait) entered = e.at;
      else if (e.from == SlotPhase::Wait) entered.reset();
    }
  }
  if (!entered) return std::nullopt;
  return at - *entered;
}

SimConfig policy_base() {
  SimConfig c;
  c.interval = ms(100);
  c.start_latency = ms(30);
  c.commit_fixed = ms(40);
  c.commit_per_row_ns = 60'000;
  c.dispatch_cycle = ms(10000);
  return c;
}

// ---- criteria -------------------------------------------------------------

Outcome convergence() {
  const auto t0 = Steady::now();
  SimConfig c;
  c.interval = ms(100);
  c.start_latency = ms(50);
  c.commit_fixed = ms(150);
  c.duration = ms(5000);
  c.arrivals = {{TimePoint{}, 20000}};
  const auto want = optimal_slots(c.interval, c.start_latency, c.commit_fixed);
  const auto settled = settled_at(run_sim(c), want);
  bool ok = want == 3 && settled && *settled <= TimePoint{} + kConvergeIntervals * c.interval;
  std::string detail = fmt("(100,50,150) -> %u slots settled at %lld ms", want,
                           settled ? static_cast<long long>(count_us(*settled) / 1000) : -1LL);

  std::mt19937_64 rng(kSweepSeed);
  int matched = 0;
  std::string first_miss;
  for (int k = 0; k < kSweepTriples; ++k) {
    SimConfig s;
    s.interval = ms(std::uniform_int_distribution<int>(50, 200)(rng));
    s.start_latency = ms(std::uniform_int_distribution<int>(0, 200)(rng));
    s.commit_fixed = ms(std::uniform_int_distribution<int>(0, 600)(rng));
    s.duration = ms(10000);
    s.arrivals = {{TimePoint{}, 20000}};
    const auto n = optimal_slots(s.interval, s.start_latency, s.commit_fixed);
    const auto trace = run_sim(s);
    const auto at = settled_at(trace, n);
    // Exact: the pool ends at N* and holds it for the second half of the run.
    if (at && *at <= TimePoint{} + s.duration / 2) {
      ++matched;
    } else if (first_miss.empty()) {
      first_miss = fmt(" first miss (%lld,%lld,%lld) want %u got %u", static_cast<long long>(s.interval.count() / 1000),
                       static_cast<long long>(s.start_latency.count() / 1000),
                       static_cast<long long>(s.commit_fixed.count() / 1000), n,
                       trace.samples.empty() ? 0u : trace.samples.back().live);
    }
  }
  const double elapsed = seconds_since(t0);
  ok = ok && matched == kSweepTriples && elapsed < kConvergeBudgetSeconds;
  detail += fmt("; sweep %d/%d exact; %.2f s", matched, kSweepTriples, elapsed) + first_miss;
  return {ok, detail};
}

Outcome start_latency_hidden() {
  bool ok = true;
  std::string detail;
  for (int ts : {0, 10, 50, 200}) {
    SimConfig c;
    c.start_latency = ms(ts);
    c.arrivals = {{TimePoint{}, 5000}};
    const auto cmp = compare_strategies(c);
    const auto diff = cmp.naive_mean_latency - cmp.gate_mean_latency;
    const bool hit = std::abs((diff - ms(ts)).count()) <= kLatencyTolerance.count();
    ok = ok && hit && cmp.naive_batches > 0 && cmp.gate_batches > 0;
    detail += fmt("%sts=%d: naive-gate=%.3f ms", detail.empty() ? "" : ", ", ts, diff.count() / 1000.0);
  }
  return {ok, detail};
}

Outcome policy_suite() {
  std::string detail;
  bool ok = true;

  // Step-up: the pool grows by one, never two activations within an interval.
  {
    auto c = policy_base();
    c.duration = ms(16000);
    c.arrivals = {{TimePoint{}, 1000}, {at_ms(8000), 10000}};
    const auto trace = run_sim(c);
    const auto before = optimal_slots(c.interval, c.start_latency, c.commit_latency(100));
    const auto after = optimal_slots(c.interval, c.start_latency, c.commit_latency(1000));
    const auto acts = events_of(trace, TraceKind::Activation, Policy::Activate);
    std::size_t late = 0, close_pairs = 0;
    for (std::size_t k = 0; k < acts.size(); ++k) {
      if (acts[k].at >= at_ms(8000)) ++late;
      if (k > 0 && acts[k].at - acts[k - 1].at < c.interval) ++close_pairs;
    }
    std::uint32_t live_before = 0;
    for (const auto& s : trace.samples) {
      if (s.at < at_ms(8000)) live_before = s.live;
    }
    const bool step_ok = after == before + 1 && live_before == before && late == 1 && close_pairs == 0 &&
                         trace.samples.back().live == after;
    ok = ok && step_ok;
    detail += fmt("step-up %u->%u with %zu activation(s), %zu within t_d", live_before, trace.samples.back().live, late,
                  close_pairs);
  }

  // Step-down: exactly one surplus waiter is aborted, after waiting > t_d.
  {
    auto c = policy_base();
    c.duration = ms(16000);
    c.arrivals = {{TimePoint{}, 10000}, {at_ms(8000), 1000}};
    const auto trace = run_sim(c);
    const auto aborts = events_of(trace, TraceKind::Abort, Policy::WaitAbort);
    std::size_t late = 0;
    bool waited = true;
    for (const auto& a : aborts) {
      if (a.at < at_ms(8000)) continue;
      ++late;
      const auto age = wait_age(trace, a.slot, a.at);
      waited = waited && age && *age > c.interval;
    }
    const auto low = optimal_slots(c.interval, c.start_latency, c.commit_latency(100));
    const bool step_ok = late == 1 && waited && trace.samples.back().live == low;
    ok = ok && step_ok;
    detail += fmt("; step-down %zu wait-abort(s)%s", late, waited ? " after > t_d" : " too early");
  }

  // Zero flow: every slot is gone within three dispatch cycles.
  {
    auto c = policy_base();
    c.duration = ms(40000);
    c.arrivals = {{TimePoint{}, 5000}, {at_ms(5000), 0}};
    const auto trace = run_sim(c);
    const auto empty = settled_at(trace, 0);
    const bool drained = empty && *empty <= at_ms(5000) + kDrainCycles * c.dispatch_cycle &&
                         trace.rows_committed == trace.rows_arrived;
    ok = ok && drained;
    detail += fmt("; zero-flow drained at %lld ms", empty ? static_cast<long long>(count_us(*empty) / 1000) : -1LL);
  }

  // Rows arriving in the last tick of a dispatch cycle are not lost.
  {
    auto c = policy_base();
    c.duration = ms(45000);
    c.arrivals = {{TimePoint{}, 2000}, {at_ms(3000), 0}};
    for (std::int64_t cycle : {1, 2, 3, 4}) c.bursts.push_back({at_ms(cycle * 10000) - c.tick, 7});
    const auto trace = run_sim(c);
    const bool kept = trace.rows_arrived == 6000 + 28 && trace.rows_committed == trace.rows_arrived;
    ok = ok && kept;
    detail += fmt("; last-tick bursts committed %llu/%llu", static_cast<unsigned long long>(trace.rows_committed),
                  static_cast<unsigned long long>(trace.rows_arrived));
  }
  return {ok, detail};
}

std::vector<SegmentSpec> segment_specs(std::size_t n, LatencyModel lat) {
  std::vector<SegmentSpec> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back({{"seg" + std::to_string(k), "127.0.0.1", 0}, lat});
  return out;
}

GatewayConfig live_config(const SegmentDaemon& d, std::size_t queue_capacity) {
  GatewayConfig c;
  c.listen_addr = "127.0.0.1:0";
  c.schema = synthetic_schema();
  c.interval_ms = 100;
  c.dispatch_cycle_ms = 10000;
  c.queue_capacity = queue_capacity;
  c.listeners = 4;
  for (const auto& ep : d.endpoints()) c.segments.push_back({ep, {}});
  return c;
}

Outcome single_sender() {
  SegmentDaemon daemon(segment_specs(4, {ms(30), ms(40), 2'000}));
  daemon.start();
  Gateway gw(live_config(daemon, 1'000'000));
  gw.start();
  LoadgenOptions lo;
  lo.target = gw.address();
  lo.rate = 20000;
  lo.duration = std::chrono::seconds(kLiveRunSeconds);
  lo.batch_rows = 200;
  lo.connections = 2;
  const auto summary = run_loadgen(lo);
  const bool drained = gw.wait_until_drained(ms(30000));
  gw.stop();
  daemon.stop();

  auto audit = gw.send_audit();
  std::sort(audit.begin(), audit.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  std::size_t overlaps = 0;
  for (std::size_t a = 0; a < audit.size(); ++a) {
    for (std::size_t b = a + 1; b < audit.size() && audit[b].start < audit[a].end; ++b) ++overlaps;
  }
  const bool ok = drained && overlaps == kAllowedOverlaps && audit.size() > 100 && summary.dropped == 0;
  return {ok, fmt("%zu send intervals over %d s, %zu overlapping pairs, %llu rows", audit.size(), kLiveRunSeconds,
                  overlaps, static_cast<unsigned long long>(summary.accepted))};
}

Outcome exactly_once() {
  const auto t0 = Steady::now();
  SegmentDaemon daemon(segment_specs(4, {ms(10), ms(20), 500}));
  daemon.start();
  // A small pipeline bound makes the loader go through backpressure.
  Gateway gw(live_config(daemon, 50'000));
  gw.start();
  LoadgenOptions lo;
  lo.target = gw.address();
  lo.rate = 0;
  lo.total_rows = kExactlyOnceRows;
  lo.batch_rows = 2000;
  lo.connections = 2;
  const auto summary = run_loadgen(lo);
  const bool drained = gw.wait_until_drained(ms(60000));
  const auto counters = gw.counters();
  gw.stop();
  daemon.stop();

  std::vector<std::uint8_t> seen(kExactlyOnceRows, 0);
  std::uint64_t total = 0, dup = 0, bogus = 0;
  for (std::size_t k = 0; k < daemon.size(); ++k) {
    daemon.store(k).for_each_committed_row([&](std::string_view, std::string_view row) {
      ++total;
      // dev,ts,seq,value
      const auto a = row.find(',');
      const auto b = row.find(',', a + 1);
      const auto c = row.find(',', b + 1);
      const auto seq = std::stoull(std::string(row.substr(b + 1, c - b - 1)));
      if (seq >= kExactlyOnceRows) {
        ++bogus;
      } else if (seen[seq]++ > 0) {
        ++dup;
      }
    });
  }
  const auto missing = static_cast<std::uint64_t>(std::count(seen.begin(), seen.end(), 0));
  const bool accounted = summary.accepted + summary.rejected + summary.dropped == summary.posted &&
                         summary.dropped == 0 && counters.rows_accepted == summary.accepted &&
                         counters.rows_backpressured == summary.backpressured;
  const double elapsed = seconds_since(t0);
  const bool ok = drained && accounted && total == kExactlyOnceRows && dup == 0 && missing == 0 && bogus == 0 &&
                  elapsed < kExactlyOnceBudgetSeconds;
  return {ok, fmt("%llu committed, %llu duplicate, %llu missing; accepted %llu rejected %llu backpressured %llu; %.1f s",
                  static_cast<unsigned long long>(total), static_cast<unsigned long long>(dup),
                  static_cast<unsigned long long>(missing), static_cast<unsigned long long>(summary.accepted),
                  static_cast<unsigned long long>(summary.rejected),
                  static_cast<unsigned long long>(summary.backpressured), elapsed)};
}

Outcome lock_free_queue() {
  using Access = LockFreeQueueTestAccess<int>;
  constexpr int per = kQueueItems / kQueueThreads;
  LockFreeQueue<int> q;
  std::atomic<int> producers_done{0};
  std::vector<std::vector<int>> got(kQueueThreads);
  std::vector<std::thread> threads;
  for (int p = 0; p < kQueueThreads; ++p) {
    threads.emplace_back([&, p] {
      for (int i = 0; i < per; ++i) q.enqueue(p * per + i);
      producers_done.fetch_add(1);
    });
  }
  for (int c = 0; c < kQueueThreads; ++c) {
    threads.emplace_back([&, c] {
      for (;;) {
        if (auto v = q.dequeue()) {
          got[c].push_back(*v);
        } else if (producers_done.load() == kQueueThreads && q.empty()) {
          break;
        } else {
          std::this_thread::yield();
        }
      }
    });
  }
  for (auto& t : threads) t.join();

  std::vector<std::uint8_t> seen(kQueueItems, 0);
  std::size_t dup = 0, order = 0;
  for (const auto& list : got) {
    std::vector<int> last(kQueueThreads, -1);
    for (int v : list) {
      if (seen[v]++ > 0) ++dup;
      const int p = v / per;
      if (v <= last[p]) ++order;
      last[p] = v;
    }
  }
  const auto lost = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 0));

  LockFreeQueue<int> a;
  a.enqueue(1);
  a.enqueue(2);
  const auto stale = Access::head(a);
  auto* stale_next = Access::next_of(stale.ptr);
  a.dequeue();
  a.dequeue();
  a.enqueue(3);
  a.enqueue(4);
  a.dequeue();
  a.dequeue();
  const auto now = Access::head(a);
  const bool same_address = now.ptr == stale.ptr;
  const bool stale_cas_failed = !Access::cas_head(a, stale, stale_next);

  const bool ok = lost == 0 && dup == 0 && order == 0 && same_address && stale_cas_failed;
  return {ok, fmt("%d items: %zu lost, %zu duplicated, %zu FIFO violations; ABA head reused=%s, stale CAS %s",
                  kQueueItems, lost, dup, order, same_address ? "yes" : "no", stale_cas_failed ? "failed" : "succeeded")};
}

Outcome metric_formulas() {
  IngestionRun one{3'750'000, at_us(0), {at_us(400'000), at_us(1'000'000)}, 1};
  IngestionRun three{10'050'000, at_us(0), {at_us(1'000'000), at_us(999'000), at_us(700'000)}, 3};
  const double v1 = ingestion_speed(one);
  const double v3 = ingestion_speed(three);
  const double p13 = scalability(1, 3, v1, v3);
  const double p18 = scalability(1, 8, 1.0, 7.59);
  const bool ok = std::abs(p13 - 0.893) <= kRatioTolerance && std::abs(p18 - 0.949) <= kRatioTolerance &&
                  v1 == 3.75e6 && v3 == 10.05e6;
  return {ok, fmt("P(1,3)=%.4f P(1,8)=%.4f", p13, p18)};
}

Outcome scalability_property() {
  BenchScenario s;
  s.nodes = {1, 2, 4};
  s.segment = LatencyModel{ms(5), ms(10), 80'000};
  s.rows = 100'000;
  s.connections = 2;
  const auto report = run_bench(s);
  const auto p12 = report.ratio(1, 2);
  const auto p14 = report.ratio(1, 4);
  const bool hashed = std::all_of(report.runs.begin(), report.runs.end(),
                                  [](const BenchRun& r) { return r.config_hash.size() == 16; });
  const bool ok = report.complete && p12 && p14 && *p12 >= kMinP12 && *p14 >= kMinP14 && hashed;
  std::string detail;
  for (const auto& r : report.runs) detail += fmt("V%u=%.0f ", r.nodes, r.v);
  detail += fmt("P(1,2)=%.3f P(1,4)=%.3f", p12.value_or(-1.0), p14.value_or(-1.0));
  if (report.error) detail += "; error: " + *report.error;
  return {ok, detail};
}

Outcome atomic_visibility() {
  // 10 us of commit work per row keeps the transaction in flight for about a
  // second, so the probe sees it before, during and after the commit.
  SegmentDaemon daemon(segment_specs(1, {Duration{0}, Duration{0}, 10'000}));
  daemon.start();
  const auto& store = daemon.store(0);
  const std::string device = "probe-dev";
  std::atomic<bool> stop{false};
  std::map<std::uint64_t, std::uint64_t> observed;  // visible rows -> polls
  std::uint64_t incoherent = 0;
  std::optional<std::string> txn;
  std::mutex txn_mu;
  std::thread probe([&] {
    while (!stop.load()) {
      std::optional<std::string> t;
      {
        std::lock_guard lock(txn_mu);
        t = txn;
      }
      if (t) {
        const auto p = store.visibility_probe(device);
        const auto v = store.visible_rows(*t);
        ++observed[v];
        // Once any of its rows is visible, all of them must be.
        if (p && p->txn == *t && v != kVisibilityRows) ++incoherent;
      }
      std::this_thread::sleep_for(kProbePeriod);
    }
  });

  boost::asio::io_context io;  // outlives the slot's sockets
  MonotonicClock clock;
  LiveSlot slot(SlotId{1}, daemon.endpoints(), SlotOptions{"readings", "vis", 3, ms(10)}, clock);
  std::uint64_t committed = 0;
  std::exception_ptr failure;
  boost::asio::co_spawn(
      io,
      [&]() -> boost::asio::awaitable<void> {
        co_await slot.begin_connect();
        {
          std::lock_guard lock(txn_mu);
          txn = slot.txn();
        }
        slot.enter_send();
        std::vector<Record> batch;
        for (std::uint64_t s = 0; s < kVisibilityRows; ++s) {
          batch.push_back(Record{device, static_cast<std::int64_t>(s), {static_cast<std::int64_t>(s), 0.5}, s});
          if (batch.size() == 4096) {
            co_await slot.send_records(batch);
            batch.clear();
          }
        }
        co_await slot.send_records(batch);
        co_await slot.finish_send();
        committed = co_await slot.await_commit();
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      },
      [&](std::exception_ptr e) { failure = e; });
  io.run();
  stop = true;
  probe.join();
  daemon.stop();

  std::uint64_t partial = 0;
  for (const auto& [rows, polls] : observed) {
    if (rows != 0 && rows != kVisibilityRows) partial += polls;
  }
  const bool ok = !failure && committed == kVisibilityRows && partial == 0 && incoherent == 0 &&
                  observed.count(0) > 0 && observed.count(kVisibilityRows) > 0;
  return {ok, fmt("%zu distinct counts over %llu polls, %llu partial, %llu incoherent", observed.size(),
                  static_cast<unsigned long long>(
                      std::accumulate(observed.begin(), observed.end(), std::uint64_t{0},
                                      [](std::uint64_t a, const auto& kv) { return a + kv.second; })),
                  static_cast<unsigned long long>(partial), static_cast<unsigned long long>(incoherent))};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional prefix filter, e.g. `acceptance C6`.
  const std::string only = argc > 1 ? argv[1] : "";
  spdlog::set_level(spdlog::level::off);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"C1 slot count converges to optimum", convergence},
      {"C2 start latency hidden", start_latency_hidden},
      {"C3 pool tuning policies", policy_suite},
      {"C4 single sender (live)", single_sender},
      {"C5 exactly-once end to end", exactly_once},
      {"C6 lock-free queue", lock_free_queue},
      {"C7 metric formulas", metric_formulas},
      {"C8 scalability at desk scale", scalability_property},
      {"C9 atomic visibility", atomic_visibility},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!std::string(name).starts_with(only)) continue;
    Outcome r;
    const auto t0 = Steady::now();
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    if (!r.pass) ++failed;
    std::printf("%s %s: %s [%.1f s]\n", r.pass ? "PASS" : "FAIL", name, r.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
