#include "gateflow/gateway.hpp"

#include <sys/socket.h>

#include <atomic>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <spdlog/spdlog.h>

#include "httplib.h"

#include "gateflow/error.hpp"
#include "gateflow/pipeline.hpp"
#include "gateflow/slot.hpp"
#include "line_io.hpp"

namespace gateflow {

using namespace detail;

namespace {

// Records moved from the pipeline onto the wire per write.
constexpr std::size_t kDrainChunk = 4096;

std::string random_nonce() {
  std::random_device rd;
  std::uniform_int_distribution<std::uint32_t> dist;
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", dist(rd));
  return buf;
}

std::optional<std::size_t> capacity_of(const GatewayConfig& c) {
  if (c.queue_capacity == 0) return std::nullopt;
  return c.queue_capacity;
}

void probe_segment(const SegmentEndpoint& ep, std::size_t attempts, Duration backoff) {
  asio::io_context io;
  std::string last;
  for (std::size_t i = 0; i < attempts; ++i) {
    if (i > 0) std::this_thread::sleep_for(backoff);
    boost::system::error_code ec;
    tcp::resolver resolver(io);
    auto results = resolver.resolve(ep.host, std::to_string(ep.port), ec);
    if (!ec) {
      tcp::socket sock(io);
      asio::connect(sock, results, ec);
      if (!ec) return;
    }
    last = ec.message();
  }
  throw DependencyError("segment '" + ep.id + "' at " + ep.address() + " unreachable: " + last);
}

}  // namespace

struct Gateway::Impl {
  enum class Command { None, Send, Retire };

  struct SlotTask {
    std::shared_ptr<LiveSlot> slot;
    asio::steady_timer signal;
    Command command = Command::None;
    explicit SlotTask(asio::io_context& io) : signal(io) {}
  };

  GatewayConfig config;
  GatewayOptions options;
  SchedulerConfig sched_config;
  Duration tick_period;
  MonotonicClock clock;
  std::string nonce;
  LockFreeQueue<Record> pipeline;
  ErrorLog errors;
  Ingestor ingestor;
  LiveCounters counters;
  std::atomic<std::uint64_t> in_flight_rows{0};

  mutable std::mutex sched_mu;
  Scheduler sched;

  mutable std::mutex audit_mu;
  std::vector<SendInterval> audit;

  asio::io_context io;
  std::thread io_thread;
  asio::steady_timer* tick_timer = nullptr;
  std::map<SlotId, std::shared_ptr<SlotTask>> tasks;  // io thread only
  std::atomic<bool> stopping{false};
  bool running = false;

  httplib::Server server;
  std::thread http_thread;
  int bound_port = -1;

  Impl(GatewayConfig c, GatewayOptions o)
      : config(std::move(c)),
        options(std::move(o)),
        sched_config(make_sched_config(config)),
        tick_period(sched_config.wait_grace),
        nonce(options.txn_nonce.value_or(random_nonce())),
        pipeline(capacity_of(config)),
        ingestor(config.schema, pipeline, errors),
        sched(sched_config) {
    sched.enable_journal(options.journal);
  }

  static SchedulerConfig make_sched_config(const GatewayConfig& c) {
    SchedulerConfig s;
    s.interval = ms(c.interval_ms);
    s.dispatch_cycle = ms(c.dispatch_cycle_ms);
    s.max_slots = c.max_slots;
    s.ewma_window = c.ewma_window;
    // Decisions happen on ticks, so a waiting slot is only surplus once it
    // has waited a full interval plus one tick.
    s.wait_grace = std::clamp(s.interval / 10, Duration(ms(1)), Duration(ms(50)));
    s.validate();
    return s;
  }

  IngestReport ingest(std::string_view body) {
    auto report = ingestor.handle_post(body);
    counters.rows_accepted.fetch_add(report.accepted, std::memory_order_relaxed);
    counters.rows_rejected.fetch_add(report.rejected, std::memory_order_relaxed);
    counters.rows_backpressured.fetch_add(report.backpressured, std::memory_order_relaxed);
    return report;
  }

  void wake() {
    if (tick_timer != nullptr) tick_timer->cancel();
  }

  void publish_live_count() {
    std::lock_guard lock(sched_mu);
    counters.active_slots.store(sched.live_count(), std::memory_order_relaxed);
  }

  void run_tick() {
    std::vector<Action> actions;
    {
      std::lock_guard lock(sched_mu);
      actions = sched.tick(clock.now(), !pipeline.empty());
    }
    for (const auto& a : actions) {
      switch (a.kind) {
        case ActionKind::ActivateSlot: {
          counters.slots_activated_total.fetch_add(1, std::memory_order_relaxed);
          SlotOptions so;
          so.table = config.table;
          so.txn_nonce = nonce;
          so.connect_retries = config.connect_retries;
          so.connect_backoff = ms(config.connect_backoff_ms);
          std::vector<SegmentEndpoint> eps;
          for (const auto& s : config.segments) eps.push_back(s.endpoint);
          auto task = std::make_shared<SlotTask>(io);
          task->slot = std::make_shared<LiveSlot>(a.slot, std::move(eps), so, clock);
          tasks[a.slot] = task;
          asio::co_spawn(io, slot_task(task), asio::detached);
          break;
        }
        case ActionKind::DispatchSender:
          signal(a.slot, Command::Send);
          break;
        case ActionKind::AbortSlot:
          counters.slots_aborted_total.fetch_add(1, std::memory_order_relaxed);
          if (a.immediate) signal(a.slot, Command::Retire);
          break;
      }
    }
    publish_live_count();
  }

  void signal(SlotId id, Command c) {
    auto it = tasks.find(id);
    if (it == tasks.end()) return;
    it->second->command = c;
    it->second->signal.cancel();
  }

  awaitable<void> control_loop() {
    asio::steady_timer timer(io);
    tick_timer = &timer;
    while (!stopping.load()) {
      run_tick();
      timer.expires_after(std::chrono::microseconds(tick_period.count()));
      boost::system::error_code ec;
      co_await timer.async_wait(asio::redirect_error(use_awaitable, ec));
    }
    tick_timer = nullptr;
  }

  awaitable<void> pause(Duration d) {
    asio::steady_timer t(io, std::chrono::microseconds(d.count()));
    boost::system::error_code ec;
    co_await t.async_wait(asio::redirect_error(use_awaitable, ec));
  }

  awaitable<void> slot_task(std::shared_ptr<SlotTask> task) {
    LiveSlot& slot = *task->slot;
    const SlotId id = slot.id();
    // Rows of the current batch counted in in_flight_rows.
    std::uint64_t sent = 0;
    try {
      for (;;) {
        const TimePoint t0 = clock.now();
        co_await slot.begin_connect();
        ReadyOutcome ready;
        {
          std::lock_guard lock(sched_mu);
          const TimePoint now = clock.now();
          sched.observe_start_latency(now - t0);
          ready = sched.on_ready(id, now);
        }
        if (ready == ReadyOutcome::Retire || stopping.load()) {
          slot.retire();
          break;
        }
        wake();
        while (task->command == Command::None && !stopping.load()) {
          task->signal.expires_at(asio::steady_timer::time_point::max());
          boost::system::error_code ec;
          co_await task->signal.async_wait(asio::redirect_error(use_awaitable, ec));
        }
        if (task->command != Command::Send || stopping.load()) {
          slot.retire();
          break;
        }
        task->command = Command::None;

        slot.enter_send();
        const TimePoint start = clock.now();
        const TimePoint deadline = start + sched_config.interval;
        for (TimePoint now = start; now < deadline && !stopping.load(); now = clock.now()) {
          auto records = pipeline.drain_up_to(kDrainChunk);
          if (records.empty()) {
            co_await pause(std::min<Duration>(ms(1), deadline - now));
            continue;
          }
          in_flight_rows.fetch_add(records.size(), std::memory_order_relaxed);
          sent += records.size();
          co_await slot.send_records(records);
          std::lock_guard lock(sched_mu);
          sched.on_rows_sent(id, records.size());
        }
        co_await slot.finish_send();
        const TimePoint end = clock.now();
        {
          std::lock_guard lock(audit_mu);
          audit.push_back({id, start, end, slot.batch_rows()});
        }
        {
          std::lock_guard lock(sched_mu);
          sched.on_send_finished(id, end);
        }
        wake();

        const std::uint64_t committed = co_await slot.await_commit();
        const std::uint64_t batch = slot.batch_rows();
        counters.rows_committed.fetch_add(committed, std::memory_order_relaxed);
        counters.last_commit_ms.store(epoch_micros() / 1000, std::memory_order_relaxed);
        in_flight_rows.fetch_sub(batch, std::memory_order_relaxed);
        sent = 0;
        CommitOutcome outcome;
        {
          std::lock_guard lock(sched_mu);
          const TimePoint now = clock.now();
          sched.observe_commit_latency(now - end);
          outcome = sched.on_committed(id, now);
        }
        if (!slot.on_commit_ack(*slot.txn(), outcome == CommitOutcome::Retire)) break;
        wake();
      }
    } catch (const std::exception& e) {
      if (!stopping.load()) spdlog::warn("slot {} failed: {}", id.value, e.what());
      auto back = slot.take_in_flight();
      // Rows not handed back reached a segment that committed them.
      if (sent > back.size()) {
        counters.rows_committed.fetch_add(sent - back.size(), std::memory_order_relaxed);
        counters.last_commit_ms.store(epoch_micros() / 1000, std::memory_order_relaxed);
      }
      for (auto& r : back) pipeline.requeue(std::move(r));
      in_flight_rows.fetch_sub(sent, std::memory_order_relaxed);
      slot.retire();
      std::lock_guard lock(sched_mu);
      const auto* s = sched.slot(id);
      if (s != nullptr && s->phase != SlotPhase::Retired) sched.on_failure(id, clock.now());
    }
    tasks.erase(id);
    publish_live_count();
    wake();
  }

  void install_routes() {
    server.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
      const auto report = ingest(req.body);
      res.status = report.backpressured > 0 ? 429 : 200;
      res.set_content(to_json(report), "application/json");
    });
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok\n", "text/plain"); });
    server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(to_text(snapshot(counters)), "text/plain");
    });
  }
};

Gateway::Gateway(GatewayConfig config, GatewayOptions options) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config), std::move(options));
}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  auto& m = *impl_;
  if (m.running) return;
  for (const auto& s : m.config.segments) {
    probe_segment(s.endpoint, m.config.connect_retries, ms(m.config.connect_backoff_ms));
  }
  if (m.options.http) {
    const auto hp = parse_host_port(m.config.listen_addr);
    // httplib sets SO_REUSEPORT by default, which would let a second gateway
    // share the port silently.
    m.server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    const std::size_t threads = m.config.listeners != 0
                                    ? m.config.listeners
                                    : std::max<std::size_t>(std::thread::hardware_concurrency(), 1);
    m.server.set_tcp_nodelay(true);
    m.server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    m.install_routes();
    m.bound_port = hp.port == 0 ? m.server.bind_to_any_port(hp.host)
                                : (m.server.bind_to_port(hp.host, hp.port) ? hp.port : -1);
    if (m.bound_port < 0) throw BindError("cannot listen on " + m.config.listen_addr);
    m.http_thread = std::thread([&m] { m.server.listen_after_bind(); });
    // A stop() before the listen loop has started would be lost otherwise.
    m.server.wait_until_ready();
  }
  asio::co_spawn(m.io, m.control_loop(), asio::detached);
  m.io_thread = std::thread([&m] { m.io.run(); });
  m.running = true;
}

void Gateway::stop() {
  auto& m = *impl_;
  if (!m.running) return;
  if (m.options.http) {
    m.server.stop();
    if (m.http_thread.joinable()) m.http_thread.join();
  }
  m.stopping = true;
  asio::post(m.io, [&m] {
    m.wake();
    for (auto& [id, task] : m.tasks) {
      task->command = Impl::Command::Retire;
      task->signal.cancel();
      task->slot->cancel();
    }
  });
  std::thread killer([&m] {
    for (int i = 0; i < 300 && !m.io.stopped(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    m.io.stop();
  });
  m.io_thread.join();
  killer.join();
  m.running = false;
}

std::uint16_t Gateway::port() const { return static_cast<std::uint16_t>(std::max(impl_->bound_port, 0)); }

std::string Gateway::address() const {
  return parse_host_port(impl_->config.listen_addr).host + ":" + std::to_string(port());
}

IngestReport Gateway::ingest(std::string_view body) { return impl_->ingest(body); }

bool Gateway::wait_until_drained(Duration timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto c = snapshot(impl_->counters);
    if (impl_->pipeline.empty() && impl_->in_flight_rows.load() == 0 && c.rows_committed >= c.rows_accepted) {
      return true;
    }
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

CounterSnapshot Gateway::counters() const { return snapshot(impl_->counters); }
std::size_t Gateway::pipeline_length() const { return impl_->pipeline.approx_len(); }
std::vector<IngestError> Gateway::errors() const { return impl_->errors.snapshot(); }

std::vector<SendInterval> Gateway::send_audit() const {
  std::lock_guard lock(impl_->audit_mu);
  return impl_->audit;
}

std::vector<TraceEvent> Gateway::scheduler_trace() const {
  std::lock_guard lock(impl_->sched_mu);
  return impl_->sched.trace();
}

std::vector<JournalEntry> Gateway::journal() const {
  std::lock_guard lock(impl_->sched_mu);
  return impl_->sched.journal();
}

SchedulerConfig Gateway::scheduler_config() const { return impl_->sched_config; }
const GatewayConfig& Gateway::config() const { return impl_->config; }

}  // namespace gateflow
