#include "gateflow/segment_server.hpp"

#include <atomic>
#include <list>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "gateflow/error.hpp"
#include "line_io.hpp"

namespace gateflow {

using namespace detail;

namespace {

struct Segment {
  SegmentSpec spec;
  SegmentStore store;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::mutex fault_mu;
  FaultPlan fault;
  std::atomic<bool> fault_fired{false};

  explicit Segment(SegmentSpec s) : spec(std::move(s)), store(spec.endpoint.id) {}
};

}  // namespace

struct SegmentDaemon::Impl {
  std::vector<std::unique_ptr<Segment>> segments;
  std::size_t threads = 1;
  asio::io_context io;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  std::vector<std::thread> pool;
  std::mutex conn_mu;
  std::list<std::weak_ptr<tcp::socket>> connections;
  std::atomic<std::uint64_t> accepted{0};
  MonotonicClock clock;
  bool running = false;

  awaitable<void> accept_loop(Segment& seg) {
    for (;;) {
      boost::system::error_code ec;
      tcp::socket sock = co_await seg.acceptor->async_accept(asio::redirect_error(use_awaitable, ec));
      if (ec) {
        if (ec == asio::error::operation_aborted || !seg.acceptor->is_open()) co_return;
        continue;
      }
      accepted.fetch_add(1, std::memory_order_relaxed);
      sock.set_option(tcp::no_delay(true), ec);
      auto shared = std::make_shared<tcp::socket>(std::move(sock));
      {
        std::lock_guard lock(conn_mu);
        connections.remove_if([](const auto& w) { return w.expired(); });
        connections.push_back(shared);
      }
      asio::co_spawn(io, serve(shared, seg), asio::detached);
    }
  }

  bool should_drop(Segment& seg, const SegmentSession& session) {
    std::lock_guard lock(seg.fault_mu);
    if (!seg.fault.drop_after_rows || seg.fault_fired.load()) return false;
    if (session.received_rows() < *seg.fault.drop_after_rows) return false;
    seg.fault_fired = true;
    return true;
  }

  awaitable<void> serve(std::shared_ptr<tcp::socket> sock, Segment& seg) {
    SegmentSession session(seg.store, seg.spec.latency);
    LineReader reader;
    try {
      for (;;) {
        auto line = co_await reader.next(*sock);
        if (!line) break;
        auto step = session.handle_line(*line, clock.now());
        if (step.kind == SessionStep::Kind::None) {
          if (should_drop(seg, session)) {
            spdlog::warn("segment {}: dropping connection on purpose after {} rows", seg.spec.endpoint.id,
                         session.received_rows());
            break;
          }
          continue;
        }
        if (step.kind == SessionStep::Kind::ReplyAt || step.kind == SessionStep::Kind::CommitAt) {
          co_await sleep_until(step.at);
        }
        if (step.kind == SessionStep::Kind::CommitAt) step.reply = session.finish_commit();
        co_await asio::async_write(*sock, asio::buffer(step.reply), use_awaitable);
      }
    } catch (const std::exception& e) {
      spdlog::debug("segment {}: connection closed: {}", seg.spec.endpoint.id, e.what());
    }
    session.handle_disconnect();
    boost::system::error_code ignored;
    sock->shutdown(tcp::socket::shutdown_both, ignored);
    sock->close(ignored);
  }
};

SegmentDaemon::SegmentDaemon(std::vector<SegmentSpec> specs, std::size_t threads) : impl_(std::make_unique<Impl>()) {
  impl_->threads = std::max<std::size_t>(threads, 1);
  for (auto& s : specs) impl_->segments.push_back(std::make_unique<Segment>(std::move(s)));
}

SegmentDaemon::~SegmentDaemon() { stop(); }

void SegmentDaemon::start() {
  if (impl_->running) return;
  for (auto& seg : impl_->segments) {
    const auto& ep = seg->spec.endpoint;
    try {
      auto acceptor = std::make_unique<tcp::acceptor>(impl_->io);
      const tcp::endpoint addr(asio::ip::make_address(ep.host), ep.port);
      acceptor->open(addr.protocol());
      acceptor->set_option(tcp::acceptor::reuse_address(true));
      acceptor->bind(addr);
      acceptor->listen();
      seg->spec.endpoint.port = acceptor->local_endpoint().port();
      seg->acceptor = std::move(acceptor);
    } catch (const boost::system::system_error& e) {
      for (auto& s : impl_->segments) s->acceptor.reset();
      throw BindError("cannot listen on " + ep.address() + " for segment '" + ep.id + "': " + e.code().message());
    }
  }
  for (auto& seg : impl_->segments) asio::co_spawn(impl_->io, impl_->accept_loop(*seg), asio::detached);
  impl_->work.emplace(impl_->io.get_executor());
  for (std::size_t i = 0; i < impl_->threads; ++i) impl_->pool.emplace_back([this] { impl_->io.run(); });
  impl_->running = true;
}

void SegmentDaemon::stop() {
  if (!impl_->running) return;
  asio::post(impl_->io, [this] {
    boost::system::error_code ignored;
    for (auto& seg : impl_->segments) {
      if (seg->acceptor) seg->acceptor->close(ignored);
    }
    std::lock_guard lock(impl_->conn_mu);
    for (auto& w : impl_->connections) {
      if (auto s = w.lock()) {
        s->shutdown(tcp::socket::shutdown_both, ignored);
        s->close(ignored);
      }
    }
  });
  impl_->work.reset();
  // Pending commit timers may still fire; give them a bounded grace period.
  std::thread killer([this] {
    for (int i = 0; i < 200 && !impl_->io.stopped(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    impl_->io.stop();
  });
  for (auto& t : impl_->pool) t.join();
  killer.join();
  impl_->pool.clear();
  impl_->running = false;
}

std::size_t SegmentDaemon::size() const { return impl_->segments.size(); }

std::vector<SegmentEndpoint> SegmentDaemon::endpoints() const {
  std::vector<SegmentEndpoint> out;
  for (const auto& s : impl_->segments) out.push_back(s->spec.endpoint);
  return out;
}

std::vector<SegmentSpec> SegmentDaemon::specs() const {
  std::vector<SegmentSpec> out;
  for (const auto& s : impl_->segments) out.push_back(s->spec);
  return out;
}

SegmentStore& SegmentDaemon::store(std::size_t index) { return impl_->segments.at(index)->store; }
const SegmentStore& SegmentDaemon::store(std::size_t index) const { return impl_->segments.at(index)->store; }

void SegmentDaemon::set_fault(std::size_t index, FaultPlan plan) {
  auto& seg = *impl_->segments.at(index);
  std::lock_guard lock(seg.fault_mu);
  seg.fault = plan;
  seg.fault_fired = false;
}

void SegmentDaemon::enable_dumps(const std::string& dir) {
  for (auto& s : impl_->segments) s->store.enable_dump(dir + "/" + s->spec.endpoint.id + ".dump");
}

std::uint64_t SegmentDaemon::connections_accepted() const { return impl_->accepted.load(); }

}  // namespace gateflow
