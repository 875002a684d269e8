#include "gateflow/slot.hpp"

#include <algorithm>

#include "gateflow/error.hpp"
#include "line_io.hpp"

namespace gateflow {

using namespace detail;

struct LiveSlot::Connection {
  SegmentEndpoint endpoint;
  std::optional<tcp::socket> socket;
  LineReader reader{4096};
  std::string out;
  std::uint64_t rows = 0;

  bool open() const { return socket && socket->is_open(); }

  void close() {
    if (!socket) return;
    boost::system::error_code ignored;
    socket->shutdown(tcp::socket::shutdown_both, ignored);
    socket->close(ignored);
    socket.reset();
    reader = LineReader{4096};
  }
};

LiveSlot::LiveSlot(SlotId id, std::vector<SegmentEndpoint> segments, SlotOptions options, const Clock& clock)
    : id_(id), segments_(std::move(segments)), options_(std::move(options)), clock_(clock) {
  if (segments_.empty()) throw ParameterError("a slot needs at least one segment");
  if (options_.connect_retries == 0) throw ParameterError("connect_retries must be >= 1");
  for (const auto& ep : segments_) {
    auto c = std::make_unique<Connection>();
    c->endpoint = ep;
    conns_.push_back(std::move(c));
  }
  phase_entered_at_ = clock_.now();
}

LiveSlot::~LiveSlot() {
  for (auto& c : conns_) c->close();
}

void LiveSlot::set_phase(SlotPhase p) {
  phase_ = p;
  phase_entered_at_ = clock_.now();
}

std::string LiveSlot::next_txn_id() {
  return options_.txn_nonce + "-" + std::to_string(id_.value) + "-" + std::to_string(++txn_counter_);
}

awaitable<void> LiveSlot::ensure_connected(Connection& c) {
  if (c.open()) co_return;
  auto exec = co_await asio::this_coro::executor;
  tcp::resolver resolver(exec);
  std::string last_error;
  for (std::size_t attempt = 0; attempt < options_.connect_retries; ++attempt) {
    if (attempt > 0) {
      asio::steady_timer backoff(exec, std::chrono::microseconds(options_.connect_backoff.count()));
      co_await backoff.async_wait(use_awaitable);
    }
    boost::system::error_code ec;
    auto results = co_await resolver.async_resolve(c.endpoint.host, std::to_string(c.endpoint.port),
                                                   asio::redirect_error(use_awaitable, ec));
    if (!ec) {
      tcp::socket sock(exec);
      co_await asio::async_connect(sock, results, asio::redirect_error(use_awaitable, ec));
      if (!ec) {
        sock.set_option(tcp::no_delay(true), ec);
        c.socket.emplace(std::move(sock));
        c.reader = LineReader{4096};
        co_return;
      }
    }
    last_error = ec.message();
  }
  throw DependencyError("segment '" + c.endpoint.id + "' at " + c.endpoint.address() + " unreachable after " +
                        std::to_string(options_.connect_retries) + " attempts: " + last_error);
}

awaitable<void> LiveSlot::begin_connect() {
  if (phase_ != SlotPhase::Connect) {
    throw PreconditionError("begin_connect: slot " + std::to_string(id_.value) + " is in " +
                            std::string(to_string(phase_)));
  }
  const std::string txn = next_txn_id();
  try {
    for (auto& c : conns_) co_await ensure_connected(*c);
    // All BEGINs go out before any READY is awaited, so the start latency of
    // the slot is the slowest segment's, not the sum.
    const std::string frame = begin_frame(txn, options_.table);
    for (auto& c : conns_) co_await asio::async_write(*c->socket, asio::buffer(frame), use_awaitable);
    for (auto& c : conns_) {
      auto line = co_await c->reader.next(*c->socket);
      if (!line) throw ProtocolError("segment " + c->endpoint.id + " closed the connection before READY");
      const auto reply = parse_server_frame(*line);
      if (reply.kind == ServerFrame::Kind::Error) {
        throw ProtocolError("segment " + c->endpoint.id + " refused BEGIN " + txn + ": " + reply.reason);
      }
      if (reply.kind != ServerFrame::Kind::Ready || reply.txn != txn) {
        throw ProtocolError("segment " + c->endpoint.id + " answered BEGIN " + txn + " with '" + std::string(*line) +
                            "'");
      }
    }
  } catch (const boost::system::system_error& e) {
    retire();
    throw DependencyError("slot " + std::to_string(id_.value) + ": " + e.code().message());
  } catch (...) {
    retire();
    throw;
  }
  txn_ = txn;
  fresh_ = false;
  set_phase(SlotPhase::Wait);
}

void LiveSlot::enter_send() {
  if (phase_ != SlotPhase::Wait) {
    throw PreconditionError("enter_send: slot " + std::to_string(id_.value) + " is in " +
                            std::string(to_string(phase_)));
  }
  batch_rows_ = 0;
  in_flight_.clear();
  for (auto& c : conns_) c->rows = 0;
  set_phase(SlotPhase::Send);
}

awaitable<void> LiveSlot::send_records(std::span<const Record> records) {
  if (phase_ != SlotPhase::Send) {
    throw PreconditionError("send_records: slot " + std::to_string(id_.value) + " is in " +
                            std::string(to_string(phase_)));
  }
  const auto n = conns_.size();
  for (const auto& r : records) {
    auto& c = *conns_[route_to_segment(r.device_id, n)];
    append_csv(c.out, r);
    c.out.push_back('\n');
    ++c.rows;
  }
  in_flight_.insert(in_flight_.end(), records.begin(), records.end());
  batch_rows_ += records.size();
  try {
    for (auto& c : conns_) {
      if (c->out.empty()) continue;
      co_await asio::async_write(*c->socket, asio::buffer(c->out), use_awaitable);
      c->out.clear();
    }
  } catch (...) {
    retire();
    throw;
  }
}

awaitable<void> LiveSlot::finish_send() {
  if (phase_ != SlotPhase::Send) {
    throw PreconditionError("finish_send: slot " + std::to_string(id_.value) + " is in " +
                            std::string(to_string(phase_)));
  }
  set_phase(SlotPhase::Commit);
  last_send_ended_at_ = clock_.now();
  try {
    for (auto& c : conns_) co_await asio::async_write(*c->socket, asio::buffer(kEofFrame), use_awaitable);
  } catch (...) {
    retire();
    throw;
  }
}

awaitable<std::uint64_t> LiveSlot::await_commit() {
  if (phase_ != SlotPhase::Commit || !txn_) {
    throw PreconditionError("await_commit: slot " + std::to_string(id_.value) + " is in " +
                            std::string(to_string(phase_)));
  }
  // Every connection is read even after one fails: rows routed to segments
  // that did commit must not be handed back for a retry.
  std::uint64_t total = 0;
  std::vector<bool> committed(conns_.size(), false);
  std::exception_ptr first_failure;
  for (std::size_t k = 0; k < conns_.size(); ++k) {
    auto& c = *conns_[k];
    try {
      auto line = co_await c.reader.next(*c.socket);
      if (!line) throw ProtocolError("segment " + c.endpoint.id + " closed the connection before COMMITTED");
      const auto reply = parse_server_frame(*line);
      if (reply.kind != ServerFrame::Kind::Committed) {
        throw ProtocolError("segment " + c.endpoint.id + " answered EOF with '" + std::string(*line) + "'");
      }
      if (reply.txn != *txn_) {
        throw ProtocolError("segment " + c.endpoint.id + " committed " + reply.txn + ", expected " + *txn_);
      }
      if (reply.rows != c.rows) {
        throw ProtocolError("segment " + c.endpoint.id + " committed " + std::to_string(reply.rows) +
                            " rows, sent " + std::to_string(c.rows));
      }
      committed[k] = true;
      total += reply.rows;
    } catch (const boost::system::system_error& e) {
      if (!first_failure) {
        first_failure = std::make_exception_ptr(
            DependencyError("slot " + std::to_string(id_.value) + ": " + e.code().message()));
      }
    } catch (...) {
      if (!first_failure) first_failure = std::current_exception();
    }
  }
  if (first_failure) {
    std::erase_if(in_flight_, [&](const Record& r) {
      return committed[route_to_segment(r.device_id, conns_.size())];
    });
    retire();
    std::rethrow_exception(first_failure);
  }
  co_return total;
}

bool LiveSlot::on_commit_ack(const std::string& txn, bool retire_now) {
  if (phase_ != SlotPhase::Commit) {
    throw PreconditionError("on_commit_ack: slot " + std::to_string(id_.value) + " is in " +
                            std::string(to_string(phase_)));
  }
  if (!txn_ || txn != *txn_) {
    const std::string expected = txn_.value_or("<none>");
    retire();
    throw ProtocolError("commit ack for " + txn + " on slot " + std::to_string(id_.value) + ", expected " + expected);
  }
  txn_.reset();
  in_flight_.clear();
  if (retire_now) {
    retire();
    return false;
  }
  set_phase(SlotPhase::Connect);
  return true;
}

std::vector<Record> LiveSlot::take_in_flight() { return std::exchange(in_flight_, {}); }

void LiveSlot::retire() {
  for (auto& c : conns_) {
    c->close();
    c->out.clear();
  }
  if (phase_ != SlotPhase::Retired) set_phase(SlotPhase::Retired);
}

void LiveSlot::cancel() {
  boost::system::error_code ignored;
  for (auto& c : conns_) {
    if (c->socket) c->socket->close(ignored);
  }
}

std::vector<std::uint64_t> LiveSlot::rows_per_segment() const {
  std::vector<std::uint64_t> out;
  for (const auto& c : conns_) out.push_back(c->rows);
  return out;
}

}  // namespace gateflow
