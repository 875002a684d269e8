#include "gateflow/segment_proto.hpp"

#include <algorithm>
#include <charconv>

#include "gateflow/error.hpp"

namespace gateflow {

std::string_view to_string(ErrorReason reason) {
  switch (reason) {
    case ErrorReason::DuplicateTxn:
      return "duplicate-txn";
    case ErrorReason::UnknownTxn:
      return "unknown-txn";
    case ErrorReason::ProtocolOrder:
      return "protocol-order";
  }
  return "protocol-order";
}

std::string_view to_string(TxnState state) {
  switch (state) {
    case TxnState::Begun:
      return "begun";
    case TxnState::Streaming:
      return "streaming";
    case TxnState::Committing:
      return "committing";
    case TxnState::Committed:
      return "committed";
    case TxnState::Aborted:
      return "aborted";
  }
  return "aborted";
}

bool valid_token(std::string_view token) noexcept {
  if (token.empty() || token.size() > 256) return false;
  return std::all_of(token.begin(), token.end(), [](unsigned char c) { return c > 0x20 && c < 0x7f; });
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    auto sp = line.find(' ', pos);
    if (sp == std::string_view::npos) sp = line.size();
    out.push_back(line.substr(pos, sp - pos));
    pos = sp + 1;
  }
  return out;
}

}  // namespace

ClientFrame parse_client_frame(std::string_view line) {
  ClientFrame f;
  if (line == "EOF") {
    f.kind = ClientFrame::Kind::Eof;
    return f;
  }
  if (line.starts_with("BEGIN ") || line == "BEGIN") {
    const auto parts = split_spaces(line);
    if (parts.size() != 3 || !valid_token(parts[1]) || !valid_token(parts[2])) {
      throw ProtocolError("malformed BEGIN frame: '" + std::string(line.substr(0, 200)) + "'");
    }
    f.kind = ClientFrame::Kind::Begin;
    f.txn = std::string(parts[1]);
    f.table = std::string(parts[2]);
    return f;
  }
  f.kind = ClientFrame::Kind::Data;
  f.row = line;
  return f;
}

ServerFrame parse_server_frame(std::string_view line) {
  const auto parts = split_spaces(line);
  ServerFrame f;
  auto bad = [&] { return ProtocolError("malformed server frame: '" + std::string(line.substr(0, 200)) + "'"); };
  if (parts[0] == "READY" && parts.size() == 2 && valid_token(parts[1])) {
    f.kind = ServerFrame::Kind::Ready;
    f.txn = std::string(parts[1]);
    return f;
  }
  if (parts[0] == "COMMITTED" && parts.size() == 3 && valid_token(parts[1])) {
    f.kind = ServerFrame::Kind::Committed;
    f.txn = std::string(parts[1]);
    const auto n = parts[2];
    auto [ptr, ec] = std::from_chars(n.data(), n.data() + n.size(), f.rows);
    if (ec != std::errc() || ptr != n.data() + n.size()) throw bad();
    return f;
  }
  if (parts[0] == "ERROR" && parts.size() == 3 && valid_token(parts[1]) && valid_token(parts[2])) {
    f.kind = ServerFrame::Kind::Error;
    f.txn = std::string(parts[1]);
    f.reason = std::string(parts[2]);
    return f;
  }
  throw bad();
}

std::string begin_frame(std::string_view txn, std::string_view table) {
  std::string out = "BEGIN ";
  out += txn;
  out += ' ';
  out += table;
  out += '\n';
  return out;
}

std::string ready_frame(std::string_view txn) { return "READY " + std::string(txn) + "\n"; }

std::string committed_frame(std::string_view txn, std::uint64_t rows) {
  return "COMMITTED " + std::string(txn) + " " + std::to_string(rows) + "\n";
}

std::string error_frame(std::string_view txn, ErrorReason reason) {
  return "ERROR " + std::string(txn.empty() ? "-" : txn) + " " + std::string(to_string(reason)) + "\n";
}

// ---- SegmentStore ---------------------------------------------------------

SegmentStore::SegmentStore(std::string segment_id) : segment_id_(std::move(segment_id)) {}

bool SegmentStore::register_txn(const std::string& txn) {
  std::unique_lock lock(mu_);
  if (!txns_.insert(txn).second) return false;
  txn_order_.push_back(txn);
  return true;
}

std::vector<std::string> SegmentStore::begun_txns() const {
  std::shared_lock lock(mu_);
  return txn_order_;
}

TimePoint SegmentStore::schedule_commit(TimePoint now, std::uint64_t rows, const LatencyModel& latency) {
  std::lock_guard lock(work_mu_);
  const Duration row_work = latency.commit_latency(rows) - latency.commit_fixed;
  const TimePoint start = std::max(now, busy_until_);
  busy_until_ = start + row_work;
  return busy_until_ + latency.commit_fixed;
}

void SegmentStore::publish(const std::string& txn, const std::string& table, std::string rows,
                           std::uint64_t row_count) {
  // Reduce the batch to one candidate per device before taking the lock, so
  // the exclusive section stays short even for large transactions.
  std::unordered_map<std::string_view, std::pair<std::int64_t, std::string_view>> newest;
  std::size_t pos = 0;
  while (pos < rows.size()) {
    auto nl = rows.find('\n', pos);
    if (nl == std::string::npos) nl = rows.size();
    const std::string_view row(rows.data() + pos, nl - pos);
    pos = nl + 1;
    const auto c1 = row.find(',');
    if (c1 == std::string_view::npos) continue;
    const auto c2 = row.find(',', c1 + 1);
    const auto ts_text = row.substr(c1 + 1, (c2 == std::string_view::npos ? row.size() : c2) - c1 - 1);
    std::int64_t ts = 0;
    std::from_chars(ts_text.data(), ts_text.data() + ts_text.size(), ts);
    const auto values = c2 == std::string_view::npos ? std::string_view{} : row.substr(c2 + 1);
    auto [it, inserted] = newest.try_emplace(row.substr(0, c1), ts, values);
    if (!inserted && ts > it->second.first) it->second = {ts, values};
  }

  const auto now_us = epoch_micros();
  std::unique_lock lock(mu_);
  for (const auto& [device, cand] : newest) {
    auto it = latest_.find(std::string(device));
    if (it == latest_.end()) {
      latest_.emplace(std::string(device), Latest{cand.first, std::string(cand.second), txn});
    } else if (cand.first > it->second.timestamp_us) {
      it->second = Latest{cand.first, std::string(cand.second), txn};
    }
  }
  visible_[txn] = row_count;
  committed_rows_ += row_count;
  if (row_count > 0) last_data_commit_us_ = now_us;
  if (dump_) {
    *dump_ << "# " << txn << ' ' << table << ' ' << row_count << '\n' << rows;
    dump_->flush();
  }
  committed_.push_back({txn, std::move(rows), row_count});
}

std::optional<ProbeResult> SegmentStore::visibility_probe(std::string_view device) const {
  std::shared_lock lock(mu_);
  auto it = latest_.find(std::string(device));
  if (it == latest_.end()) return std::nullopt;
  return ProbeResult{it->second.timestamp_us, it->second.values, it->second.txn};
}

std::uint64_t SegmentStore::visible_rows(const std::string& txn) const {
  std::shared_lock lock(mu_);
  auto it = visible_.find(txn);
  return it == visible_.end() ? 0 : it->second;
}

std::uint64_t SegmentStore::committed_rows() const {
  std::shared_lock lock(mu_);
  return committed_rows_;
}

std::uint64_t SegmentStore::committed_txns() const {
  std::shared_lock lock(mu_);
  return committed_.size();
}

std::optional<std::int64_t> SegmentStore::last_data_commit_epoch_us() const {
  std::shared_lock lock(mu_);
  return last_data_commit_us_;
}

void SegmentStore::for_each_committed_row(
    const std::function<void(std::string_view, std::string_view)>& fn) const {
  std::shared_lock lock(mu_);
  for (const auto& c : committed_) {
    std::size_t pos = 0;
    while (pos < c.rows.size()) {
      auto nl = c.rows.find('\n', pos);
      if (nl == std::string::npos) nl = c.rows.size();
      fn(c.txn, std::string_view(c.rows.data() + pos, nl - pos));
      pos = nl + 1;
    }
  }
}

void SegmentStore::enable_dump(const std::string& path) {
  auto f = std::make_unique<std::ofstream>(path, std::ios::app);
  if (!*f) throw ConfigError("cannot open segment dump file '" + path + "'");
  std::unique_lock lock(mu_);
  dump_ = std::move(f);
}

// ---- SegmentSession -------------------------------------------------------

SegmentSession::SegmentSession(SegmentStore& store, LatencyModel latency)
    : store_(store), latency_(latency) {}

SegmentSession::~SegmentSession() { handle_disconnect(); }

std::optional<TxnState> SegmentSession::state() const { return state_; }

namespace {

SessionStep reply(std::string frame) { return {SessionStep::Kind::Reply, std::move(frame), {}}; }

bool active(const std::optional<TxnState>& s) {
  return s && (*s == TxnState::Begun || *s == TxnState::Streaming || *s == TxnState::Committing);
}

}  // namespace

SessionStep SegmentSession::handle_line(std::string_view line, TimePoint now) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  ClientFrame f;
  try {
    f = parse_client_frame(line);
  } catch (const ProtocolError&) {
    return reply(error_frame(active(state_) ? txn_ : "-", ErrorReason::ProtocolOrder));
  }
  switch (f.kind) {
    case ClientFrame::Kind::Begin:
      return handle_begin(f.txn, f.table, now);
    case ClientFrame::Kind::Eof:
      return handle_eof(now);
    case ClientFrame::Kind::Data:
      return handle_data(f.row);
  }
  return {};
}

SessionStep SegmentSession::handle_begin(const std::string& txn, const std::string& table, TimePoint now) {
  if (active(state_)) {
    return reply(error_frame(txn, txn == txn_ ? ErrorReason::DuplicateTxn : ErrorReason::ProtocolOrder));
  }
  if (!store_.register_txn(txn)) return reply(error_frame(txn, ErrorReason::DuplicateTxn));
  state_ = TxnState::Begun;
  txn_ = txn;
  table_ = table;
  rows_.clear();
  row_count_ = 0;
  if (latency_.begin_latency <= Duration::zero()) return reply(ready_frame(txn));
  return {SessionStep::Kind::ReplyAt, ready_frame(txn), now + latency_.begin_latency};
}

SessionStep SegmentSession::handle_data(std::string_view row) {
  if (!active(state_) && state_ != TxnState::Committed) return reply(error_frame("-", ErrorReason::UnknownTxn));
  if (state_ == TxnState::Committing || state_ == TxnState::Committed) {
    return reply(error_frame(txn_, ErrorReason::ProtocolOrder));
  }
  state_ = TxnState::Streaming;
  rows_.append(row);
  rows_ += '\n';
  ++row_count_;
  return {};
}

SessionStep SegmentSession::handle_eof(TimePoint now) {
  if (!active(state_) && state_ != TxnState::Committed) return reply(error_frame("-", ErrorReason::UnknownTxn));
  if (state_ == TxnState::Committing || state_ == TxnState::Committed) {
    return reply(error_frame(txn_, ErrorReason::ProtocolOrder));
  }
  state_ = TxnState::Committing;
  return {SessionStep::Kind::CommitAt, {}, store_.schedule_commit(now, row_count_, latency_)};
}

std::string SegmentSession::finish_commit() {
  if (state_ != TxnState::Committing) throw PreconditionError("finish_commit: no transaction is committing");
  store_.publish(txn_, table_, std::move(rows_), row_count_);
  rows_.clear();
  state_ = TxnState::Committed;
  return committed_frame(txn_, row_count_);
}

void SegmentSession::handle_disconnect() {
  if (active(state_)) {
    state_ = TxnState::Aborted;
    rows_.clear();
  }
}

}  // namespace gateflow
