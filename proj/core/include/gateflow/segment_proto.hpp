#pragma once

// Slot <-> segment wire protocol and the in-memory segment model.
//
// Client frames, one per line:   BEGIN <txn> <table> | <csv-row> | EOF
// Server frames, one per line:   READY <txn> | COMMITTED <txn> <rows> | ERROR <txn|-> <reason>

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gateflow/time.hpp"

namespace gateflow {

struct LatencyModel {
  Duration begin_latency{0};
  Duration commit_fixed{0};
  std::int64_t commit_per_row_ns = 0;

  Duration commit_latency(std::uint64_t rows) const {
    return commit_fixed + Duration(static_cast<std::int64_t>(rows) * commit_per_row_ns / 1000);
  }
  friend bool operator==(const LatencyModel&, const LatencyModel&) = default;
};

struct SegmentEndpoint {
  std::string id;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string address() const { return host + ":" + std::to_string(port); }
  friend bool operator==(const SegmentEndpoint&, const SegmentEndpoint&) = default;
};

struct SegmentSpec {
  SegmentEndpoint endpoint;
  LatencyModel latency;

  friend bool operator==(const SegmentSpec&, const SegmentSpec&) = default;
};

// ---- frames ---------------------------------------------------------------

enum class ErrorReason { DuplicateTxn, UnknownTxn, ProtocolOrder };

std::string_view to_string(ErrorReason reason);

struct ClientFrame {
  enum class Kind { Begin, Data, Eof };
  Kind kind = Kind::Data;
  std::string txn;    // Begin
  std::string table;  // Begin
  std::string_view row;  // Data; points into the parsed line
};

struct ServerFrame {
  enum class Kind { Ready, Committed, Error };
  Kind kind = Kind::Ready;
  std::string txn;  // "-" when an error is not tied to a transaction
  std::uint64_t rows = 0;
  std::string reason;

  friend bool operator==(const ServerFrame&, const ServerFrame&) = default;
};

/// Classifies one client line (without '\n'). Lines starting with "BEGIN "
/// or equal to "EOF" are control frames; everything else is a data row.
/// Throws ProtocolError for a malformed BEGIN.
ClientFrame parse_client_frame(std::string_view line);
/// Throws ProtocolError on anything that is not a well-formed server frame.
ServerFrame parse_server_frame(std::string_view line);

std::string begin_frame(std::string_view txn, std::string_view table);
inline constexpr std::string_view kEofFrame = "EOF\n";
std::string ready_frame(std::string_view txn);
std::string committed_frame(std::string_view txn, std::uint64_t rows);
std::string error_frame(std::string_view txn, ErrorReason reason);

/// Transaction ids and table names travel as single tokens.
bool valid_token(std::string_view token) noexcept;

// ---- committed data -------------------------------------------------------

struct ProbeResult {
  std::int64_t timestamp_us = 0;
  /// Everything after the timestamp field, as written by the slot.
  std::string values;
  std::string txn;

  friend bool operator==(const ProbeResult&, const ProbeResult&) = default;
};

/// Committed state of one segment, shared by all of its connections. Rows
/// of a transaction are published in one step under an exclusive lock, so a
/// concurrent reader sees none or all of them.
class SegmentStore {
 public:
  explicit SegmentStore(std::string segment_id = {});

  const std::string& segment_id() const { return segment_id_; }

  /// Records that `txn` was begun here. False if the id was ever seen before.
  bool register_txn(const std::string& txn);
  std::vector<std::string> begun_txns() const;

  /// Commit work on a segment is serialized: the per-row part of one commit
  /// starts when the previous one's per-row part ends. Returns the instant
  /// the commit completes.
  TimePoint schedule_commit(TimePoint now, std::uint64_t rows, const LatencyModel& latency);

  /// Makes a transaction's rows visible. `rows` is newline-terminated CSV.
  void publish(const std::string& txn, const std::string& table, std::string rows, std::uint64_t row_count);

  /// Latest committed row of a device by timestamp; ties keep the first.
  std::optional<ProbeResult> visibility_probe(std::string_view device) const;
  /// Rows of `txn` that are visible: 0 before its commit, all of them after.
  std::uint64_t visible_rows(const std::string& txn) const;
  std::uint64_t committed_rows() const;
  std::uint64_t committed_txns() const;
  /// Epoch microseconds of the last commit that carried at least one row.
  std::optional<std::int64_t> last_data_commit_epoch_us() const;

  /// Calls fn(txn, row) for each committed row, in commit order.
  void for_each_committed_row(const std::function<void(std::string_view, std::string_view)>& fn) const;

  /// Appends every later commit to `path` as "# <txn> <table> <rows>" followed
  /// by the rows. Throws ConfigError if the file cannot be opened.
  void enable_dump(const std::string& path);

 private:
  struct Latest {
    std::int64_t timestamp_us;
    std::string values;
    std::string txn;
  };
  struct Committed {
    std::string txn;
    std::string rows;
    std::uint64_t count;
  };

  std::string segment_id_;
  mutable std::shared_mutex mu_;
  std::unordered_set<std::string> txns_;
  std::vector<std::string> txn_order_;
  std::vector<Committed> committed_;
  std::unordered_map<std::string, std::uint64_t> visible_;
  std::unordered_map<std::string, Latest> latest_;
  std::uint64_t committed_rows_ = 0;
  std::optional<std::int64_t> last_data_commit_us_;
  std::mutex work_mu_;
  TimePoint busy_until_{};
  std::unique_ptr<std::ofstream> dump_;
};

// ---- per-connection state machine -----------------------------------------

enum class TxnState { Begun, Streaming, Committing, Committed, Aborted };

std::string_view to_string(TxnState state);

/// What the connection task should do after feeding one line.
struct SessionStep {
  enum class Kind {
    None,        // keep reading
    Reply,       // write `reply` now
    ReplyAt,     // write `reply` at `at` (READY after the begin latency)
    CommitAt,    // call finish_commit() at `at`, then write its frame
  };
  Kind kind = Kind::None;
  std::string reply;
  TimePoint at;
};

/// One slot connection to one segment. Owns the in-flight transaction; not
/// thread-safe (one task per connection).
class SegmentSession {
 public:
  SegmentSession(SegmentStore& store, LatencyModel latency);
  ~SegmentSession();

  SegmentSession(const SegmentSession&) = delete;
  SegmentSession& operator=(const SegmentSession&) = delete;

  SessionStep handle_line(std::string_view line, TimePoint now);

  SessionStep handle_begin(const std::string& txn, const std::string& table, TimePoint now);
  SessionStep handle_data(std::string_view row);
  SessionStep handle_eof(TimePoint now);
  /// Publishes the committing transaction and returns its COMMITTED frame.
  std::string finish_commit();
  /// Connection closed: an unfinished transaction is aborted.
  void handle_disconnect();

  std::optional<TxnState> state() const;
  const std::string& txn() const { return txn_; }
  std::uint64_t received_rows() const { return row_count_; }

 private:
  SegmentStore& store_;
  LatencyModel latency_;
  std::optional<TxnState> state_;
  std::string txn_;
  std::string table_;
  std::string rows_;
  std::uint64_t row_count_ = 0;
};

}  // namespace gateflow
