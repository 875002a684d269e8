#pragma once

// A live slot: one transaction at a time across a fixed set of segment
// connections. The methods are coroutines on the owning io_context; one
// slot is driven by exactly one task.

#include <boost/asio/awaitable.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gateflow/record.hpp"
#include "gateflow/segment_proto.hpp"
#include "gateflow/slot_phase.hpp"
#include "gateflow/time.hpp"

namespace gateflow {

struct SlotOptions {
  std::string table = "readings";
  /// Prefix of every transaction id: <nonce>-<slot>-<n>.
  std::string txn_nonce = "g";
  std::size_t connect_retries = 3;
  Duration connect_backoff{ms(100)};
};

class LiveSlot {
 public:
  LiveSlot(SlotId id, std::vector<SegmentEndpoint> segments, SlotOptions options, const Clock& clock);
  ~LiveSlot();

  LiveSlot(const LiveSlot&) = delete;
  LiveSlot& operator=(const LiveSlot&) = delete;

  SlotId id() const { return id_; }
  /// Connect before the first transaction (fresh), then the live phase.
  SlotPhase phase() const { return phase_; }
  bool fresh() const { return fresh_; }
  const std::optional<std::string>& txn() const { return txn_; }
  std::uint64_t batch_rows() const { return batch_rows_; }
  TimePoint phase_entered_at() const { return phase_entered_at_; }
  std::optional<TimePoint> last_send_ended_at() const { return last_send_ended_at_; }
  const std::vector<SegmentEndpoint>& segments() const { return segments_; }

  /// Opens missing connections (bounded retries per segment), writes BEGIN
  /// with a fresh txn id to every segment and waits for every READY. On
  /// success the slot is in Wait. Throws DependencyError naming the segment
  /// address after the retry budget, ProtocolError on a bad reply; the slot
  /// is Retired in both cases.
  boost::asio::awaitable<void> begin_connect();

  /// Scheduler dispatch: Wait -> Send. Resets the batch row count.
  void enter_send();

  /// Frames each record onto exactly one connection, chosen by
  /// route_to_segment(device). Throws PreconditionError unless in Send; on a
  /// write failure the slot is Retired and the error propagates.
  boost::asio::awaitable<void> send_records(std::span<const Record> records);

  /// Writes EOF on every connection: Send -> Commit.
  boost::asio::awaitable<void> finish_send();

  /// Reads one COMMITTED frame per connection and returns the row total.
  /// Throws ProtocolError on ERROR frames, wrong ids or row-count mismatch.
  boost::asio::awaitable<std::uint64_t> await_commit();

  /// Commit acknowledged for `txn`. Returns true when the slot should
  /// begin_connect again, false when it retired (`retire` set by the
  /// scheduler). A mismatched id retires the slot and throws ProtocolError.
  bool on_commit_ack(const std::string& txn, bool retire);

  /// Records of the current batch, kept until its commit is acknowledged so a
  /// failed batch can be handed back to the pipeline. After a failed
  /// await_commit only the records of segments that did not commit remain.
  std::vector<Record> take_in_flight();

  /// Closes connections and retires the slot (idempotent). Must not be
  /// called while an operation of this slot is suspended.
  void retire();
  /// Aborts pending I/O from outside the slot's task; the suspended
  /// operation then fails and the task retires the slot.
  void cancel();

  /// Per-connection rows written in the current batch (for audits).
  std::vector<std::uint64_t> rows_per_segment() const;

 private:
  struct Connection;

  void set_phase(SlotPhase p);
  boost::asio::awaitable<void> ensure_connected(Connection& c);
  std::string next_txn_id();

  SlotId id_;
  std::vector<SegmentEndpoint> segments_;
  SlotOptions options_;
  const Clock& clock_;
  std::vector<std::unique_ptr<Connection>> conns_;
  SlotPhase phase_ = SlotPhase::Connect;
  bool fresh_ = true;
  std::optional<std::string> txn_;
  std::uint64_t txn_counter_ = 0;
  std::uint64_t batch_rows_ = 0;
  std::vector<Record> in_flight_;
  TimePoint phase_entered_at_;
  std::optional<TimePoint> last_send_ended_at_;
};

}  // namespace gateflow
