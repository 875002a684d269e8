#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gateflow/pipeline.hpp"
#include "gateflow/record.hpp"

namespace gateflow {

enum class IngestErrorReason { Arity, Type, EmptyDevice, BadTimestamp };

std::string_view to_string(IngestErrorReason reason);

struct IngestError {
  /// 1-based line number inside the posted body.
  std::size_t line_number = 0;
  /// Offending line, truncated to kMaxRawLine bytes.
  std::string raw_line;
  IngestErrorReason reason = IngestErrorReason::Arity;
  /// Wall-clock microseconds since the epoch.
  std::int64_t at_us = 0;
  std::string detail;

  static constexpr std::size_t kMaxRawLine = 1024;
};

/// Parses "device,timestamp_us,v1,...,vn". Checks run left to right and the
/// first failure wins: device id, timestamp, column count, column types.
/// A device id is rejected (EmptyDevice) when empty, when it contains
/// whitespace or control bytes, or when it starts with a protocol keyword.
/// A trailing '\r' is ignored. line_number and at_us are left for the caller.
std::variant<Record, IngestError> parse_record(std::string_view line, const Schema& schema);

/// Thread-safe bounded log of rejected lines. Oldest entries are dropped
/// once the bound is hit; total() keeps counting.
class ErrorLog {
 public:
  explicit ErrorLog(std::size_t max_entries = 10000) : max_entries_(max_entries) {}

  void append(IngestError error);
  std::vector<IngestError> snapshot() const;
  std::uint64_t total() const { return total_.load(std::memory_order_relaxed); }

 private:
  mutable std::mutex mu_;
  std::deque<IngestError> entries_;
  std::size_t max_entries_;
  std::atomic<std::uint64_t> total_{0};
};

struct IngestReport {
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t backpressured = 0;
  /// 1-based line number from which the client should retry, set when the
  /// pipeline filled up. Every non-blank line from there on is counted as
  /// backpressured and was not enqueued.
  std::optional<std::size_t> retry_from_line;

  std::uint64_t lines() const { return accepted + rejected + backpressured; }
  friend bool operator==(const IngestReport&, const IngestReport&) = default;
};

/// Serializes a report as the JSON body returned by POST /ingest.
std::string to_json(const IngestReport& report);

/// One listener's ingest front-end. Shares the pipeline with every other
/// listener; assigns dense, increasing sequence numbers to accepted records.
class Ingestor {
 public:
  Ingestor(Schema schema, LockFreeQueue<Record>& pipeline, ErrorLog& errors);

  /// Splits `body` into lines (blank lines are skipped and not counted),
  /// parses each, logs bad ones, and enqueues good ones until the pipeline
  /// pushes back.
  IngestReport handle_post(std::string_view body);

  const Schema& schema() const { return schema_; }
  /// Next sequence number that will be handed out (the first one is 1).
  std::uint64_t next_seq() const;

 private:
  Schema schema_;
  LockFreeQueue<Record>& pipeline_;
  ErrorLog& errors_;
  // Held while one post is numbered and enqueued, so numbers stay dense even
  // when the pipeline pushes back halfway through a body.
  mutable std::mutex seq_mu_;
  std::uint64_t next_ = 1;
};

}  // namespace gateflow
