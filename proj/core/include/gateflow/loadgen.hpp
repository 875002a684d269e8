#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gateflow/record.hpp"
#include "gateflow/time.hpp"

namespace gateflow {

struct LoadgenOptions {
  /// Gateway address, host:port.
  std::string target = "127.0.0.1:8080";
  /// Replay the lines of this file instead of generating rows.
  std::optional<std::string> file;
  /// Synthetic rows per second; 0 posts as fast as the gateway accepts.
  std::uint64_t rate = 10000;
  /// Synthetic run length. Ignored when total_rows is set.
  Duration duration{ms(10000)};
  std::optional<std::uint64_t> total_rows;
  std::size_t batch_rows = 500;
  std::size_t devices = 100;
  /// Concurrent HTTP clients; rows are dealt to them batch by batch.
  std::size_t connections = 1;
  /// Pause before re-posting the tail of a body that got 429.
  Duration retry_backoff{ms(5)};
  /// Give up on a body after this long without progress.
  Duration give_up_after{ms(30000)};
  /// Timestamp of synthetic row 0, microseconds.
  std::int64_t base_timestamp_us = 1'700'000'000'000'000;
};

struct LoadgenSummary {
  /// Distinct rows offered to the gateway.
  std::uint64_t posted = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  /// Row rejections due to backpressure, counting every retry.
  std::uint64_t backpressured = 0;
  /// Rows abandoned after give_up_after or on transport errors.
  std::uint64_t dropped = 0;
  std::uint64_t requests = 0;
  std::uint64_t failed_requests = 0;
  Duration elapsed{0};

  double rows_per_sec() const;
};

/// Schema of synthetic rows: seq:int,value:float.
Schema synthetic_schema();
/// "dev<k>,<ts>,<seq>,<value>" with k = seq mod devices.
std::string synthetic_row(std::uint64_t seq, std::size_t devices, std::int64_t base_timestamp_us);

/// Runs to completion. Throws DependencyError if the gateway is unreachable
/// before anything was posted, ConfigError for an unreadable file.
LoadgenSummary run_loadgen(const LoadgenOptions& options);

std::string to_json(const LoadgenSummary& summary);

}  // namespace gateflow
