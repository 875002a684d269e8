#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gateflow/record.hpp"
#include "gateflow/segment_proto.hpp"
#include "gateflow/time.hpp"

namespace gateflow {

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

/// "host:port"; throws ConfigError.
HostPort parse_host_port(const std::string& text);

struct GatewayConfig {
  std::string listen_addr = "127.0.0.1:8080";
  Schema schema;
  std::string table = "readings";
  std::int64_t interval_ms = 100;
  std::int64_t dispatch_cycle_ms = 10000;
  std::size_t max_slots = 64;
  std::size_t ewma_window = 8;
  /// Pipeline bound in records; 0 means unbounded.
  std::size_t queue_capacity = 1'000'000;
  /// HTTP worker threads; 0 means one per hardware thread.
  std::size_t listeners = 0;
  /// Connection attempts per segment before a slot gives up.
  std::size_t connect_retries = 3;
  std::int64_t connect_backoff_ms = 100;
  std::vector<SegmentSpec> segments;

  /// Gateway-side checks: at least one segment, interval_ms > 0,
  /// dispatch_cycle_ms >= interval_ms, valid table token.
  void validate() const;
  /// Segment-daemon checks: at least one segment, unique ids, and unique
  /// non-zero ports per host.
  void validate_segments() const;

  friend bool operator==(const GatewayConfig&, const GatewayConfig&) = default;
};

/// Parses the JSON config document. Missing keys take the defaults above.
/// Throws ConfigError with the offending key.
GatewayConfig parse_config(const std::string& text);
GatewayConfig load_config(const std::string& path);

/// Canonical JSON (sorted keys, every field present). parse_config of this
/// text returns an equal config, and dumping that again gives the same text.
std::string to_canonical_json(const GatewayConfig& config);

/// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const GatewayConfig& config);

/// The explicit path if given, otherwise $GATEFLOW_CONFIG, otherwise empty.
std::optional<std::string> resolve_config_path(const std::optional<std::string>& flag);

std::uint64_t fnv1a(std::string_view data) noexcept;

}  // namespace gateflow
