#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gateflow {

enum class ColumnType { Float, Int, String };

struct Column {
  std::string name;
  ColumnType type = ColumnType::Float;

  friend bool operator==(const Column&, const Column&) = default;
};

/// Ordered measurement columns following the device id and timestamp.
using Schema = std::vector<Column>;

using Value = std::variant<double, std::int64_t, std::string>;

/// One parsed time-series row. (device_id, timestamp_us) identifies it within a
/// stream; seq is assigned by the gateway on acceptance for audits.
struct Record {
  std::string device_id;
  std::int64_t timestamp_us = 0;
  std::vector<Value> values;
  std::uint64_t seq = 0;

  friend bool operator==(const Record&, const Record&) = default;
};

std::string_view to_string(ColumnType type);

/// Parses "name:type" where type is float, int or string.
Column parse_column(std::string_view spec);
Schema parse_schema(const std::vector<std::string>& specs);
std::vector<std::string> format_schema(const Schema& schema);

/// Appends "device,timestamp,v1,...,vn" without a trailing newline. Floats use
/// the shortest representation that round-trips.
void append_csv(std::string& out, const Record& record);
std::string to_csv(const Record& record);

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t device_hash(std::string_view device_id) noexcept;

/// Index of the segment connection a record is written to inside one slot.
std::size_t route_to_segment(std::string_view device_id, std::size_t segment_count);

}  // namespace gateflow
