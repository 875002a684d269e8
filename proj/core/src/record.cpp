#include "gateflow/record.hpp"

#include <charconv>
#include <system_error>

#include "gateflow/error.hpp"

namespace gateflow {

std::string_view to_string(ColumnType type) {
  switch (type) {
    case ColumnType::Float:
      return "float";
    case ColumnType::Int:
      return "int";
    case ColumnType::String:
      return "string";
  }
  return "float";
}

Column parse_column(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == spec.size()) {
    throw ConfigError("schema column must be name:type, got '" + std::string(spec) + "'");
  }
  Column column{std::string(spec.substr(0, colon)), ColumnType::Float};
  const auto type = spec.substr(colon + 1);
  if (type == "float") {
    column.type = ColumnType::Float;
  } else if (type == "int") {
    column.type = ColumnType::Int;
  } else if (type == "string") {
    column.type = ColumnType::String;
  } else {
    throw ConfigError("unknown column type '" + std::string(type) + "'");
  }
  return column;
}

Schema parse_schema(const std::vector<std::string>& specs) {
  Schema schema;
  schema.reserve(specs.size());
  for (const auto& s : specs) schema.push_back(parse_column(s));
  return schema;
}

std::vector<std::string> format_schema(const Schema& schema) {
  std::vector<std::string> out;
  out.reserve(schema.size());
  for (const auto& c : schema) out.push_back(c.name + ":" + std::string(to_string(c.type)));
  return out;
}

namespace {

template <class Number>
void append_number(std::string& out, Number v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

}  // namespace

void append_csv(std::string& out, const Record& record) {
  out += record.device_id;
  out += ',';
  append_number(out, record.timestamp_us);
  for (const auto& value : record.values) {
    out += ',';
    std::visit(
        [&out](const auto& v) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, std::string>) {
            out += v;
          } else {
            append_number(out, v);
          }
        },
        value);
  }
}

std::string to_csv(const Record& record) {
  std::string out;
  append_csv(out, record);
  return out;
}

std::uint64_t device_hash(std::string_view device_id) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : device_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t route_to_segment(std::string_view device_id, std::size_t segment_count) {
  if (segment_count == 0) throw ParameterError("route_to_segment: no segments");
  return static_cast<std::size_t>(device_hash(device_id) % segment_count);
}

}  // namespace gateflow
