#include "gateflow/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gateflow/error.hpp"

namespace gateflow {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view data) noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

HostPort parse_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("address must be host:port, got '" + text + "'");
  HostPort hp;
  hp.host = text.substr(0, colon);
  const auto port = text.substr(colon + 1);
  char* end = nullptr;
  const long v = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || v < 0 || v > 65535) {
    throw ConfigError("invalid port in address '" + text + "'");
  }
  hp.port = static_cast<std::uint16_t>(v);
  return hp;
}

void GatewayConfig::validate() const {
  if (segments.empty()) throw ConfigError("config: at least one segment is required");
  if (interval_ms <= 0) throw ConfigError("config: interval_ms must be > 0");
  if (dispatch_cycle_ms < interval_ms) throw ConfigError("config: dispatch_cycle_ms must be >= interval_ms");
  if (max_slots == 0) throw ConfigError("config: max_slots must be >= 1");
  if (!valid_token(table)) throw ConfigError("config: table must be a single token");
  if (connect_retries == 0) throw ConfigError("config: connect_retries must be >= 1");
  parse_host_port(listen_addr);
  for (const auto& s : segments) {
    if (s.endpoint.port == 0) throw ConfigError("config: segment '" + s.endpoint.id + "' needs a port");
  }
}

void GatewayConfig::validate_segments() const {
  if (segments.empty()) throw ConfigError("config: at least one segment is required");
  std::set<std::string> ids;
  std::set<std::pair<std::string, std::uint16_t>> addrs;
  for (const auto& s : segments) {
    if (!ids.insert(s.endpoint.id).second) throw ConfigError("config: duplicate segment id '" + s.endpoint.id + "'");
    if (s.endpoint.port != 0 && !addrs.insert({s.endpoint.host, s.endpoint.port}).second) {
      throw ConfigError("config: duplicate segment address " + s.endpoint.address());
    }
  }
}

namespace {

double to_ms(Duration d) { return static_cast<double>(d.count()) / 1000.0; }
Duration from_ms(double v) { return Duration(static_cast<std::int64_t>(std::llround(v * 1000.0))); }

template <class T>
T field(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: key '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

GatewayConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(j,
                 {"listen_addr", "schema", "table", "interval_ms", "dispatch_cycle_ms", "max_slots", "ewma_window",
                  "queue_capacity", "listeners", "connect_retries", "connect_backoff_ms", "segments"},
                 "top level");
  GatewayConfig c;
  c.listen_addr = field<std::string>(j, "listen_addr", c.listen_addr);
  c.schema = parse_schema(field<std::vector<std::string>>(j, "schema", {}));
  c.table = field<std::string>(j, "table", c.table);
  c.interval_ms = field<std::int64_t>(j, "interval_ms", c.interval_ms);
  c.dispatch_cycle_ms = field<std::int64_t>(j, "dispatch_cycle_ms", c.dispatch_cycle_ms);
  c.max_slots = field<std::size_t>(j, "max_slots", c.max_slots);
  c.ewma_window = field<std::size_t>(j, "ewma_window", c.ewma_window);
  c.queue_capacity = field<std::size_t>(j, "queue_capacity", c.queue_capacity);
  c.listeners = field<std::size_t>(j, "listeners", c.listeners);
  c.connect_retries = field<std::size_t>(j, "connect_retries", c.connect_retries);
  c.connect_backoff_ms = field<std::int64_t>(j, "connect_backoff_ms", c.connect_backoff_ms);
  if (auto it = j.find("segments"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("config: segments must be a list");
    for (const auto& s : *it) {
      if (!s.is_object()) throw ConfigError("config: each segment must be an object");
      reject_unknown(s, {"id", "host", "port", "begin_latency_ms", "commit_fixed_ms", "commit_per_row_us"}, "segment");
      SegmentSpec spec;
      spec.endpoint.id = field<std::string>(s, "id", "");
      if (spec.endpoint.id.empty()) throw ConfigError("config: segment without id");
      spec.endpoint.host = field<std::string>(s, "host", spec.endpoint.host);
      const auto port = field<std::int64_t>(s, "port", 0);
      if (port < 0 || port > 65535) throw ConfigError("config: segment '" + spec.endpoint.id + "' port out of range");
      spec.endpoint.port = static_cast<std::uint16_t>(port);
      const double begin = field<double>(s, "begin_latency_ms", 0.0);
      const double fixed = field<double>(s, "commit_fixed_ms", 0.0);
      const double per_row = field<double>(s, "commit_per_row_us", 0.0);
      if (begin < 0 || fixed < 0 || per_row < 0) {
        throw ConfigError("config: segment '" + spec.endpoint.id + "' latencies must be >= 0");
      }
      spec.latency.begin_latency = from_ms(begin);
      spec.latency.commit_fixed = from_ms(fixed);
      spec.latency.commit_per_row_ns = static_cast<std::int64_t>(std::llround(per_row * 1000.0));
      c.segments.push_back(std::move(spec));
    }
  }
  return c;
}

GatewayConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_canonical_json(const GatewayConfig& c) {
  json j;
  j["listen_addr"] = c.listen_addr;
  j["schema"] = format_schema(c.schema);
  j["table"] = c.table;
  j["interval_ms"] = c.interval_ms;
  j["dispatch_cycle_ms"] = c.dispatch_cycle_ms;
  j["max_slots"] = c.max_slots;
  j["ewma_window"] = c.ewma_window;
  j["queue_capacity"] = c.queue_capacity;
  j["listeners"] = c.listeners;
  j["connect_retries"] = c.connect_retries;
  j["connect_backoff_ms"] = c.connect_backoff_ms;
  auto& segs = j["segments"] = json::array();
  for (const auto& s : c.segments) {
    segs.push_back({{"id", s.endpoint.id},
                    {"host", s.endpoint.host},
                    {"port", s.endpoint.port},
                    {"begin_latency_ms", to_ms(s.latency.begin_latency)},
                    {"commit_fixed_ms", to_ms(s.latency.commit_fixed)},
                    {"commit_per_row_us", static_cast<double>(s.latency.commit_per_row_ns) / 1000.0}});
  }
  return j.dump(2);
}

std::string config_hash(const GatewayConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(to_canonical_json(config))));
  return buf;
}

std::optional<std::string> resolve_config_path(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return flag;
  if (const char* env = std::getenv("GATEFLOW_CONFIG"); env != nullptr && *env != '\0') return std::string(env);
  return std::nullopt;
}

}  // namespace gateflow
