#include <gtest/gtest.h>

#include <cstdlib>

#include "gateflow/config.hpp"
#include "gateflow/error.hpp"

using namespace gateflow;

namespace {

const char* kConfig = R"({
  "listen_addr": "0.0.0.0:9000",
  "schema": ["temp:float", "n:int"],
  "interval_ms": 50,
  "segments": [
    {"id": "s0", "port": 7001, "commit_fixed_ms": 2.5},
    {"id": "s1", "host": "10.0.0.2", "port": 7002, "commit_per_row_us": 1.25}
  ]
})";

}  // namespace

TEST(Config, ParsesAndFillsDefaults) {
  const auto c = parse_config(kConfig);
  EXPECT_EQ(c.listen_addr, "0.0.0.0:9000");
  EXPECT_EQ(c.schema.size(), 2u);
  EXPECT_EQ(c.interval_ms, 50);
  EXPECT_EQ(c.dispatch_cycle_ms, 10000);
  EXPECT_EQ(c.table, "readings");
  ASSERT_EQ(c.segments.size(), 2u);
  EXPECT_EQ(c.segments[0].endpoint.host, "127.0.0.1");
  EXPECT_EQ(c.segments[0].latency.commit_fixed, Duration(2500));
  EXPECT_EQ(c.segments[1].latency.commit_per_row_ns, 1250);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, CanonicalFormIsAFixedPoint) {
  const auto c = parse_config(kConfig);
  const auto text = to_canonical_json(c);
  const auto again = parse_config(text);
  EXPECT_EQ(again, c);
  EXPECT_EQ(to_canonical_json(again), text);
  EXPECT_EQ(config_hash(again), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, HashChangesWithContent) {
  auto c = parse_config(kConfig);
  const auto h = config_hash(c);
  c.interval_ms = 51;
  EXPECT_NE(config_hash(c), h);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(parse_config(R"({"intervl_ms": 5})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"segments": [{"id": "a", "prt": 1}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"interval_ms": "fast"})"), ConfigError);
  EXPECT_THROW(parse_config("not json"), ConfigError);
  EXPECT_THROW(parse_config("[]"), ConfigError);
  EXPECT_THROW(parse_config(R"({"segments": [{"port": 1}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"segments": [{"id": "a", "port": 70000}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"segments": [{"id": "a", "port": 1, "commit_fixed_ms": -1}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema": ["x:decimal"]})"), ConfigError);
}

TEST(Config, Validation) {
  auto c = parse_config(kConfig);
  auto bad = c;
  bad.segments.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.dispatch_cycle_ms = 10;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.interval_ms = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.table = "two words";
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.segments[1].endpoint = bad.segments[0].endpoint;
  EXPECT_THROW(bad.validate_segments(), ConfigError);
  bad = c;
  bad.segments[1].endpoint.id = "s0";
  EXPECT_THROW(bad.validate_segments(), ConfigError);
}

TEST(Config, HostPort) {
  const auto hp = parse_host_port("example:80");
  EXPECT_EQ(hp.host, "example");
  EXPECT_EQ(hp.port, 80);
  EXPECT_THROW(parse_host_port("nocolon"), ConfigError);
  EXPECT_THROW(parse_host_port(":80"), ConfigError);
  EXPECT_THROW(parse_host_port("h:99999"), ConfigError);
  EXPECT_THROW(parse_host_port("h:8x"), ConfigError);
}

TEST(Config, PathResolutionPrefersTheFlag) {
  ::setenv("GATEFLOW_CONFIG", "/from/env.json", 1);
  EXPECT_EQ(resolve_config_path(std::string("/flag.json")), "/flag.json");
  EXPECT_EQ(resolve_config_path(std::nullopt), "/from/env.json");
  ::unsetenv("GATEFLOW_CONFIG");
  EXPECT_FALSE(resolve_config_path(std::nullopt));
}

TEST(Config, LoadMissingFile) { EXPECT_THROW(load_config("/nonexistent/gateflow.json"), ConfigError); }
