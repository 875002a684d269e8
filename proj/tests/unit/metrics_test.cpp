#include <gtest/gtest.h>

#include "gateflow/error.hpp"
#include "gateflow/metrics.hpp"

using namespace gateflow;

TEST(IngestionSpeed, UsesTheLatestSegmentCompletion) {
  IngestionRun run;
  run.rows = 1'000'000;
  run.start = at_us(0);
  run.segment_done = {at_us(1'500'000), at_us(2'000'000), at_us(1'000'000)};
  EXPECT_DOUBLE_EQ(ingestion_speed(run), 500'000.0);
}

TEST(IngestionSpeed, ZeroRowsIsZero) {
  IngestionRun run;
  run.start = at_us(10);
  EXPECT_EQ(ingestion_speed(run), 0.0);
}

TEST(IngestionSpeed, RejectsImpossibleTimings) {
  IngestionRun run;
  run.rows = 10;
  run.start = at_us(100);
  EXPECT_THROW(ingestion_speed(run), ParameterError);
  run.segment_done = {at_us(100)};
  EXPECT_THROW(ingestion_speed(run), ParameterError);
  run.segment_done = {at_us(50), at_us(200)};
  EXPECT_THROW(ingestion_speed(run), ParameterError);
}

TEST(Scalability, ReproducesPublishedRatios) {
  EXPECT_NEAR(scalability(1, 3, 3.75e6, 10.05e6), 0.893, 0.005);
  EXPECT_NEAR(scalability(1, 8, 1.0, 7.59), 0.949, 0.005);
  EXPECT_DOUBLE_EQ(scalability(2, 4, 100.0, 200.0), 1.0);
}

TEST(Scalability, Preconditions) {
  EXPECT_THROW(scalability(2, 2, 1.0, 1.0), ParameterError);
  EXPECT_THROW(scalability(3, 1, 1.0, 1.0), ParameterError);
  EXPECT_THROW(scalability(1, 2, 0.0, 1.0), ParameterError);
}

TEST(QueryLatency, Difference) {
  EXPECT_EQ(query_latency(at_us(5), at_us(12)), Duration(7));
  EXPECT_EQ(query_latency(at_us(5), at_us(5)), Duration(0));
  EXPECT_THROW(query_latency(at_us(6), at_us(5)), ParameterError);
}

TEST(Counters, TextRoundTrip) {
  LiveCounters c;
  c.rows_accepted = 10;
  c.rows_committed = 9;
  c.rows_rejected = 1;
  c.rows_backpressured = 4;
  c.active_slots = 3;
  c.slots_activated_total = 5;
  c.slots_aborted_total = 2;
  c.last_commit_ms = 1'700'000'000'123;
  const auto s = snapshot(c);
  EXPECT_EQ(s.rows_committed, 9u);
  const auto text = to_text(s);
  EXPECT_NE(text.find("rows_accepted=10\n"), std::string::npos);
  EXPECT_EQ(parse_counters(text), s);
  EXPECT_EQ(parse_counters(text + "future_key=1\n"), s);
  EXPECT_THROW(parse_counters("rows_accepted\n"), ParameterError);
  EXPECT_THROW(parse_counters("rows_accepted=abc\n"), ParameterError);
}
