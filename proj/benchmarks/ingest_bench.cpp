#include <benchmark/benchmark.h>

#include "gateflow/ingest.hpp"
#include "gateflow/loadgen.hpp"

namespace {

std::string make_body(std::size_t rows) {
  std::string body;
  for (std::size_t i = 0; i < rows; ++i) {
    body += gateflow::synthetic_row(i, 100, 1'700'000'000'000'000);
    body += '\n';
  }
  return body;
}

}  // namespace

static void BM_ParseRecord(benchmark::State& state) {
  const auto schema = gateflow::synthetic_schema();
  const std::string line = gateflow::synthetic_row(12345, 100, 1'700'000'000'000'000);
  for (auto _ : state) benchmark::DoNotOptimize(gateflow::parse_record(line, schema));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ParseRecord);

static void BM_HandlePost(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::string body = make_body(rows);
  gateflow::LockFreeQueue<gateflow::Record> pipeline;
  gateflow::ErrorLog errors;
  gateflow::Ingestor ingestor(gateflow::synthetic_schema(), pipeline, errors);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ingestor.handle_post(body));
    state.PauseTiming();
    pipeline.drain_up_to(rows);
    state.ResumeTiming();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(body.size()));
}
BENCHMARK(BM_HandlePost)->Arg(1000);

static void BM_AppendCsv(benchmark::State& state) {
  const auto schema = gateflow::synthetic_schema();
  const auto rec = std::get<gateflow::Record>(
      gateflow::parse_record(gateflow::synthetic_row(7, 100, 1'700'000'000'000'000), schema));
  std::string out;
  for (auto _ : state) {
    out.clear();
    gateflow::append_csv(out, rec);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_AppendCsv);

BENCHMARK_MAIN();
