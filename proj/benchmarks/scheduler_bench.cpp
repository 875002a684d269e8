#include <benchmark/benchmark.h>

#include "gateflow/scheduler.hpp"
#include "gateflow/simulator.hpp"

using namespace gateflow;

static void BM_OptimalSlots(benchmark::State& state) {
  std::int64_t t = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(optimal_slots(ms(100), ms(t % 300), ms(150)));
    ++t;
  }
}
BENCHMARK(BM_OptimalSlots);

// One live-style tick with a steady pool, the hot path of the control loop.
static void BM_SchedulerTick(benchmark::State& state) {
  SchedulerConfig cfg;
  cfg.auto_tune = false;
  cfg.initial_slots = 4;
  Scheduler s(cfg);
  TimePoint now{};
  s.tick(now, true);
  for (auto _ : state) {
    now += ms(1);
    benchmark::DoNotOptimize(s.tick(now, true));
  }
}
BENCHMARK(BM_SchedulerTick);

// Virtual time per wall time: a 20 s saturating run at 1 ms ticks.
static void BM_SimulateGate(benchmark::State& state) {
  SimConfig c;
  c.duration = ms(20000);
  for (auto _ : state) benchmark::DoNotOptimize(run_sim(c));
  state.SetItemsProcessed(state.iterations() * 20000);
}
BENCHMARK(BM_SimulateGate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
