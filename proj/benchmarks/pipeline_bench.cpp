#include <benchmark/benchmark.h>

#include <thread>

#include "gateflow/pipeline.hpp"

using gateflow::LockFreeQueue;

static void BM_EnqueueDequeue(benchmark::State& state) {
  LockFreeQueue<int> q;
  for (auto _ : state) {
    q.enqueue(1);
    benchmark::DoNotOptimize(q.dequeue());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnqueueDequeue);

static void BM_DrainBatch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  LockFreeQueue<int> q;
  for (auto _ : state) {
    for (std::size_t i = 0; i < n; ++i) q.enqueue(static_cast<int>(i));
    benchmark::DoNotOptimize(q.drain_up_to(n));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_DrainBatch)->Arg(64)->Arg(4096);

// Producers and one consumer share the queue; reports aggregate throughput.
static void BM_ProducersOneConsumer(benchmark::State& state) {
  const int producers = static_cast<int>(state.range(0));
  constexpr int kPerProducer = 20000;
  for (auto _ : state) {
    LockFreeQueue<int> q;
    std::vector<std::thread> threads;
    for (int p = 0; p < producers; ++p) {
      threads.emplace_back([&q] {
        for (int i = 0; i < kPerProducer; ++i) q.enqueue(i);
      });
    }
    int got = 0;
    while (got < producers * kPerProducer) {
      if (q.dequeue()) ++got;
    }
    for (auto& t : threads) t.join();
  }
  state.SetItemsProcessed(state.iterations() * producers * kPerProducer);
}
BENCHMARK(BM_ProducersOneConsumer)->Arg(1)->Arg(4)->UseRealTime();

BENCHMARK_MAIN();
