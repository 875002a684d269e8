#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include "gateflow/pipeline.hpp"

namespace gateflow {

// Reaches into the queue to replay an ABA interleaving step by step.
template <>
struct LockFreeQueueTestAccess<int> {
  using Queue = LockFreeQueue<int>;
  using Node = Queue::Node;

  static VersionedRef<Node> head(Queue& q) { return q.head_.load(); }
  static Node* next_of(Node* n) { return n->next.load().ptr; }
  static bool cas_head(Queue& q, VersionedRef<Node> expected, Node* desired) {
    return q.head_.compare_and_swap(expected, desired);
  }
};

}  // namespace gateflow

using namespace gateflow;
using Access = LockFreeQueueTestAccess<int>;

TEST(Pipeline, FifoForOneProducer) {
  LockFreeQueue<int> q;
  for (int i = 0; i < 100; ++i) ASSERT_EQ(q.enqueue(i), EnqueueResult::Accepted);
  EXPECT_EQ(q.approx_len(), 100u);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(q.dequeue(), i);
  EXPECT_EQ(q.dequeue(), std::nullopt);
  EXPECT_TRUE(q.empty());
}

TEST(Pipeline, DequeueOnEmptyDoesNotBlock) {
  LockFreeQueue<int> q;
  EXPECT_EQ(q.dequeue(), std::nullopt);
  EXPECT_TRUE(q.drain_up_to(10).empty());
}

TEST(Pipeline, CapacityPushesBack) {
  LockFreeQueue<int> q(3);
  EXPECT_EQ(q.enqueue(1), EnqueueResult::Accepted);
  EXPECT_EQ(q.enqueue(2), EnqueueResult::Accepted);
  EXPECT_EQ(q.enqueue(3), EnqueueResult::Accepted);
  EXPECT_EQ(q.enqueue(4), EnqueueResult::Backpressure);
  EXPECT_EQ(q.approx_len(), 3u);
  EXPECT_EQ(q.dequeue(), 1);
  EXPECT_EQ(q.enqueue(4), EnqueueResult::Accepted);
}

TEST(Pipeline, ZeroCapacityRejectsEverything) {
  LockFreeQueue<int> q(0);
  EXPECT_EQ(q.enqueue(1), EnqueueResult::Backpressure);
  EXPECT_TRUE(q.empty());
}

TEST(Pipeline, RequeueIgnoresCapacity) {
  LockFreeQueue<int> q(1);
  ASSERT_EQ(q.enqueue(1), EnqueueResult::Accepted);
  q.requeue(2);
  EXPECT_EQ(q.approx_len(), 2u);
  EXPECT_EQ(q.drain_up_to(10), (std::vector<int>{1, 2}));
}

TEST(Pipeline, DrainUpToStopsAtMax) {
  LockFreeQueue<int> q;
  for (int i = 0; i < 10; ++i) q.enqueue(i);
  EXPECT_EQ(q.drain_up_to(4), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(q.drain_up_to(0).size(), 0u);
  EXPECT_EQ(q.drain_up_to(100).size(), 6u);
}

TEST(Pipeline, MoveOnlyPayloads) {
  LockFreeQueue<std::unique_ptr<int>> q;
  q.enqueue(std::make_unique<int>(5));
  auto v = q.dequeue();
  ASSERT_TRUE(v && *v);
  EXPECT_EQ(**v, 5);
}

TEST(Pipeline, NodesAreReusedAfterDequeue) {
  LockFreeQueue<int> q;
  for (int round = 0; round < 1000; ++round) {
    q.enqueue(round);
    ASSERT_EQ(q.dequeue(), round);
  }
  EXPECT_TRUE(q.empty());
}

// The stale head snapshot names the same node address as the current head,
// so a pointer-only CAS would succeed and link a recycled node in. The
// counter makes it fail.
TEST(Pipeline, VersionCounterDefeatsAba) {
  LockFreeQueue<int> q;
  q.enqueue(1);
  q.enqueue(2);
  const auto stale = Access::head(q);
  auto* stale_next = Access::next_of(stale.ptr);

  ASSERT_EQ(q.dequeue(), 1);
  ASSERT_EQ(q.dequeue(), 2);
  q.enqueue(3);  // reuses freed nodes
  q.enqueue(4);
  ASSERT_EQ(q.dequeue(), 3);
  ASSERT_EQ(q.dequeue(), 4);
  const auto now = Access::head(q);
  ASSERT_EQ(now.ptr, stale.ptr) << "the interleaving should bring the head address back";
  EXPECT_NE(now.counter, stale.counter);

  EXPECT_FALSE(Access::cas_head(q, stale, stale_next));
  q.enqueue(5);
  EXPECT_EQ(q.dequeue(), 5);
  EXPECT_EQ(q.dequeue(), std::nullopt);
}

TEST(Pipeline, ConcurrentProducersAndConsumersLoseAndDuplicateNothing) {
  constexpr int kProducers = 4, kConsumers = 4, kPer = 25000;
  LockFreeQueue<int> q;
  std::atomic<int> done_producers{0};
  std::vector<std::vector<int>> got(kConsumers);
  std::vector<std::thread> threads;
  for (int p = 0; p < kProducers; ++p) {
    threads.emplace_back([&, p] {
      for (int i = 0; i < kPer; ++i) q.enqueue(p * kPer + i);
      done_producers.fetch_add(1);
    });
  }
  for (int c = 0; c < kConsumers; ++c) {
    threads.emplace_back([&, c] {
      for (;;) {
        if (auto v = q.dequeue()) {
          got[c].push_back(*v);
        } else if (done_producers.load() == kProducers && q.empty()) {
          break;
        } else {
          std::this_thread::yield();
        }
      }
    });
  }
  for (auto& t : threads) t.join();

  std::vector<int> all;
  for (auto& g : got) {
    // Per-producer order is preserved within each consumer's view.
    std::vector<int> last(kProducers, -1);
    for (int v : g) {
      EXPECT_GT(v, last[v / kPer]);
      last[v / kPer] = v;
    }
    all.insert(all.end(), g.begin(), g.end());
  }
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), static_cast<std::size_t>(kProducers * kPer));
  for (int i = 0; i < kProducers * kPer; ++i) ASSERT_EQ(all[i], i);
}

TEST(Pipeline, BoundedQueueNeverExceedsCapacityUnderContention) {
  constexpr std::size_t kCap = 64;
  LockFreeQueue<int> q(kCap);
  std::atomic<bool> stop{false};
  std::atomic<std::size_t> max_seen{0};
  std::vector<std::thread> producers;
  for (int p = 0; p < 3; ++p) {
    producers.emplace_back([&] {
      while (!stop.load()) {
        q.enqueue(1);
        auto len = q.approx_len();
        auto prev = max_seen.load();
        while (len > prev && !max_seen.compare_exchange_weak(prev, len)) {
        }
      }
    });
  }
  for (int i = 0; i < 20000; ++i) q.dequeue();
  stop = true;
  for (auto& t : producers) t.join();
  EXPECT_LE(max_seen.load(), kCap);
}

// Consumers racing on recycled nodes: a late write to a node that was already
// reused would lose a payload here.
TEST(Pipeline, RecycledNodesKeepTheirPayloads) {
  for (int round = 0; round < 5; ++round) {
    LockFreeQueue<std::unique_ptr<int>> q;
    constexpr int kPer = 50000;
    std::atomic<int> producers{0};
    std::atomic<long> sum{0};
    std::atomic<int> taken{0};
    std::vector<std::thread> t;
    for (int p = 0; p < 4; ++p) {
      t.emplace_back([&] {
        for (int i = 1; i <= kPer; ++i) q.enqueue(std::make_unique<int>(i));
        producers.fetch_add(1);
      });
      t.emplace_back([&] {
        while (producers.load() < 4 || !q.empty()) {
          if (auto v = q.dequeue()) {
            ASSERT_TRUE(*v);
            sum.fetch_add(**v);
            taken.fetch_add(1);
          }
        }
      });
    }
    for (auto& x : t) x.join();
    ASSERT_EQ(taken.load(), 4 * kPer);
    ASSERT_EQ(sum.load(), 4L * kPer * (kPer + 1) / 2);
  }
}

TEST(Pipeline, DestructorReleasesQueuedItems) {
  auto tracker = std::make_shared<int>(0);
  {
    LockFreeQueue<std::shared_ptr<int>> q;
    for (int i = 0; i < 10; ++i) q.enqueue(tracker);
    for (int i = 0; i < 4; ++i) q.dequeue();
    EXPECT_EQ(tracker.use_count(), 7);
  }
  EXPECT_EQ(tracker.use_count(), 1);
}
