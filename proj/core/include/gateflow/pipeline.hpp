#pragma once

// Michael-Scott lock-free FIFO. Every shared link is a (pointer, counter)
// pair swapped with a double-width compare-and-swap; the counter advances on
// each successful swap so a CAS holding a stale snapshot fails even when the
// pointer has come back to the same address (ABA).
//
// Nodes are type-stable: a dequeued node goes to an internal free list and is
// reused, never returned to the allocator while the queue lives. That keeps
// the "read next, then CAS" step memory-safe and is exactly the situation in
// which the counters are load-bearing.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#if !defined(__x86_64__) && !defined(__aarch64__)
#error "gateflow pipeline requires a 16-byte compare-and-swap (x86-64 or aarch64)"
#endif

namespace gateflow {

template <class Node>
struct VersionedRef {
  Node* ptr = nullptr;
  std::uint64_t counter = 0;

  friend bool operator==(const VersionedRef&, const VersionedRef&) = default;
};

/// A VersionedRef stored in one 16-byte word.
template <class Node>
class AtomicVersionedRef {
 public:
  AtomicVersionedRef() = default;
  explicit AtomicVersionedRef(Node* p) : raw_(pack({p, 0})) {}
  AtomicVersionedRef(const AtomicVersionedRef&) = delete;
  AtomicVersionedRef& operator=(const AtomicVersionedRef&) = delete;

  VersionedRef<Node> load() const noexcept {
    // A CAS of 0 -> 0 is the only portable single-instruction 16-byte read
    // the builtins give us; it writes back the same value when it matches.
    return unpack(__sync_val_compare_and_swap(&raw_, Raw{0}, Raw{0}));
  }

  /// Installs `desired` with counter expected.counter + 1 iff the location
  /// still holds exactly `expected` (pointer and counter).
  bool compare_and_swap(VersionedRef<Node> expected, Node* desired) noexcept {
    return __sync_bool_compare_and_swap(&raw_, pack(expected),
                                        pack({desired, expected.counter + 1}));
  }

  /// Unconditionally points the location at `desired`, still bumping the counter.
  void reset(Node* desired) noexcept {
    for (;;) {
      auto cur = load();
      if (compare_and_swap(cur, desired)) return;
    }
  }

 private:
  using Raw = unsigned __int128;

  static Raw pack(VersionedRef<Node> r) noexcept {
    return (static_cast<Raw>(r.counter) << 64) |
           static_cast<Raw>(reinterpret_cast<std::uintptr_t>(r.ptr));
  }
  static VersionedRef<Node> unpack(Raw raw) noexcept {
    return {reinterpret_cast<Node*>(static_cast<std::uintptr_t>(raw)),
            static_cast<std::uint64_t>(raw >> 64)};
  }

  alignas(16) mutable Raw raw_ = 0;
};

enum class EnqueueResult { Accepted, Backpressure };

template <class T>
struct LockFreeQueueTestAccess;

template <class T>
class LockFreeQueue {
 public:
  /// Unbounded when capacity is empty. A capacity of 0 rejects everything.
  explicit LockFreeQueue(std::optional<std::size_t> capacity = std::nullopt)
      : capacity_(capacity) {
    Node* dummy = allocate_node();
    head_.reset(dummy);
    tail_.reset(dummy);
  }

  ~LockFreeQueue() {
    // Only nodes after the dummy still own their payload; the dummy's and the
    // free nodes' pointers are stale.
    for (Node* n = head_.load().ptr->next.load().ptr; n != nullptr; n = n->next.load().ptr) {
      delete n->payload.load(std::memory_order_relaxed);
    }
    Node* n = all_nodes_.load(std::memory_order_acquire);
    while (n != nullptr) {
      Node* next = n->all_next;
      delete n;
      n = next;
    }
  }

  LockFreeQueue(const LockFreeQueue&) = delete;
  LockFreeQueue& operator=(const LockFreeQueue&) = delete;

  EnqueueResult enqueue(T item) {
    if (!reserve_slot()) return EnqueueResult::Backpressure;
    link(std::move(item));
    return EnqueueResult::Accepted;
  }

  /// Enqueue that ignores capacity. Used to hand back records of an aborted
  /// micro-batch, which were already admitted once.
  void requeue(T item) {
    count_.fetch_add(1, std::memory_order_acq_rel);
    link(std::move(item));
  }

  std::optional<T> dequeue() {
    for (;;) {
      auto head = head_.load();
      auto tail = tail_.load();
      auto next = head.ptr->next.load();
      if (head != head_.load()) continue;
      if (head.ptr == tail.ptr) {
        if (next.ptr == nullptr) return std::nullopt;
        tail_.compare_and_swap(tail, next.ptr);
        continue;
      }
      // Read the payload pointer before the swap; it is only used if the swap
      // proves nobody else took this node in the meantime. The node is not
      // written afterwards: once it is the dummy another consumer may already
      // have recycled it.
      T* payload = next.ptr->payload.load(std::memory_order_acquire);
      if (head_.compare_and_swap(head, next.ptr)) {
        release_node(head.ptr);
        count_.fetch_sub(1, std::memory_order_acq_rel);
        std::unique_ptr<T> owned(payload);
        return std::optional<T>(std::move(*owned));
      }
    }
  }

  std::vector<T> drain_up_to(std::size_t max) {
    std::vector<T> out;
    if (max == 0) return out;
    out.reserve(std::min<std::size_t>(max, 1024));
    while (out.size() < max) {
      auto item = dequeue();
      if (!item) break;
      out.push_back(std::move(*item));
    }
    return out;
  }

  /// Exact when quiescent; otherwise off by at most the operations in flight.
  std::size_t approx_len() const noexcept {
    auto c = count_.load(std::memory_order_acquire);
    return c < 0 ? 0 : static_cast<std::size_t>(c);
  }

  bool empty() const noexcept { return approx_len() == 0; }

  std::optional<std::size_t> capacity() const noexcept { return capacity_; }

 private:
  struct Node {
    AtomicVersionedRef<Node> next;
    std::atomic<T*> payload{nullptr};
    std::atomic<Node*> free_next{nullptr};
    Node* all_next = nullptr;
  };

  friend struct LockFreeQueueTestAccess<T>;

  bool reserve_slot() {
    if (!capacity_) {
      count_.fetch_add(1, std::memory_order_acq_rel);
      return true;
    }
    const auto cap = static_cast<std::int64_t>(*capacity_);
    auto cur = count_.load(std::memory_order_acquire);
    do {
      if (cur >= cap) return false;
    } while (!count_.compare_exchange_weak(cur, cur + 1, std::memory_order_acq_rel));
    return true;
  }

  void link(T item) {
    Node* node = acquire_node();
    node->payload.store(new T(std::move(item)), std::memory_order_release);
    node->next.reset(nullptr);
    VersionedRef<Node> tail;
    for (;;) {
      tail = tail_.load();
      auto next = tail.ptr->next.load();
      if (tail != tail_.load()) continue;
      if (next.ptr == nullptr) {
        if (tail.ptr->next.compare_and_swap(next, node)) break;
      } else {
        tail_.compare_and_swap(tail, next.ptr);
      }
    }
    tail_.compare_and_swap(tail, node);
  }

  Node* allocate_node() {
    auto* node = new Node();
    Node* head = all_nodes_.load(std::memory_order_relaxed);
    do {
      node->all_next = head;
    } while (!all_nodes_.compare_exchange_weak(head, node, std::memory_order_acq_rel));
    return node;
  }

  // Treiber stack over the reclaimed nodes, guarded by its own counter.
  Node* acquire_node() {
    for (;;) {
      auto top = free_top_.load();
      if (top.ptr == nullptr) return allocate_node();
      Node* below = top.ptr->free_next.load(std::memory_order_acquire);
      if (free_top_.compare_and_swap(top, below)) return top.ptr;
    }
  }

  void release_node(Node* node) {
    for (;;) {
      auto top = free_top_.load();
      node->free_next.store(top.ptr, std::memory_order_release);
      if (free_top_.compare_and_swap(top, node)) return;
    }
  }

  alignas(64) AtomicVersionedRef<Node> head_;
  alignas(64) AtomicVersionedRef<Node> tail_;
  alignas(64) AtomicVersionedRef<Node> free_top_;
  alignas(64) std::atomic<std::int64_t> count_{0};
  std::atomic<Node*> all_nodes_{nullptr};
  std::optional<std::size_t> capacity_;
};

}  // namespace gateflow
