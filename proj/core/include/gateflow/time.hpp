#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace gateflow {

/// Microsecond resolution is used everywhere: the simulator runs on integer
/// microseconds and the live gateway uses the same representation.
using Duration = std::chrono::microseconds;

/// Tag for instants on a gateflow clock (virtual or monotonic).
struct GateClockTag {
  using rep = Duration::rep;
  using period = Duration::period;
  using duration = Duration;
  using time_point = std::chrono::time_point<GateClockTag, Duration>;
  static constexpr bool is_steady = true;
};

using TimePoint = GateClockTag::time_point;

constexpr Duration ms(std::int64_t v) { return std::chrono::milliseconds(v); }
constexpr Duration us(std::int64_t v) { return Duration(v); }
constexpr TimePoint at_us(std::int64_t v) { return TimePoint(Duration(v)); }
constexpr std::int64_t count_us(TimePoint t) { return t.time_since_epoch().count(); }
constexpr std::int64_t count_us(Duration d) { return d.count(); }

/// Injected time source. The scheduler never reads the wall clock directly,
/// so the same policy code runs under virtual and real time.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimePoint now() const = 0;
};

/// CLOCK_MONOTONIC in microseconds. Shared by every process on one host,
/// which lets a separate segment daemon and a bench harness compare instants.
class MonotonicClock final : public Clock {
 public:
  TimePoint now() const override {
    return TimePoint(std::chrono::duration_cast<Duration>(
        std::chrono::steady_clock::now().time_since_epoch()));
  }
};

/// Hand-advanced clock for tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimePoint start = TimePoint{}) : now_us_(count_us(start)) {}
  TimePoint now() const override { return at_us(now_us_.load(std::memory_order_acquire)); }
  void set(TimePoint t) { now_us_.store(count_us(t), std::memory_order_release); }
  void advance(Duration d) { now_us_.fetch_add(d.count(), std::memory_order_acq_rel); }

 private:
  std::atomic<std::int64_t> now_us_;
};

/// Wall-clock microseconds since the Unix epoch, for log and report stamps.
inline std::int64_t epoch_micros() {
  return std::chrono::duration_cast<Duration>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace gateflow
