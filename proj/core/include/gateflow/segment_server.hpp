#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gateflow/segment_proto.hpp"

namespace gateflow {

/// Test hook: misbehave on purpose.
struct FaultPlan {
  /// Close the connection once a transaction has received this many rows.
  /// Fires once per segment.
  std::optional<std::uint64_t> drop_after_rows;
};

/// Hosts any number of mock segments, one TCP listener each, on a private
/// io_context. Port 0 in a spec picks a free port; endpoints() reports the
/// bound ones.
class SegmentDaemon {
 public:
  explicit SegmentDaemon(std::vector<SegmentSpec> specs, std::size_t threads = 1);
  ~SegmentDaemon();

  SegmentDaemon(const SegmentDaemon&) = delete;
  SegmentDaemon& operator=(const SegmentDaemon&) = delete;

  /// Binds every listener and starts serving. Throws BindError naming the
  /// address that could not be bound; nothing is left listening then.
  void start();
  /// Closes listeners and connections and joins the threads. Idempotent.
  void stop();

  std::size_t size() const;
  std::vector<SegmentEndpoint> endpoints() const;
  std::vector<SegmentSpec> specs() const;
  SegmentStore& store(std::size_t index);
  const SegmentStore& store(std::size_t index) const;

  void set_fault(std::size_t index, FaultPlan plan);
  /// Writes each segment's commits to <dir>/<segment-id>.dump.
  void enable_dumps(const std::string& dir);

  std::uint64_t connections_accepted() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gateflow
