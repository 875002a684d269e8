#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gateflow/config.hpp"
#include "gateflow/ingest.hpp"
#include "gateflow/metrics.hpp"
#include "gateflow/scheduler.hpp"
#include "gateflow/time.hpp"

namespace gateflow {

/// One Send phase as observed by the gateway: from dispatch until EOF was
/// written on every connection. Instants are monotonic.
struct SendInterval {
  SlotId slot;
  TimePoint start;
  TimePoint end;
  std::uint64_t rows = 0;
};

struct GatewayOptions {
  /// Record every scheduler input and output for replay.
  bool journal = false;
  /// Transaction id prefix; random per process when unset.
  std::optional<std::string> txn_nonce;
  /// Serve HTTP. Off for in-process use through ingest().
  bool http = true;
};

/// The ingestion gateway: HTTP listeners feeding the pipeline, a control
/// loop running the scheduler, and the live slots it commands.
///
///   POST /ingest   body = CSV lines; 200 or 429 with the report as JSON
///   GET  /healthz  "ok"
///   GET  /metrics  counters as key=value lines
class Gateway {
 public:
  explicit Gateway(GatewayConfig config, GatewayOptions options = {});
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Probes every segment (DependencyError naming the first unreachable one),
  /// binds the HTTP listener (BindError naming the address) and starts the
  /// control loop.
  void start();
  /// Stops listening, retires all slots and joins threads. Records still in
  /// the pipeline are not committed. Idempotent.
  void stop();

  /// Bound HTTP port (useful with port 0).
  std::uint16_t port() const;
  std::string address() const;

  /// The POST /ingest path without HTTP; counters are updated the same way.
  IngestReport ingest(std::string_view body);

  /// Waits until every accepted record is committed or the timeout passes.
  bool wait_until_drained(Duration timeout);

  CounterSnapshot counters() const;
  std::size_t pipeline_length() const;
  std::vector<IngestError> errors() const;
  std::vector<SendInterval> send_audit() const;
  std::vector<TraceEvent> scheduler_trace() const;
  std::vector<JournalEntry> journal() const;
  SchedulerConfig scheduler_config() const;
  const GatewayConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gateflow
