// gateflow: gateway, mock segments, load generator, simulator and bench.
//
// Exit codes: 0 ok, 1 usage or config error, 2 bind failure, 3 unreachable
// dependency (segment or gateway).

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "gateflow/bench.hpp"
#include "gateflow/config.hpp"
#include "gateflow/error.hpp"
#include "gateflow/gateway.hpp"
#include "gateflow/loadgen.hpp"
#include "gateflow/segment_server.hpp"
#include "gateflow/simulator.hpp"

namespace {

using namespace gateflow;

enum ExitCode : int { kOk = 0, kUsage = 1, kBind = 2, kDependency = 3 };

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

GatewayConfig config_from(const std::optional<std::string>& flag) {
  const auto path = resolve_config_path(flag);
  if (!path) throw ConfigError("no config: pass --config or set GATEFLOW_CONFIG");
  return load_config(*path);
}

// Blocks SIGINT/SIGTERM in every thread started afterwards, then waits for
// one of them on the main thread.
sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int wait_for_stop(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

struct ServeArgs {
  std::optional<std::string> config;
  std::optional<std::string> listen;
};

int cmd_serve(const ServeArgs& a) {
  auto config = config_from(a.config);
  if (a.listen) config.listen_addr = *a.listen;
  const auto signals = block_stop_signals();
  Gateway gateway(config);
  gateway.start();
  spdlog::info("gateway listening on {} with {} segments (config {})", gateway.address(), config.segments.size(),
               config_hash(config));
  const int sig = wait_for_stop(signals);
  spdlog::info("signal {}: stopping", sig);
  gateway.stop();
  std::cout << to_text(gateway.counters());
  return kOk;
}

struct SegmentdArgs {
  std::optional<std::string> config;
  std::size_t threads = 1;
  std::optional<std::string> dump_dir;
};

int cmd_segmentd(const SegmentdArgs& a) {
  const auto config = config_from(a.config);
  config.validate_segments();
  const auto signals = block_stop_signals();
  SegmentDaemon daemon(config.segments, a.threads);
  if (a.dump_dir) daemon.enable_dumps(*a.dump_dir);
  daemon.start();
  for (const auto& ep : daemon.endpoints()) spdlog::info("segment {} listening on {}", ep.id, ep.address());
  wait_for_stop(signals);
  daemon.stop();
  for (std::size_t k = 0; k < daemon.size(); ++k) {
    std::cout << daemon.endpoints()[k].id << " committed_rows=" << daemon.store(k).committed_rows()
              << " committed_txns=" << daemon.store(k).committed_txns() << "\n";
  }
  return kOk;
}

struct LoadgenArgs {
  LoadgenOptions options;
  double duration_s = 10.0;
  std::optional<std::uint64_t> rows;
};

int cmd_loadgen(LoadgenArgs a) {
  a.options.duration = Duration(static_cast<std::int64_t>(a.duration_s * 1e6));
  a.options.total_rows = a.rows;
  const auto summary = run_loadgen(a.options);
  std::cout << to_json(summary) << "\n";
  return kOk;
}

struct SimulateArgs {
  std::optional<std::string> config;
  std::optional<std::string> out;
  bool compare = false;
};

int cmd_simulate(const SimulateArgs& a) {
  const SimConfig config = a.config ? sim_config_from_json(read_file(*a.config)) : SimConfig{};
  config.validate();
  if (a.compare) {
    const auto c = compare_strategies(config);
    std::printf("naive_mean_latency_ms=%.3f\ngate_mean_latency_ms=%.3f\ndifference_ms=%.3f\n",
                c.naive_mean_latency.count() / 1000.0, c.gate_mean_latency.count() / 1000.0,
                (c.naive_mean_latency - c.gate_mean_latency).count() / 1000.0);
    return kOk;
  }
  const auto trace = run_sim(config);
  if (a.out) write_file(*a.out, trace_to_json(trace));
  const auto mean = steady_mean_latency(trace);
  std::size_t final_live = trace.samples.empty() ? 0 : trace.samples.back().live;
  std::printf("batches=%zu rows_arrived=%llu rows_committed=%llu activations=%llu aborts=%llu final_slots=%zu",
              trace.batches.size(), static_cast<unsigned long long>(trace.rows_arrived),
              static_cast<unsigned long long>(trace.rows_committed),
              static_cast<unsigned long long>(trace.activations), static_cast<unsigned long long>(trace.aborts),
              final_live);
  if (mean) std::printf(" steady_mean_latency_ms=%.3f", mean->count() / 1000.0);
  std::printf("\n");
  return kOk;
}

struct GanttArgs {
  std::string trace;
  std::optional<double> resolution_ms;
};

int cmd_gantt(const GanttArgs& a) {
  const auto trace = trace_from_json(read_file(a.trace));
  std::optional<Duration> res;
  if (a.resolution_ms) {
    if (*a.resolution_ms <= 0) throw ConfigError("--resolution-ms must be > 0");
    res = Duration(static_cast<std::int64_t>(*a.resolution_ms * 1000.0));
  }
  std::cout << render_gantt(trace, res);
  return kOk;
}

struct BenchArgs {
  std::string scenario;
  std::optional<std::string> out;
};

int cmd_bench(const BenchArgs& a) {
  const auto scenario = load_bench_scenario(a.scenario);
  const auto report = run_bench(scenario);
  const auto text = to_json(report);
  if (a.out) write_file(*a.out, text + "\n");
  std::cout << text << "\n";
  if (!report.complete) {
    spdlog::error("bench incomplete: {}", report.error.value_or("unknown error"));
    return kDependency;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gateflow: micro-batch ingestion gateway"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the ingestion gateway");
  serve_cmd->add_option("-c,--config", serve.config, "config file (default: $GATEFLOW_CONFIG)");
  serve_cmd->add_option("--listen", serve.listen, "override listen_addr (host:port)");

  SegmentdArgs segd;
  auto* segd_cmd = app.add_subcommand("segmentd", "run mock segments listed in the config");
  segd_cmd->add_option("-c,--config", segd.config, "config file (default: $GATEFLOW_CONFIG)");
  segd_cmd->add_option("--threads", segd.threads, "io threads")->check(CLI::PositiveNumber);
  segd_cmd->add_option("--dump-dir", segd.dump_dir, "append commits to <dir>/<segment>.dump");

  LoadgenArgs lg;
  auto* lg_cmd = app.add_subcommand("loadgen", "post rows to a gateway");
  lg_cmd->add_option("--target", lg.options.target, "gateway host:port");
  lg_cmd->add_option("--file", lg.options.file, "replay CSV lines from this file");
  lg_cmd->add_option("--rate", lg.options.rate, "rows per second, 0 = unpaced");
  lg_cmd->add_option("--duration", lg.duration_s, "seconds of synthetic load");
  lg_cmd->add_option("--rows", lg.rows, "total rows (overrides --duration)");
  lg_cmd->add_option("--batch", lg.options.batch_rows, "rows per request")->check(CLI::PositiveNumber);
  lg_cmd->add_option("--connections", lg.options.connections, "parallel clients")->check(CLI::PositiveNumber);
  lg_cmd->add_option("--devices", lg.options.devices, "synthetic device count")->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run the discrete-event simulator");
  sim_cmd->add_option("-c,--config", sim.config, "simulation config (JSON); defaults if omitted");
  sim_cmd->add_option("--out", sim.out, "write the trace as JSON");
  sim_cmd->add_flag("--compare", sim.compare, "compare naive and gate latency instead");

  GanttArgs gantt;
  auto* gantt_cmd = app.add_subcommand("gantt", "render a simulator trace as a text Gantt chart");
  gantt_cmd->add_option("--trace", gantt.trace, "trace JSON from simulate --out")->required();
  gantt_cmd->add_option("--resolution-ms", gantt.resolution_ms, "milliseconds per column");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "measure ingestion speed and scalability");
  bench_cmd->add_option("--scenario", bench.scenario, "scenario JSON")->required();
  bench_cmd->add_option("--out", bench.out, "also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*serve_cmd) return cmd_serve(serve);
    if (*segd_cmd) return cmd_segmentd(segd);
    if (*lg_cmd) return cmd_loadgen(lg);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*gantt_cmd) return cmd_gantt(gantt);
    if (*bench_cmd) return cmd_bench(bench);
  } catch (const BindError& e) {
    std::cerr << "gateflow: " << e.what() << "\n";
    return kBind;
  } catch (const DependencyError& e) {
    std::cerr << "gateflow: " << e.what() << "\n";
    return kDependency;
  } catch (const std::exception& e) {
    std::cerr << "gateflow: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
