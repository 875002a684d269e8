#include "gateflow/loadgen.hpp"

#include <atomic>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "gateflow/config.hpp"
#include "gateflow/error.hpp"

namespace gateflow {

namespace {

using Steady = std::chrono::steady_clock;

struct Totals {
  std::atomic<std::uint64_t> accepted{0};
  std::atomic<std::uint64_t> rejected{0};
  std::atomic<std::uint64_t> backpressured{0};
  std::atomic<std::uint64_t> dropped{0};
  std::atomic<std::uint64_t> requests{0};
  std::atomic<std::uint64_t> failed{0};
};

class RowSource {
 public:
  explicit RowSource(const LoadgenOptions& o) : o_(o) {
    if (o.file) {
      std::ifstream in(*o.file);
      if (!in) throw ConfigError("cannot read load file '" + *o.file + "'");
      for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines_.push_back(std::move(line));
      }
      total_ = lines_.size();
      if (o.total_rows) total_ = std::min<std::uint64_t>(total_, *o.total_rows);
    } else if (o.total_rows) {
      total_ = *o.total_rows;
    } else {
      total_ = o.rate * static_cast<std::uint64_t>(o.duration.count()) / 1'000'000;
    }
  }

  std::uint64_t total() const { return total_; }

  void append(std::string& out, std::uint64_t i) const {
    if (o_.file) {
      out += lines_[i];
    } else {
      out += synthetic_row(i, o_.devices, o_.base_timestamp_us);
    }
    out.push_back('\n');
  }

 private:
  const LoadgenOptions& o_;
  std::vector<std::string> lines_;
  std::uint64_t total_ = 0;
};

/// Posts rows [first, last) until all are accepted or rejected, retrying the
/// tail the gateway could not take.
void post_batch(httplib::Client& cli, const RowSource& rows, std::uint64_t first, std::uint64_t last,
                const LoadgenOptions& o, Totals& t) {
  auto last_progress = Steady::now();
  while (first < last) {
    std::string body;
    for (auto i = first; i < last; ++i) rows.append(body, i);
    auto res = cli.Post("/ingest", body, "text/csv");
    t.requests.fetch_add(1);
    const bool timed_out = Steady::now() - last_progress > o.give_up_after;
    if (!res || (res->status != 200 && res->status != 429)) {
      t.failed.fetch_add(1);
      if (timed_out) break;
      std::this_thread::sleep_for(o.retry_backoff);
      continue;
    }
    const auto report = nlohmann::json::parse(res->body, nullptr, false);
    if (report.is_discarded()) {
      t.failed.fetch_add(1);
      break;
    }
    const auto accepted = report.value("accepted", std::uint64_t{0});
    const auto rejected = report.value("rejected", std::uint64_t{0});
    t.accepted.fetch_add(accepted);
    t.rejected.fetch_add(rejected);
    if (res->status == 200) return;
    t.backpressured.fetch_add(report.value("backpressured", std::uint64_t{0}));
    if (accepted + rejected > 0) last_progress = Steady::now();
    first += accepted + rejected;
    if (Steady::now() - last_progress > o.give_up_after) break;
    std::this_thread::sleep_for(o.retry_backoff);
  }
  t.dropped.fetch_add(last - first);
}

}  // namespace

double LoadgenSummary::rows_per_sec() const {
  if (elapsed.count() <= 0) return 0.0;
  return static_cast<double>(accepted) * 1e6 / static_cast<double>(elapsed.count());
}

Schema synthetic_schema() { return {{"seq", ColumnType::Int}, {"value", ColumnType::Float}}; }

std::string synthetic_row(std::uint64_t seq, std::size_t devices, std::int64_t base_timestamp_us) {
  const auto dev = seq % std::max<std::size_t>(devices, 1);
  std::string out = "dev" + std::to_string(dev) + "," + std::to_string(base_timestamp_us + static_cast<std::int64_t>(seq)) +
                    "," + std::to_string(seq) + ",";
  out += std::to_string(seq % 1000) + ".5";
  return out;
}

LoadgenSummary run_loadgen(const LoadgenOptions& o) {
  if (o.batch_rows == 0) throw ConfigError("loadgen: batch size must be >= 1");
  if (o.connections == 0) throw ConfigError("loadgen: connections must be >= 1");
  const auto hp = parse_host_port(o.target);
  const RowSource rows(o);

  {
    httplib::Client probe(hp.host, hp.port);
    probe.set_connection_timeout(std::chrono::seconds(2));
    bool up = false;
    for (int i = 0; i < 3 && !up; ++i) {
      if (i > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      auto res = probe.Get("/healthz");
      up = res && res->status == 200;
    }
    if (!up) throw DependencyError("gateway at " + o.target + " unreachable");
  }

  Totals totals;
  const std::uint64_t total = rows.total();
  const std::uint64_t batches = (total + o.batch_rows - 1) / o.batch_rows;
  const auto start = Steady::now();
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < o.connections; ++w) {
    workers.emplace_back([&, w] {
      httplib::Client cli(hp.host, hp.port);
      cli.set_keep_alive(true);
      cli.set_tcp_nodelay(true);
      cli.set_read_timeout(std::chrono::seconds(30));
      for (std::uint64_t b = w; b < batches; b += o.connections) {
        const std::uint64_t first = b * o.batch_rows;
        const std::uint64_t last = std::min(total, first + o.batch_rows);
        if (o.rate > 0) {
          const auto due = start + std::chrono::microseconds(first * 1'000'000 / o.rate);
          std::this_thread::sleep_until(due);
        }
        post_batch(cli, rows, first, last, o, totals);
      }
    });
  }
  for (auto& t : workers) t.join();

  LoadgenSummary s;
  s.posted = total;
  s.accepted = totals.accepted;
  s.rejected = totals.rejected;
  s.backpressured = totals.backpressured;
  s.dropped = totals.dropped;
  s.requests = totals.requests;
  s.failed_requests = totals.failed;
  s.elapsed = std::chrono::duration_cast<Duration>(Steady::now() - start);
  return s;
}

std::string to_json(const LoadgenSummary& s) {
  nlohmann::json j{{"posted", s.posted},
                   {"accepted", s.accepted},
                   {"rejected", s.rejected},
                   {"backpressured", s.backpressured},
                   {"dropped", s.dropped},
                   {"requests", s.requests},
                   {"failed_requests", s.failed_requests},
                   {"elapsed_ms", static_cast<double>(s.elapsed.count()) / 1000.0},
                   {"rows_per_sec", s.rows_per_sec()}};
  return j.dump();
}

}  // namespace gateflow
