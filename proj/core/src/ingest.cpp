#include "gateflow/ingest.hpp"

#include <charconv>
#include <cmath>

#include "json.hpp"

#include "gateflow/time.hpp"

namespace gateflow {

std::string_view to_string(IngestErrorReason reason) {
  switch (reason) {
    case IngestErrorReason::Arity:
      return "arity";
    case IngestErrorReason::Type:
      return "type";
    case IngestErrorReason::EmptyDevice:
      return "empty-device";
    case IngestErrorReason::BadTimestamp:
      return "bad-timestamp";
  }
  return "arity";
}

namespace {

IngestError make_error(std::string_view line, IngestErrorReason reason, std::string detail) {
  IngestError e;
  e.raw_line = std::string(line.substr(0, IngestError::kMaxRawLine));
  e.reason = reason;
  e.detail = std::move(detail);
  return e;
}

bool valid_device(std::string_view id) {
  if (id.empty()) return false;
  for (unsigned char c : id) {
    if (c <= 0x20 || c == 0x7f) return false;
  }
  // A data row must never read as a control frame on the segment link.
  return !(id.starts_with("BEGIN") || id.starts_with("EOF"));
}

template <class Number>
bool parse_whole(std::string_view text, Number& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') return false;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::variant<Record, IngestError> parse_record(std::string_view line, const Schema& schema) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

  std::vector<std::string_view> fields;
  fields.reserve(schema.size() + 2);
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }

  if (!valid_device(fields[0])) {
    return make_error(line, IngestErrorReason::EmptyDevice,
                      fields[0].empty() ? "device id is empty" : "device id contains a forbidden byte or keyword");
  }
  if (fields.size() < 2) {
    return make_error(line, IngestErrorReason::Arity, "expected " + std::to_string(schema.size() + 2) + " fields, got 1");
  }
  Record r;
  if (!parse_whole(fields[1], r.timestamp_us) || r.timestamp_us < 0) {
    return make_error(line, IngestErrorReason::BadTimestamp, "timestamp must be a non-negative integer (epoch microseconds)");
  }
  if (fields.size() != schema.size() + 2) {
    return make_error(line, IngestErrorReason::Arity,
                      "expected " + std::to_string(schema.size() + 2) + " fields, got " + std::to_string(fields.size()));
  }
  r.device_id = std::string(fields[0]);
  r.values.reserve(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto text = fields[i + 2];
    switch (schema[i].type) {
      case ColumnType::Float: {
        double v = 0;
        if (!parse_whole(text, v) || !std::isfinite(v)) {
          return make_error(line, IngestErrorReason::Type, "column '" + schema[i].name + "' is not a finite float");
        }
        r.values.emplace_back(v);
        break;
      }
      case ColumnType::Int: {
        std::int64_t v = 0;
        if (!parse_whole(text, v)) {
          return make_error(line, IngestErrorReason::Type, "column '" + schema[i].name + "' is not an integer");
        }
        r.values.emplace_back(v);
        break;
      }
      case ColumnType::String:
        r.values.emplace_back(std::string(text));
        break;
    }
  }
  return r;
}

void ErrorLog::append(IngestError error) {
  total_.fetch_add(1, std::memory_order_relaxed);
  std::lock_guard lock(mu_);
  if (max_entries_ == 0) return;
  if (entries_.size() == max_entries_) entries_.pop_front();
  entries_.push_back(std::move(error));
}

std::vector<IngestError> ErrorLog::snapshot() const {
  std::lock_guard lock(mu_);
  return {entries_.begin(), entries_.end()};
}

std::string to_json(const IngestReport& report) {
  nlohmann::json j;
  j["accepted"] = report.accepted;
  j["rejected"] = report.rejected;
  j["backpressured"] = report.backpressured;
  j["retry_from_line"] = report.retry_from_line ? nlohmann::json(*report.retry_from_line) : nlohmann::json(nullptr);
  return j.dump();
}

Ingestor::Ingestor(Schema schema, LockFreeQueue<Record>& pipeline, ErrorLog& errors)
    : schema_(std::move(schema)), pipeline_(pipeline), errors_(errors) {}

std::uint64_t Ingestor::next_seq() const {
  std::lock_guard lock(seq_mu_);
  return next_;
}

IngestReport Ingestor::handle_post(std::string_view body) {
  IngestReport report;
  std::vector<std::pair<std::size_t, std::string_view>> lines;

  std::size_t line_number = 0;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    auto line = body.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    lines.emplace_back(line_number, line);
  }

  // Parse everything first, but only commit errors to the log for lines in
  // front of the backpressure point: lines behind it will be posted again.
  std::vector<std::variant<Record, IngestError>> outcomes;
  outcomes.reserve(lines.size());
  for (const auto& [n, line] : lines) outcomes.push_back(parse_record(line, schema_));

  std::size_t stop = lines.size();
  {
    std::lock_guard lock(seq_mu_);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto* rec = std::get_if<Record>(&outcomes[i]);
      if (rec == nullptr) continue;
      rec->seq = next_;
      if (pipeline_.enqueue(std::move(*rec)) == EnqueueResult::Backpressure) {
        stop = i;
        break;
      }
      ++next_;
      ++report.accepted;
    }
  }

  const auto now = epoch_micros();
  for (std::size_t i = 0; i < stop; ++i) {
    if (auto* err = std::get_if<IngestError>(&outcomes[i])) {
      err->line_number = lines[i].first;
      err->at_us = now;
      errors_.append(std::move(*err));
      ++report.rejected;
    }
  }
  if (stop < lines.size()) {
    report.backpressured = lines.size() - stop;
    report.retry_from_line = lines[stop].first;
  }
  return report;
}

}  // namespace gateflow
