#pragma once

// Newline framing over an asio stream socket, shared by the segment daemon
// and the live slots.

#include <boost/asio.hpp>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>

#include "gateflow/time.hpp"

namespace gateflow::detail {

namespace asio = boost::asio;
using asio::awaitable;
using asio::use_awaitable;
using tcp = asio::ip::tcp;

class LineReader {
 public:
  explicit LineReader(std::size_t max_line = 1 << 20) : max_line_(max_line) {}

  /// Next line without its '\n'; empty optional on orderly EOF. The view is
  /// valid until the next call. Throws boost::system::system_error on I/O
  /// errors and std::length_error on an oversized line.
  awaitable<std::optional<std::string_view>> next(tcp::socket& socket) {
    for (;;) {
      if (auto line = take()) co_return line;
      if (buf_.size() - begin_ > max_line_) throw std::length_error("line exceeds limit");
      compact();
      const auto old = buf_.size();
      buf_.resize(old + kChunk);
      boost::system::error_code ec;
      const auto n = co_await socket.async_read_some(asio::buffer(buf_.data() + old, kChunk),
                                                     asio::redirect_error(use_awaitable, ec));
      buf_.resize(old + n);
      if (ec == asio::error::eof) co_return std::nullopt;
      if (ec) throw boost::system::system_error(ec);
    }
  }

  /// A complete line already buffered, if any.
  std::optional<std::string_view> take() {
    const auto nl = buf_.find('\n', scan_);
    if (nl == std::string::npos) {
      scan_ = buf_.size();
      return std::nullopt;
    }
    std::string_view line(buf_.data() + begin_, nl - begin_);
    begin_ = scan_ = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  }

 private:
  static constexpr std::size_t kChunk = 64 * 1024;

  void compact() {
    if (begin_ == 0) return;
    buf_.erase(0, begin_);
    scan_ -= begin_;
    begin_ = 0;
  }

  std::string buf_;
  std::size_t begin_ = 0;
  std::size_t scan_ = 0;
  std::size_t max_line_;
};

inline std::chrono::steady_clock::time_point to_steady(TimePoint t) {
  return std::chrono::steady_clock::time_point(
      std::chrono::duration_cast<std::chrono::steady_clock::duration>(t.time_since_epoch()));
}

/// Suspends until monotonic instant `t` (no-op if it already passed).
inline awaitable<void> sleep_until(TimePoint t) {
  asio::steady_timer timer(co_await asio::this_coro::executor);
  timer.expires_at(to_steady(t));
  co_await timer.async_wait(use_awaitable);
}

}  // namespace gateflow::detail
