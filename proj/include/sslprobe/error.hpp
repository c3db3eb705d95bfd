#pragma once

#include <stdexcept>
#include <string>

namespace sslprobe {

// Broad failure classes. The CLI maps `validation`-type failures to exit code 1
// and `io`/`format` failures to exit code 2.
enum class ErrorKind {
  format,       // bad magic, version, dtype, malformed CSV/JSON
  corruption,   // truncated or oversized payload
  io,           // unreadable / unwritable path
  validation,   // value-level invariant broken (labels, class counts, ...)
  shape,        // dimension / row-count mismatch
  config,       // invalid hyperparameters
  numeric,      // NaN / Inf where finite values are required
  lookup,       // unknown named setting
  degenerate,   // input too small or constant for the statistic
  empty,        // nothing left to reduce over
  alignment,    // item names do not line up
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::format: return "format error";
    case ErrorKind::corruption: return "corruption error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::config: return "config error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::lookup: return "lookup error";
    case ErrorKind::degenerate: return "degenerate input";
    case ErrorKind::empty: return "empty input";
    case ErrorKind::alignment: return "alignment error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // True for failures caused by the bytes on disk rather than the values in them.
  bool is_io_like() const noexcept {
    return kind_ == ErrorKind::io || kind_ == ErrorKind::format || kind_ == ErrorKind::corruption;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace sslprobe
