#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ilab {

enum class Errc {
  invalid_argument,
  parse_error,
  row_count_mismatch,
  non_finite,
  io_error,
  empty_pool,
  degenerate,
  divergence,
  empty_log,
  not_found,
  config,
  provider,
  unavailable,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::parse_error: return "parse_error";
    case Errc::row_count_mismatch: return "row_count_mismatch";
    case Errc::non_finite: return "non_finite";
    case Errc::io_error: return "io_error";
    case Errc::empty_pool: return "empty_pool";
    case Errc::degenerate: return "degenerate";
    case Errc::divergence: return "divergence";
    case Errc::empty_log: return "empty_log";
    case Errc::not_found: return "not_found";
    case Errc::config: return "config";
    case Errc::provider: return "provider";
    case Errc::unavailable: return "unavailable";
  }
  return "unknown";
}

// Every failure surfaced by the library. The code is what the HTTP layer
// reports as {code, message}.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ilab
