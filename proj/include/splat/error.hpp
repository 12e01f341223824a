#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace splat {

// Coarse failure classes. The CLI prints the class name so scripts can
// dispatch on it without parsing messages.
enum class ErrorKind {
  invalid_input,
  dimension_mismatch,
  decode_error,
  io_error,
  config_error,
  config_mismatch,
  missing_data,
};

constexpr std::string_view error_kind_name(ErrorKind k) {
  switch (k) {
  case ErrorKind::invalid_input: return "invalid_input";
  case ErrorKind::dimension_mismatch: return "dimension_mismatch";
  case ErrorKind::decode_error: return "decode_error";
  case ErrorKind::io_error: return "io_error";
  case ErrorKind::config_error: return "config_error";
  case ErrorKind::config_mismatch: return "config_mismatch";
  case ErrorKind::missing_data: return "missing_data";
  }
  return "unknown";
}

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond)
    throw Error(kind, what);
}

} // namespace splat
