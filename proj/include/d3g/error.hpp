#pragma once

#include <stdexcept>
#include <string>

namespace d3g {

enum class ErrorKind {
  dimension,
  zero_norm,
  index,
  format,
  truncated,
  missing_file,
  io,
  config,
  numeric,
  empty_input,
};

const char* to_string(ErrorKind kind);

// All library failures are reported through this type; `kind()` lets
// callers (the CLI in particular) map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

} // namespace d3g
