#pragma once

#include <stdexcept>
#include <string>

namespace softteleop {

enum class ErrorCode {
  invalid_argument = 1,
  parse_error,
  count_mismatch,
  no_estimate,
  bad_message,
  io_error,
};

/// Exception type used throughout the core; the C API maps `code()` onto
/// its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace softteleop
