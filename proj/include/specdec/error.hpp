#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace specdec {

enum class Errc {
  EmptySupport,
  InvalidSupport,
  DimensionMismatch,
  InvalidArgument,
  InvalidContext,
  DrafterSupportViolation,
  NumericalError,
  DivisionByZero,
  InfiniteKL,
  ConfigError,
  IoError,
};

std::string_view to_string(Errc code) noexcept;

// Numeric failures (as opposed to bad input/config) map to a distinct CLI exit code.
bool is_numeric(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace specdec
