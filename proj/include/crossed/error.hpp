#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crossed {

enum class ErrorCode {
  NonFinite,
  WidthMismatch,
  MissingIntercept,
  EmptyDataset,
  IoError,
  MalformedHeader,
  ParseError,
  DuplicateCell,
  SingularMomentSystem,
  SingularDesign,
  SingularCovariance,
  TooLarge,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

// All library failures are reported through this exception. `line` is the
// 1-based input line for ingest errors and 0 when not applicable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::uint64_t line = 0)
      : std::runtime_error(what), code_(code), line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::uint64_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::uint64_t line_;
};

}  // namespace crossed
