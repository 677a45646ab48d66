#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedq {

enum class ErrorCode {
  RaggedRows,
  UnknownChar,
  GoalCountError,
  EmptyMap,
  InvalidGamma,
  InvalidMdp,
  IndexOutOfRange,
  ShapeMismatch,
  NotConverged,
  BudgetOutOfRange,
  ZeroVector,
  DimensionMismatch,
  EmptyAgentList,
  ParamOutOfRange,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Library-wide exception. Every failure path names its ErrorCode so callers
/// (and the CLI exit status) can tell config problems from numerical ones.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fedq
