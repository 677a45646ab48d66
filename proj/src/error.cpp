#include "fedq/error.hpp"

namespace fedq {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::UnknownChar: return "UnknownChar";
    case ErrorCode::GoalCountError: return "GoalCountError";
    case ErrorCode::EmptyMap: return "EmptyMap";
    case ErrorCode::InvalidGamma: return "InvalidGamma";
    case ErrorCode::InvalidMdp: return "InvalidMdp";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::BudgetOutOfRange: return "BudgetOutOfRange";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyAgentList: return "EmptyAgentList";
    case ErrorCode::ParamOutOfRange: return "ParamOutOfRange";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace fedq
