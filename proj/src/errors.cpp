#include "cni/errors.hpp"

namespace cni {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::WriteError: return "WriteError";
    case ErrorCode::ReadError: return "ReadError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::InsufficientExamples: return "InsufficientExamples";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::ZeroNormPooled: return "ZeroNormPooled";
    case ErrorCode::BadTeacherDistribution: return "BadTeacherDistribution";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

ErrorFamily family(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
      return ErrorFamily::Config;
    case ErrorCode::ZeroNormRow:
    case ErrorCode::ZeroNormPooled:
    case ErrorCode::BadTeacherDistribution:
    case ErrorCode::NonFiniteLoss:
      return ErrorFamily::Numerical;
    default:
      return ErrorFamily::Data;
  }
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

InsufficientExamples::InsufficientExamples(std::size_t class_index, std::size_t have, std::size_t need)
    : Error(ErrorCode::InsufficientExamples,
            "class " + std::to_string(class_index) + " has " + std::to_string(have) +
                " examples, need " + std::to_string(need)),
      class_index(class_index),
      have(have),
      need(need) {}

ZeroNormRow::ZeroNormRow(std::size_t row)
    : Error(ErrorCode::ZeroNormRow, "row " + std::to_string(row) + " has zero norm"), row(row) {}

}  // namespace cni
