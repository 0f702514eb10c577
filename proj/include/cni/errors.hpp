#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cni {

enum class ErrorCode {
  // I/O and format
  WriteError,
  ReadError,
  BadMagic,
  BadVersion,
  UnsupportedDtype,
  LengthMismatch,
  NonFiniteValue,
  ParseError,
  // data validation
  ShapeMismatch,
  LabelOutOfRange,
  InsufficientExamples,
  // numerical
  ZeroNormRow,
  ZeroNormPooled,
  BadTeacherDistribution,
  NonFiniteLoss,
  // configuration
  ConfigError,
};

/// Process exit code families used by the CLI.
enum class ErrorFamily { Config = 2, Data = 3, Numerical = 4 };

const char* to_string(ErrorCode code);
ErrorFamily family(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }
  /// what() without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

class InsufficientExamples : public Error {
 public:
  InsufficientExamples(std::size_t class_index, std::size_t have, std::size_t need);
  std::size_t class_index;
  std::size_t have;
  std::size_t need;
};

class ZeroNormRow : public Error {
 public:
  explicit ZeroNormRow(std::size_t row);
  std::size_t row;
};

}  // namespace cni
