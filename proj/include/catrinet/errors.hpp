#pragma once

#include <stdexcept>
#include <string>

namespace catrinet {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension_error", m) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& m) : Error("contract_error", m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config_error", m) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& m) : Error("empty_input", m) {}
};

class NonFiniteError : public Error {
 public:
  explicit NonFiniteError(const std::string& m) : Error("non_finite", m) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& m) : Error("parse_error", m) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error("validation_error", m) {}
};

class AlignmentError : public Error {
 public:
  explicit AlignmentError(const std::string& m) : Error("alignment_error", m) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& m)
      : Error("insufficient_data", m) {}
};

class CompatibilityError : public Error {
 public:
  explicit CompatibilityError(const std::string& m)
      : Error("compatibility_error", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io_error", m) {}
};

}  // namespace catrinet
