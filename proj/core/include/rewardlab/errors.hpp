#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rewardlab {

/// Base class for every error raised by the library. Each subclass maps to
/// one failure family so callers (notably the CLI) can pick an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data problems: malformed lines, out-of-range ratings, empty files,
/// unreadable artifacts.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class RangeError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDatasetError : public DataError {
 public:
  using DataError::DataError;
};

/// Checkpoint header missing, corrupt, or carrying an unknown format-version.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IndexError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Every candidate action is masked.
class ExhaustionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A loss or gradient became non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// An artifact is missing or was produced from different upstream inputs.
class StalenessError : public Error {
 public:
  using Error::Error;
};

}  // namespace rewardlab
