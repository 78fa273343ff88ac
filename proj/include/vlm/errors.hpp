#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vlm {

// Exception hierarchy. The CLI maps each family onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or unknown key (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

// Non-finite values or a batch that cannot form a loss (exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

class DegenerateBatchError : public NumericError {
 public:
  using NumericError::NumericError;
};

// File system and format problems (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace vlm
