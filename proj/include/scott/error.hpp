#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scott {

/// Base of every error raised by the library. Each subclass maps onto one
/// failure category so the command-line front end can pick an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad layer sizes, out-of-range hyperparameters,
/// unknown or mistyped config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (shape mismatch, empty batch,
/// tape replayed against different parameters).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence, or a numerically invalid coefficient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of the operation (time before
/// the boundary, off-grid lookup, reversed step direction).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Missing or mismatched upstream artifact (e.g. a student distilled from a
/// different teacher).
class DependencyError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed persisted file. Carries the byte offset of the offending token.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace scott
