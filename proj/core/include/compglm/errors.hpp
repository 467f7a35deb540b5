#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace compglm {

/// Base class for every error raised by the library. `kind()` is a short
/// machine-readable tag ("domain", "shape", ...) used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string_view kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error("domain", what) {}
};

/// Dimension mismatch between vectors / matrices.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

/// Input data or configuration violates a documented invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

/// Malformed text input; message carries the location.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("parse", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

/// Numerical failure inside an optimizer (line search underflow, ...).
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error("solver", what) {}
};

class SimulationError : public Error {
 public:
  explicit SimulationError(const std::string& what) : Error("simulation", what) {}
};

/// Experiment-level failure (too many failed replicates, selection failure).
class ExperimentError : public Error {
 public:
  explicit ExperimentError(const std::string& what) : Error("experiment", what) {}
};

}  // namespace compglm
