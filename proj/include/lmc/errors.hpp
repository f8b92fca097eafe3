#pragma once

#include <stdexcept>
#include <string>

namespace lmc {

/// Base class for every failure raised by the library. Each subclass maps to
/// one process exit code of the command-line driver.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

/// Invalid configuration, malformed input files, bad arguments.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

/// Shape mismatch between operands. Treated as a configuration problem.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what, 2) {}
};

/// NaN/Inf produced by a kernel.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what, 3) {}
};

/// Fixed-point iteration hit its iteration cap above tolerance.
class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what) : Error(what, 4) {}
};

/// A numerical oracle disagreed with the implementation beyond its threshold.
class OracleFailure : public Error {
 public:
  explicit OracleFailure(const std::string& what) : Error(what, 5) {}
};

}  // namespace lmc
