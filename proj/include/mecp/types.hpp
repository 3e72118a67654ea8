#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mecp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr const char* kVersion = "0.1.0";

/// Base class for every recoverable numerical or input failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state left the admissible box of the problem (V <= 0, r ~ 0, non-finite entries).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The stationary control does not exist or the Legendre condition fails at the query point.
class SingularControlError : public Error {
 public:
  using Error::Error;
};

class PropagationError : public Error {
 public:
  PropagationError(const std::string& what, double last_time)
      : Error(what + " (last good time " + std::to_string(last_time) + ")"), last_time_(last_time) {}
  double last_time() const { return last_time_; }

 private:
  double last_time_;
};

/// det(dX/dq) stays numerically zero past the exclusion window.
class DegenerateFamilyError : public Error {
 public:
  using Error::Error;
};

/// Full-rank terminal gradient or a similar structural assumption is violated.
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

/// Programming error: an operation was called outside its contract.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mecp
