#pragma once

#include <stdexcept>
#include <string>

namespace beamtrack {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  success = 0,
  validation = 1,
  numeric = 2,
  property_failure = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual ExitCode exit_code() const noexcept = 0;
};

// Bad input: malformed scenario, violated precondition, out-of-domain argument.
class ValidationError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::validation; }
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Time lookup outside the schedule horizon.
class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Loss of positive definiteness, singular solves and similar fatal numerics.
class NumericError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::numeric; }
};

// A flow or jump image left the sigma grid of the bound solver.
class GridRangeError : public NumericError {
 public:
  GridRangeError(const std::string& what, double offending_sigma)
      : NumericError(what), sigma_(offending_sigma) {}
  [[nodiscard]] double sigma() const noexcept { return sigma_; }

 private:
  double sigma_;
};

// The bound recursion's survival factor would turn negative.
class StepSizeError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace beamtrack
