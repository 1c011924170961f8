#ifndef DETSEL_ERROR_HPP_
#define DETSEL_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace detsel {

// Process exit codes used by the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitValidation = 2,
  kExitNumerical = 3,
};

// Bad command-line usage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or infeasible input: calibration specs, config files, malformed
// corpus rows, fold mismatches.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a calibration spec cannot be satisfied by any pattern mixture.
class CalibrationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Malformed text input; carries the 1-based line and column of the fault.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : ValidationError(what + " (line " + std::to_string(line) + ", column " +
                        std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Non-finite gradients, losses or parameters.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (e.g. step() after done).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace detsel

#endif  // DETSEL_ERROR_HPP_
