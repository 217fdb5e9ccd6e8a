#pragma once

#include <stdexcept>
#include <string>

namespace ppgnn {

// Bad input: out-of-range indices, shape mismatches, violated preconditions.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// An iterative method ran out of budget.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// A hypothesis of an approximation-theory construction does not hold for the
// given problem (distinct spectrum, support sizes, disjointness, degree order).
class AssumptionViolation : public ValidationError {
 public:
  AssumptionViolation(std::string assumption, const std::string& detail)
      : ValidationError("assumption violated [" + assumption + "]: " + detail),
        assumption_(std::move(assumption)) {}

  const std::string& assumption() const noexcept { return assumption_; }

 private:
  std::string assumption_;
};

// NaN/Inf encountered during optimization.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ppgnn
