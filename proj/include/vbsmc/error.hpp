#ifndef VBSMC_ERROR_HPP
#define VBSMC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace vbsmc {

// Exception hierarchy. The CLI maps each family onto a process exit code.

/// Invalid model or run configuration (bad field, violated invariant).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or out-of-support input data (CSV parse errors, negative observations).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: factorization breakdown, weight underflow, non-finite samples.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cholesky breakdown; `pivot()` is the zero-based row where it happened.
class FactorizationError : public NumericError {
 public:
  FactorizationError(const std::string& what, std::size_t pivot)
      : NumericError(what + " (pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Every particle likelihood underflowed at `step()` (one-based time index).
class WeightUnderflowError : public NumericError {
 public:
  explicit WeightUnderflowError(std::size_t step)
      : NumericError("all particle weights vanished at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace vbsmc

#endif
