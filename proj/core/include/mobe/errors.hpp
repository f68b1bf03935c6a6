#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mobe {

/// Invalid argument or precondition violation (CLI exit code 1).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes do not agree.
class ShapeError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Input whose statistics make the requested operation meaningless
/// (constant weights, zero matrix).
class DegenerateInputError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Numerical failure: non-convergence, non-finite loss, divergence (exit code 3).
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Optimization blew up; carries the step at which it was detected.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : NumericError(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// File-level failure (exit code 2).
class IoError : public std::runtime_error {
 public:
  enum class Kind { kOpen, kBadMagic, kVersion, kTruncated, kDimension, kNonFinite, kWrite };

  IoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mobe
