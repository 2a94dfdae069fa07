#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace zo {

using Vector = std::vector<double>;

/// Bad input: zero dimension, malformed partition, unknown tag, stale cache.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite value showed up where a finite one was required.
class NumericFailure : public std::runtime_error {
 public:
  explicit NumericFailure(const std::string& what, Vector point = {})
      : std::runtime_error(what), point_(std::move(point)) {}

  /// The evaluation point that produced the failure (may be empty).
  const Vector& point() const noexcept { return point_; }

 private:
  Vector point_;
};

/// FZOO normalization failed because every perturbed loss was identical.
class DegenerateScale : public NumericFailure {
 public:
  using NumericFailure::NumericFailure;
};

/// A theorem bound was requested outside the parameter region where it holds.
class PreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace zo
