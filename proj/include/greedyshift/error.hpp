#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace greedyshift {

/// Bad input: shapes, non-finite values, violated preconditions, parse errors.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical failure that is not the caller's fault in the usual sense.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The weighted Gram submatrix of a model is not positive definite at the
/// pivot tolerance.
class SingularModelError : public NumericalError {
 public:
  SingularModelError(std::vector<std::ptrdiff_t> model, const std::string& what)
      : NumericalError(what), model_(std::move(model)) {}

  const std::vector<std::ptrdiff_t>& model() const noexcept { return model_; }

 private:
  std::vector<std::ptrdiff_t> model_;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace detail
}  // namespace greedyshift
