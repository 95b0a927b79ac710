#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace metarep {

// Bad shapes, out-of-range parameters, inputs violating a type invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A closed-form risk expression hit its pole (e.g. ||theta||^2 >= n2).
class DivergenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An iterative solver ran out of iterations. Carries the best iterate found.
class NonconvergenceError : public std::runtime_error {
 public:
  NonconvergenceError(const std::string& what, Eigen::VectorXd best, double residual)
      : std::runtime_error(what), best_(std::move(best)), residual_(residual) {}

  const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

inline std::string format_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

}  // namespace detail
}  // namespace metarep
