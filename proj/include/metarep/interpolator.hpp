#pragma once

#include <string>

#include "metarep/linalg.hpp"

namespace metarep {

/// A d x R eigen-weighting matrix. Maps R-dimensional coefficients alpha to
/// feature space, beta = Lambda * alpha.
class EigenWeighting {
 public:
  explicit EigenWeighting(Matrix lambda) : lambda_(std::move(lambda)) {
    detail::require(lambda_.cols() >= 1 && lambda_.rows() >= 1, "EigenWeighting: need R >= 1 columns");
    detail::require(lambda_.allFinite(), "EigenWeighting: non-finite entries");
    detail::require(lambda_.cwiseAbs().maxCoeff() > 0.0, "EigenWeighting: all-zero weighting");
  }

  static EigenWeighting identity(Index d) { return EigenWeighting(Matrix::Identity(d, d)); }

  /// Unweighted projection onto the first `r` columns of `basis`.
  static EigenWeighting projection(const Matrix& basis, Index r) {
    detail::require(r >= 1 && r <= basis.cols(), "EigenWeighting::projection: rank out of range");
    return EigenWeighting(basis.leftCols(r));
  }

  Index dim() const noexcept { return lambda_.rows(); }
  Index rank() const noexcept { return lambda_.cols(); }
  const Matrix& matrix() const noexcept { return lambda_; }

 private:
  Matrix lambda_;
};

/// beta_hat = Lambda (X Lambda)^+ y, the interpolator of minimum ||alpha||.
inline Vector fit_weighted_min_norm(const Matrix& x, const Vector& y, const EigenWeighting& w) {
  detail::require(x.cols() == w.dim(), "fit_weighted_min_norm: X has " + std::to_string(x.cols()) +
                                           " columns, weighting has " + std::to_string(w.dim()) + " rows");
  detail::require(x.rows() == y.size(), "fit_weighted_min_norm: X and y row counts differ");
  const Matrix xl = x * w.matrix();
  return w.matrix() * min_norm_solve(xl, y);
}

/// Generalized ridge with penalty t * beta^T (Lambda Lambda^T)^+ beta on range(Lambda).
/// Solved in alpha coordinates: alpha = (A^T A + t I)^{-1} A^T y with A = X Lambda.
inline Vector fit_weighted_ridge(const Matrix& x, const Vector& y, const EigenWeighting& w, double t) {
  detail::require(t > 0.0 && std::isfinite(t), "fit_weighted_ridge: penalty t must be > 0");
  detail::require(x.cols() == w.dim(), "fit_weighted_ridge: X and weighting shapes differ");
  detail::require(x.rows() == y.size(), "fit_weighted_ridge: X and y row counts differ");
  const Matrix a = x * w.matrix();
  // Push-through identity (A^T A + tI)^{-1} A^T = A^T (A A^T + tI)^{-1} when n < R.
  Vector alpha;
  if (a.rows() < a.cols()) {
    Matrix gram = a * a.transpose();
    gram.diagonal().array() += t;
    alpha = a.transpose() * gram.ldlt().solve(y);
  } else {
    Matrix gram = a.transpose() * a;
    gram.diagonal().array() += t;
    alpha = gram.ldlt().solve(a.transpose() * y);
  }
  return w.matrix() * alpha;
}

}  // namespace metarep
