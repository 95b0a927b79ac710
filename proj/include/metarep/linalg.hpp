#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metarep/error.hpp"
#include "metarep/rng.hpp"

namespace metarep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kEigClipTol = 1e-10;
inline constexpr double kPinvRelTol = 1e-12;

struct SymEigen {
  Vector values;   // nonincreasing
  Matrix vectors;  // orthonormal columns, vectors.col(i) pairs with values(i)
};

namespace detail {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool is_symmetric(const Matrix& m, double rel_tol = kSymmetryTol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, max_abs(m));
  return max_abs(m - m.transpose()) <= rel_tol * scale;
}

// Replaces the columns of `q` (an orthonormal basis of one eigenspace) by the
// basis obtained from Gram-Schmidt on the projections of e_0, e_1, ... onto
// span(q). The result does not depend on which basis the eigensolver returned.
inline void canonicalize_cluster(Eigen::Ref<Matrix> q) {
  const Index d = q.rows();
  const Index k = q.cols();
  Matrix out(d, k);
  Index found = 0;
  for (Index j = 0; j < d && found < k; ++j) {
    Vector v = q * q.row(j).transpose();
    for (int pass = 0; pass < 2; ++pass) {
      for (Index c = 0; c < found; ++c) v -= out.col(c).dot(v) * out.col(c);
    }
    const double nv = v.norm();
    if (nv > 1e-6) out.col(found++) = v / nv;
  }
  if (found == k) q = out;
}

inline void fix_sign(Eigen::Ref<Vector> v) {
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted nonincreasing.
///
/// Eigenvectors of repeated eigenvalues are rotated into a canonical basis
/// (Gram-Schmidt on projected coordinate axes, in index order), and every
/// eigenvector is signed so its largest-magnitude entry is positive. Ties are
/// therefore broken by original coordinate index, reproducibly.
inline SymEigen eig_sym(const Matrix& mat) {
  detail::require(mat.rows() == mat.cols(), "eig_sym: matrix must be square");
  detail::require(detail::is_symmetric(mat), "eig_sym: matrix is not symmetric within tolerance");
  const Index d = mat.rows();
  SymEigen out{Vector(d), Matrix(d, d)};
  if (d == 0) return out;

  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (mat + mat.transpose()));
  if (solver.info() != Eigen::Success) throw ValidationError("eig_sym: eigensolver failed");
  // Eigen returns ascending order.
  for (Index i = 0; i < d; ++i) {
    out.values(i) = solver.eigenvalues()(d - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(d - 1 - i);
  }

  const double tie_tol = 1e-10 * std::max(1.0, out.values.cwiseAbs().maxCoeff());
  Index start = 0;
  while (start < d) {
    Index end = start + 1;
    while (end < d && out.values(end - 1) - out.values(end) <= tie_tol) ++end;
    if (end - start > 1) {
      detail::canonicalize_cluster(out.vectors.middleCols(start, end - start));
    }
    start = end;
  }
  for (Index i = 0; i < d; ++i) {
    Vector v = out.vectors.col(i);
    detail::fix_sign(v);
    out.vectors.col(i) = v;
  }
  return out;
}

/// Largest singular value.
inline double op_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

/// Summary statistics of a PSD spectrum.
struct SpectrumSummary {
  double trace = 0.0;
  double op_norm = 0.0;
  double effective_rank = 0.0;  // trace / op_norm; 0 for the zero matrix
  Index approx_rank_s = 0;      // min s with s/d >= lambda_{s+1}
};

inline SpectrumSummary summarize_spectrum(const Vector& eigvals_desc) {
  SpectrumSummary s;
  const Index d = eigvals_desc.size();
  s.trace = eigvals_desc.sum();
  s.op_norm = d > 0 ? eigvals_desc.cwiseAbs().maxCoeff() : 0.0;
  s.effective_rank = s.op_norm > 0.0 ? s.trace / s.op_norm : 0.0;
  s.approx_rank_s = d;
  for (Index k = 1; k <= d; ++k) {
    const double next = k < d ? eigvals_desc(k) : 0.0;
    if (static_cast<double>(k) / static_cast<double>(d) >= next) {
      s.approx_rank_s = k;
      break;
    }
  }
  return s;
}

/// A d x d symmetric positive-semidefinite matrix with its eigendecomposition.
///
/// Eigenvalues in [-1e-10 * scale, 0) are clipped to zero; anything more
/// negative is rejected as indefinite.
class CovarianceModel {
 public:
  explicit CovarianceModel(const Matrix& m) {
    detail::require(m.rows() == m.cols() && m.rows() > 0,
                    "CovarianceModel: matrix must be square and nonempty");
    detail::require(m.allFinite(), "CovarianceModel: matrix has non-finite entries");
    detail::require(detail::is_symmetric(m), "CovarianceModel: matrix is not symmetric");
    matrix_ = 0.5 * (m + m.transpose());
    SymEigen e = eig_sym(matrix_);
    const double clip = kEigClipTol * std::max(1.0, e.values.cwiseAbs().maxCoeff());
    for (Index i = 0; i < e.values.size(); ++i) {
      if (e.values(i) < 0.0) {
        if (e.values(i) < -clip) {
          throw ValidationError("CovarianceModel: matrix is indefinite (eigenvalue " +
                                std::to_string(e.values(i)) + ")");
        }
        e.values(i) = 0.0;
      }
    }
    eigvals_ = std::move(e.values);
    eigvecs_ = std::move(e.vectors);
  }

  static CovarianceModel diagonal(const Vector& diag) { return CovarianceModel(Matrix(diag.asDiagonal())); }

  static CovarianceModel identity(Index d) { return CovarianceModel(Matrix::Identity(d, d)); }

  /// Nearest PSD matrix in Frobenius norm: negative eigenvalues set to zero.
  static CovarianceModel psd_part(const Matrix& sym) {
    SymEigen e = eig_sym(sym);
    const Vector clipped = e.values.cwiseMax(0.0);
    Matrix m = e.vectors * clipped.asDiagonal() * e.vectors.transpose();
    return CovarianceModel(0.5 * (m + m.transpose()));
  }

  Index dim() const noexcept { return matrix_.rows(); }
  const Matrix& matrix() const noexcept { return matrix_; }
  const Vector& eigvals() const noexcept { return eigvals_; }
  const Matrix& eigvecs() const noexcept { return eigvecs_; }

  SpectrumSummary summary() const { return summarize_spectrum(eigvals_); }

  double min_eigval() const { return eigvals_(eigvals_.size() - 1); }

 private:
  Matrix matrix_;
  Vector eigvals_;
  Matrix eigvecs_;
};

/// A linear subspace given by an orthonormal basis (columns).
class Subspace {
 public:
  explicit Subspace(Matrix basis) : basis_(std::move(basis)) {
    detail::require(basis_.cols() >= 1 && basis_.cols() <= basis_.rows(),
                    "Subspace: need 1 <= rank <= ambient dimension");
    const Matrix gram = basis_.transpose() * basis_;
    detail::require((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-8,
                    "Subspace: basis columns are not orthonormal");
  }

  /// Span of the top-r eigenvectors of a symmetric matrix.
  static Subspace top_eigenspace(const Matrix& sym, Index r) {
    detail::require(r >= 1 && r <= sym.rows(), "Subspace::top_eigenspace: rank out of range");
    return Subspace(eig_sym(sym).vectors.leftCols(r));
  }

  /// Span of the top-r left singular vectors of a general matrix.
  static Subspace top_left_singular(const Matrix& a, Index r) {
    detail::require(r >= 1 && r <= std::min(a.rows(), a.cols()),
                    "Subspace::top_left_singular: rank exceeds min(rows, cols)");
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
    return Subspace(svd.matrixU().leftCols(r));
  }

  Index ambient_dim() const noexcept { return basis_.rows(); }
  Index rank() const noexcept { return basis_.cols(); }
  const Matrix& basis() const noexcept { return basis_; }

 private:
  Matrix basis_;
};

/// Symmetric PSD square root U diag(sqrt(lambda)) U^T.
inline Matrix sqrt_spd(const CovarianceModel& cov) {
  const Matrix& u = cov.eigvecs();
  Matrix s = u * cov.eigvals().cwiseSqrt().asDiagonal() * u.transpose();
  return 0.5 * (s + s.transpose());
}

/// Inverse square root; requires a strictly positive spectrum.
inline Matrix inv_sqrt_spd(const CovarianceModel& cov) {
  detail::require(cov.min_eigval() > 0.0, "inv_sqrt_spd: covariance is singular");
  const Matrix& u = cov.eigvecs();
  Matrix s = u * cov.eigvals().cwiseSqrt().cwiseInverse().asDiagonal() * u.transpose();
  return 0.5 * (s + s.transpose());
}

/// Minimum-norm least-squares solution A^+ y.
///
/// Singular values below 1e-12 * sigma_max count as zero, so any rank works.
inline Vector min_norm_solve(const Matrix& a, const Vector& y) {
  detail::require(a.rows() == y.size(), "min_norm_solve: A has " + std::to_string(a.rows()) +
                                            " rows but y has length " + std::to_string(y.size()));
  if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) return Vector::Zero(a.cols());
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = kPinvRelTol * s(0);
  Vector coeff = svd.matrixU().transpose() * y;
  for (Index i = 0; i < s.size(); ++i) coeff(i) = s(i) > cutoff ? coeff(i) / s(i) : 0.0;
  return svd.matrixV() * coeff;
}

/// Sine of the largest principal angle, ||(I - V V^T) U||_op.
inline double principal_angle_sin(const Subspace& u, const Subspace& v) {
  detail::require(u.ambient_dim() == v.ambient_dim(), "principal_angle_sin: ambient dimensions differ");
  detail::require(u.rank() == v.rank(), "principal_angle_sin: subspace ranks differ");
  const Matrix resid = u.basis() - v.basis() * (v.basis().transpose() * u.basis());
  return std::clamp(op_norm(resid), 0.0, 1.0);
}

/// n i.i.d. rows from N(0, cov). Draws are consumed row by row.
inline Matrix sample_gaussian(const CovarianceModel& cov, Index count, RngStream& rng) {
  detail::require(count >= 0, "sample_gaussian: negative sample count");
  const Index d = cov.dim();
  Matrix z(count, d);
  for (Index i = 0; i < count; ++i)
    for (Index j = 0; j < d; ++j) z(i, j) = rng.normal();
  // x = U diag(sqrt(lambda)) z  =>  X = Z diag(sqrt(lambda)) U^T
  const Matrix factor = cov.eigvals().cwiseSqrt().asDiagonal() * cov.eigvecs().transpose();
  return z * factor;
}

}  // namespace metarep
