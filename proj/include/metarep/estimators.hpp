#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "metarep/datagen.hpp"
#include "metarep/linalg.hpp"
#include "metarep/parallel.hpp"

namespace metarep {

/// Pooled second moment (1/N) sum_ij x_ij x_ij^T over all feature vectors.
inline CovarianceModel sigma_f_hat(const MetaTrainSet& data) {
  detail::require(data.total_samples() >= 1, "sigma_f_hat: need N >= 1");
  const Index d = data.dim();
  Matrix acc = Matrix::Zero(d, d);
  for (const Matrix& x : data.features) acc.noalias() += x.transpose() * x;
  acc /= static_cast<double>(data.total_samples());
  return CovarianceModel::psd_part(0.5 * (acc + acc.transpose()));
}

struct MomEstimate {
  Matrix m_hat;         // d x d, symmetric, possibly indefinite
  Matrix half_first;    // d x T, column i is b_i1
  Matrix half_second;   // d x T, column i is b_i2
  Index samples_used = 0;  // per task, even
  std::vector<std::string> warnings;
};

/// Split-batch moment estimator. With b_i1, b_i2 the means of y x over the two
/// halves of task i, M_hat = (1/(2T)) sum_i (b_i1 b_i2^T + b_i2 b_i1^T), which
/// is unbiased for Sigma_F Sigma_T Sigma_F.
inline MomEstimate mom_m_hat(const MetaTrainSet& data) {
  const Index n1 = data.samples_per_task();
  detail::require(n1 >= 2, "mom_m_hat: need n1 >= 2 samples per task");
  const Index t = data.num_tasks();
  const Index d = data.dim();
  MomEstimate out;
  out.samples_used = n1 - (n1 % 2);
  if (n1 % 2 != 0) {
    out.warnings.push_back("mom_m_hat: n1 = " + std::to_string(n1) +
                           " is odd; the last sample of each task was dropped");
  }
  const Index half = out.samples_used / 2;
  out.half_first.resize(d, t);
  out.half_second.resize(d, t);
  detail::parallel_for(static_cast<std::size_t>(t), [&](std::size_t k) {
    const Index i = static_cast<Index>(k);
    const Matrix& x = data.features[k];
    const Vector y = data.labels.row(i).transpose();
    out.half_first.col(i) = x.topRows(half).transpose() * y.head(half) / static_cast<double>(half);
    out.half_second.col(i) = x.middleRows(half, half).transpose() * y.segment(half, half) / static_cast<double>(half);
  });
  const Matrix cross = out.half_first * out.half_second.transpose();
  out.m_hat = (cross + cross.transpose()) / (2.0 * static_cast<double>(t));
  return out;
}

/// Columns b_i = (1/n1) sum_j y_ij x_ij.
inline Matrix task_average_b_hat(const MetaTrainSet& data) {
  const Index t = data.num_tasks();
  const Index n1 = data.samples_per_task();
  Matrix b(data.dim(), t);
  detail::parallel_for(static_cast<std::size_t>(t), [&](std::size_t k) {
    const Index i = static_cast<Index>(k);
    b.col(i) = data.features[k].transpose() * data.labels.row(i).transpose() / static_cast<double>(n1);
  });
  return b;
}

/// Top-s left singular subspace of B_hat; needs at least s tasks.
inline Subspace task_average_subspace(const Matrix& b_hat, Index s) {
  detail::require(s >= 1, "task_average_subspace: need s >= 1");
  detail::require(b_hat.cols() >= s, "task_average_subspace: T = " + std::to_string(b_hat.cols()) +
                                         " tasks is fewer than the requested rank " + std::to_string(s));
  detail::require(b_hat.rows() >= s, "task_average_subspace: rank exceeds the dimension");
  return Subspace::top_left_singular(b_hat, s);
}

struct GHatEstimate {
  Matrix raw;       // (1/T) B B^T
  Matrix debiased;  // estimate of Sigma_F Sigma_T Sigma_F
  double label_second_moment = 0.0;
};

/// G_hat = (1/T) B_hat B_hat^T has mean
///   (1 + 1/n1) M + (1/n1) (tr(Sigma_T Sigma_F) + sigma^2) Sigma_F.
/// Since E[y^2] = tr(Sigma_T Sigma_F) + sigma^2, the bias is removed with the
/// sample mean of y^2 and Sigma_F_hat, which needs no knowledge of sigma.
inline GHatEstimate g_hat(const MetaTrainSet& data) {
  const Matrix b = task_average_b_hat(data);
  const double t = static_cast<double>(data.num_tasks());
  const double n1 = static_cast<double>(data.samples_per_task());
  GHatEstimate out;
  out.raw = b * b.transpose() / t;
  out.label_second_moment = data.labels.squaredNorm() / static_cast<double>(data.total_samples());
  const Matrix f_hat = sigma_f_hat(data).matrix();
  out.debiased = (out.raw - out.label_second_moment / n1 * f_hat) * (n1 / (n1 + 1.0));
  return out;
}

/// Sine of the largest principal angle between the top-r eigenspaces of an
/// estimate and of the target.
inline double dk_angle(const Matrix& estimate, const CovarianceModel& target, Index r) {
  const Index d = target.dim();
  detail::require(estimate.rows() == d && estimate.cols() == d, "dk_angle: shape mismatch");
  detail::require(r >= 1 && r < d, "dk_angle: need 1 <= r < d");
  const Vector& ev = target.eigvals();
  const double gap = ev(r - 1) - ev(r);
  detail::require(gap > 1e-12 * std::max(1.0, std::abs(ev(0))), "dk_angle: target has no eigengap at r");
  const Matrix sym = 0.5 * (estimate + estimate.transpose());
  return principal_angle_sin(Subspace::top_eigenspace(sym, r), Subspace(target.eigvecs().leftCols(r)));
}

/// Davis-Kahan right-hand side ||E - T||_op / (lambda_r - lambda_{r+1}).
inline double dk_bound(const Matrix& estimate, const CovarianceModel& target, Index r) {
  detail::require(r >= 1 && r < target.dim(), "dk_bound: need 1 <= r < d");
  const double gap = target.eigvals()(r - 1) - target.eigvals()(r);
  detail::require(gap > 0.0, "dk_bound: target has no eigengap at r");
  return op_norm(estimate - target.matrix()) / gap;
}

struct AlignmentScores {
  double canonical_feature = 0.0;
  double canonical_identity = 0.0;
  std::optional<double> trace_identity_residual;  // |<Sigma_F, Sigma_Ttil> - tr(M)|, relative
};

/// rho(Sigma_F, Sigma_Ttil) and tr(Sigma_Ttil) / (sqrt(d) ||Sigma_Ttil||_F).
/// With sigma_t supplied, also checks <Sigma_F, Sigma_Ttil> = tr(Sigma_F Sigma_T Sigma_F).
inline AlignmentScores alignment_scores(const CovarianceModel& sigma_f, const CovarianceModel& sigma_ttil,
                                        const CovarianceModel* sigma_t = nullptr) {
  const Index d = sigma_f.dim();
  detail::require(sigma_ttil.dim() == d, "alignment_scores: dimension mismatch");
  const double nf = sigma_f.matrix().norm();
  const double nt = sigma_ttil.matrix().norm();
  detail::require(nf > 0.0 && nt > 0.0, "alignment_scores: zero Frobenius norm");
  AlignmentScores out;
  const double inner = (sigma_f.matrix().array() * sigma_ttil.matrix().array()).sum();
  out.canonical_feature = inner / (nf * nt);
  out.canonical_identity = sigma_ttil.matrix().trace() / (std::sqrt(static_cast<double>(d)) * nt);
  if (sigma_t) {
    detail::require(sigma_t->dim() == d, "alignment_scores: Sigma_T dimension mismatch");
    const double tr_m = (sigma_f.matrix() * sigma_t->matrix() * sigma_f.matrix()).trace();
    out.trace_identity_residual = std::abs(inner - tr_m) / std::max(1.0, std::abs(tr_m));
  }
  return out;
}

/// Maps an estimate of M = Sigma_F Sigma_T Sigma_F to canonical coordinates,
/// Sigma_F^{-1/2} M Sigma_F^{-1/2}, keeping the PSD part.
inline CovarianceModel canonical_from_moment(const Matrix& m, const CovarianceModel& sigma_f) {
  const Matrix w = inv_sqrt_spd(sigma_f);
  const Matrix c = w * m * w;
  return CovarianceModel::psd_part(0.5 * (c + c.transpose()));
}

}  // namespace metarep
