#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "metarep/datagen.hpp"
#include "metarep/interpolator.hpp"
#include "metarep/linalg.hpp"
#include "metarep/parallel.hpp"

namespace metarep {

/// Closed forms for the overparameterized few-shot risk. All three share
///   f(theta) = [n2 * sum_i (1 - theta_i)^2 s_i + c(theta) * sigma_R^2] / (n2 - ||theta||^2)
/// and differ only in the noise coefficient c:
///   main      c = ||theta||^2 + 1
///   appendix  c = R * ||theta||^2
///   exact     c = n2   (excess ridgeless risk plus the sigma_R^2 floor)
enum class RiskVariant { main, appendix, exact };

inline std::string_view to_string(RiskVariant v) {
  switch (v) {
    case RiskVariant::main: return "main";
    case RiskVariant::appendix: return "appendix";
    case RiskVariant::exact: return "exact";
  }
  return "?";
}

inline RiskVariant parse_risk_variant(std::string_view s) {
  if (s == "main") return RiskVariant::main;
  if (s == "appendix") return RiskVariant::appendix;
  if (s == "exact") return RiskVariant::exact;
  throw ValidationError("unknown risk variant '" + std::string(s) + "' (expected main|appendix|exact)");
}

/// Noise weight K such that, on {sum theta = n2},
///   f(theta) = n2 (V + K sigma_R^2) / (n2 - ||theta||^2) - offset,  V = sum s_i (1-theta_i)^2.
inline double noise_weight(RiskVariant v, double n2, Index r) {
  switch (v) {
    case RiskVariant::main: return (n2 + 1.0) / n2;
    case RiskVariant::appendix: return static_cast<double>(r);
    case RiskVariant::exact: return 1.0;
  }
  return 1.0;
}

enum class RiskMethod { monte_carlo, analytic_main, analytic_appendix, analytic_exact, dc };

inline std::string_view to_string(RiskMethod m) {
  switch (m) {
    case RiskMethod::monte_carlo: return "monte_carlo";
    case RiskMethod::analytic_main: return "analytic_main";
    case RiskMethod::analytic_appendix: return "analytic_appendix";
    case RiskMethod::analytic_exact: return "analytic_exact";
    case RiskMethod::dc: return "dc";
  }
  return "?";
}

inline RiskMethod analytic_method(RiskVariant v) {
  switch (v) {
    case RiskVariant::main: return RiskMethod::analytic_main;
    case RiskVariant::appendix: return RiskMethod::analytic_appendix;
    case RiskVariant::exact: return RiskMethod::analytic_exact;
  }
  return RiskMethod::analytic_exact;
}

struct RiskEstimate {
  double value = 0.0;
  RiskMethod method = RiskMethod::monte_carlo;
  double std_error = 0.0;  // zero for closed forms
};

/// Per-direction shrinkage profile theta_i = xi L_i^2 / (1 + xi L_i^2), sum theta = n2.
struct ThetaProfile {
  Vector theta;
  double xi = 1.0;
  Index n2 = 0;

  Index size() const noexcept { return theta.size(); }
  double kappa() const noexcept { return static_cast<double>(theta.size()) / static_cast<double>(n2); }
  double sum_sq() const { return theta.squaredNorm(); }
};

/// Output of the canonical reduction onto the top-R eigenspace of the
/// canonical task covariance.
struct ReductionResult {
  Matrix basis_u1;       // d x R
  Matrix sigma_f_r;      // U1^T Sigma_F U1
  Matrix sigma_ttil_r;   // U1^T Sigma~_T U1 (diagonal)
  Vector ttil_diag;      // its diagonal, nonincreasing
  double sigma_r = 0.0;  // equivalent noise level

  Index rank() const noexcept { return basis_u1.cols(); }
};

/// Sigma_F^{1/2} Sigma_T Sigma_F^{1/2}, symmetrized.
inline CovarianceModel canonical_cov(const CovarianceModel& sigma_f, const CovarianceModel& sigma_t) {
  detail::require(sigma_f.dim() == sigma_t.dim(), "canonical_cov: dimensions differ");
  const Matrix half = sqrt_spd(sigma_f);
  Matrix c = half * sigma_t.matrix() * half;
  return CovarianceModel(0.5 * (c + c.transpose()));
}

inline ReductionResult compute_reduction(Index r, const CovarianceModel& sigma_f,
                                         const CovarianceModel& sigma_ttil, double sigma) {
  const Index d = sigma_ttil.dim();
  detail::require(sigma_f.dim() == d, "compute_reduction: dimensions differ");
  detail::require(r >= 1 && r <= d, "compute_reduction: need 1 <= R <= d");
  detail::require(sigma >= 0.0, "compute_reduction: sigma must be >= 0");
  ReductionResult out;
  out.basis_u1 = sigma_ttil.eigvecs().leftCols(r);
  out.sigma_ttil_r = out.basis_u1.transpose() * sigma_ttil.matrix() * out.basis_u1;
  out.sigma_ttil_r = 0.5 * (out.sigma_ttil_r + out.sigma_ttil_r.transpose());
  out.sigma_f_r = out.basis_u1.transpose() * sigma_f.matrix() * out.basis_u1;
  out.sigma_f_r = 0.5 * (out.sigma_f_r + out.sigma_f_r.transpose());
  out.ttil_diag = sigma_ttil.eigvals().head(r);
  // tr(S) - tr(S^R) is the tail eigenvalue sum; summing the tail directly makes
  // sigma_R == sigma exactly at R == d.
  const double tail = sigma_ttil.eigvals().tail(d - r).sum();
  out.sigma_r = std::sqrt(sigma * sigma + std::max(0.0, tail));
  return out;
}

/// The unique xi > 0 with sum_i (1 + (xi L_i^2)^{-1})^{-1} = n2, by bisection in log(xi).
inline double solve_xi(const Vector& lambda_sq, Index n2) {
  const Index r = lambda_sq.size();
  detail::require(n2 >= 1, "solve_xi: need n2 >= 1");
  detail::require(n2 < r, "solve_xi: need n2 < R (strict overparameterization), got n2=" + std::to_string(n2) +
                              " R=" + std::to_string(r));
  detail::require((lambda_sq.array() > 0.0).all() && lambda_sq.allFinite(),
                  "solve_xi: all squared weights must be positive");
  const double target = static_cast<double>(n2);
  auto total = [&](double log_xi) {
    const double xi = std::exp(log_xi);
    double s = 0.0;
    for (Index i = 0; i < r; ++i) s += xi * lambda_sq(i) / (1.0 + xi * lambda_sq(i));
    return s;
  };
  // Bracket: at xi = n2 / (R - n2) / max(L^2) every term is below the uniform
  // solution, and symmetrically for min(L^2).
  const double base = target / static_cast<double>(r - n2);
  double lo = std::log(base / lambda_sq.maxCoeff()) - 1.0;
  double hi = std::log(base / lambda_sq.minCoeff()) + 1.0;
  while (total(lo) > target) lo -= 1.0;
  while (total(hi) < target) hi += 1.0;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (total(mid) < target) lo = mid; else hi = mid;
  }
  const double log_xi = std::abs(total(lo) - target) <= std::abs(total(hi) - target) ? lo : hi;
  return std::exp(log_xi);
}

/// Shrinkage profile induced by diagonal weights. Zero weights give theta = 0.
inline ThetaProfile theta_from_weights(const Vector& lambda_sq, Index n2) {
  detail::require((lambda_sq.array() >= 0.0).all(), "theta_from_weights: negative squared weight");
  std::vector<Index> active;
  for (Index i = 0; i < lambda_sq.size(); ++i)
    if (lambda_sq(i) > 0.0) active.push_back(i);
  Vector sub(static_cast<Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) sub(static_cast<Index>(k)) = lambda_sq(active[k]);
  ThetaProfile p;
  p.n2 = n2;
  p.xi = solve_xi(sub, n2);
  p.theta = Vector::Zero(lambda_sq.size());
  for (Index i : active) p.theta(i) = p.xi * lambda_sq(i) / (1.0 + p.xi * lambda_sq(i));
  return p;
}

namespace detail {

inline double noise_coefficient(RiskVariant v, double n2, double s, Index r) {
  switch (v) {
    case RiskVariant::main: return s + 1.0;
    case RiskVariant::appendix: return static_cast<double>(r) * s;
    case RiskVariant::exact: return n2;
  }
  return n2;
}

}  // namespace detail

/// Closed-form risk for a shrinkage profile on the reduced problem.
inline RiskEstimate analytic_risk(const ThetaProfile& theta, const Vector& ttil_diag, double sigma_r,
                                  RiskVariant variant) {
  detail::require(theta.size() == ttil_diag.size(), "analytic_risk: theta and spectrum sizes differ");
  const double n2 = static_cast<double>(theta.n2);
  const double s = theta.sum_sq();
  if (!(n2 - s > 1e-12)) {
    throw DivergenceError("analytic_risk: ||theta||^2 = " + std::to_string(s) + " reaches n2 = " +
                          std::to_string(theta.n2) + " (risk pole)");
  }
  const double bias = ((Vector::Ones(theta.size()) - theta.theta).array().square() * ttil_diag.array()).sum();
  const double c = detail::noise_coefficient(variant, n2, s, theta.size());
  return {(n2 * bias + c * sigma_r * sigma_r) / (n2 - s), analytic_method(variant), 0.0};
}

/// Risk of ordinary least squares on the top-R canonical directions when
/// R < n2 - 1 (Gaussian design): sigma_R^2 (n2 - 1) / (n2 - R - 1).
inline RiskEstimate projected_least_squares_risk(Index r, Index n2, double sigma_r) {
  detail::require(r >= 1, "projected_least_squares_risk: need R >= 1");
  if (!(n2 - r - 1 > 0)) {
    throw DivergenceError("projected_least_squares_risk: need R < n2 - 1 (R = " + std::to_string(r) +
                          ", n2 = " + std::to_string(n2) + ")");
  }
  const double n = static_cast<double>(n2);
  return {sigma_r * sigma_r * (n - 1.0) / (n - static_cast<double>(r) - 1.0), RiskMethod::analytic_exact, 0.0};
}

/// Finite-dimensional distributional prediction of the weighted min-norm
/// estimator on the reduced, whitened problem:
///   beta_hat_i ~ shrink_i * beta_i + noise_scale_i * h_i,  h ~ N(0, I_R)
/// (noise_scale is reported in alpha coordinates, per unit weight).
struct DcPrediction {
  double xi = 0.0;
  double gamma = 0.0;
  Vector shrink;       // 1 / (1 + (xi L_i^2)^{-1}) = theta_i
  Vector noise_scale;  // sqrt(kappa gamma) L_i^{-1} / (1 + (xi L_i^2)^{-1})
  double risk = 0.0;   // sum beta_i^2 (1 - theta_i)^2 + kappa gamma ||theta||^2, excludes sigma_R^2
};

inline DcPrediction dc_predict(const Vector& lambda_sq, const Vector& beta_r, Index n2, double sigma_r) {
  detail::require(lambda_sq.size() == beta_r.size(), "dc_predict: weights and coefficients differ in size");
  const Index r = lambda_sq.size();
  DcPrediction out;
  out.xi = solve_xi(lambda_sq, n2);
  out.shrink.resize(r);
  for (Index i = 0; i < r; ++i) out.shrink(i) = 1.0 / (1.0 + 1.0 / (out.xi * lambda_sq(i)));
  const double kappa = static_cast<double>(r) / static_cast<double>(n2);
  const double bias = (beta_r.array().square() * (1.0 - out.shrink.array()).square()).sum();
  const double s = out.shrink.squaredNorm();
  const double denom = 1.0 - kappa / static_cast<double>(r) * s;
  if (!(denom > 0.0)) throw DivergenceError("dc_predict: gamma denominator is not positive");
  out.gamma = (sigma_r * sigma_r + bias / static_cast<double>(r)) / denom;
  out.noise_scale = std::sqrt(kappa * out.gamma) * lambda_sq.cwiseSqrt().cwiseInverse().cwiseProduct(out.shrink);
  out.risk = bias + kappa * out.gamma * s;
  return out;
}

/// Per-trial few-shot losses for several weightings evaluated on the same
/// draws (beta_star, X, noise are shared across weightings within a trial).
struct MonteCarloResult {
  std::vector<RiskEstimate> estimates;  // one per weighting
  Matrix losses;                        // trials x weightings
};

namespace detail {

inline RiskEstimate summarize_losses(const Eigen::Ref<const Vector>& losses) {
  const double n = static_cast<double>(losses.size());
  const double mean = losses.mean();
  const double var = (losses.array() - mean).square().sum() / (n - 1.0);
  return {mean, RiskMethod::monte_carlo, std::sqrt(var / n)};
}

inline double excess_loss(const Vector& beta_hat, const Vector& beta, const Matrix& sigma_f) {
  const Vector e = beta_hat - beta;
  return e.dot(sigma_f * e);
}

}  // namespace detail

inline MonteCarloResult monte_carlo_risk(const ProblemSpec& spec, const std::vector<EigenWeighting>& weightings,
                                         Index n2, Index trials, std::uint64_t seed) {
  detail::require(trials >= 2, "monte_carlo_risk: need trials >= 2");
  detail::require(!weightings.empty(), "monte_carlo_risk: no weightings given");
  for (const auto& w : weightings)
    detail::require(w.dim() == spec.dim(), "monte_carlo_risk: weighting dimension differs from problem");
  const RngStream master(seed);
  const double floor = spec.noise_sd * spec.noise_sd;
  MonteCarloResult out;
  out.losses.resize(trials, static_cast<Index>(weightings.size()));
  detail::parallel_for(static_cast<std::size_t>(trials), [&](std::size_t t) {
    const FewShotSet data = gen_few_shot(spec, n2, master.split("trial", t));
    for (std::size_t k = 0; k < weightings.size(); ++k) {
      const Vector beta_hat = fit_weighted_min_norm(data.features, data.labels, weightings[k]);
      out.losses(static_cast<Index>(t), static_cast<Index>(k)) =
          detail::excess_loss(beta_hat, data.beta_star, spec.feature_cov.matrix()) + floor;
    }
  });
  for (Index k = 0; k < out.losses.cols(); ++k) out.estimates.push_back(detail::summarize_losses(out.losses.col(k)));
  return out;
}

inline RiskEstimate monte_carlo_risk(const ProblemSpec& spec, const EigenWeighting& w, Index n2, Index trials,
                                     std::uint64_t seed) {
  return monte_carlo_risk(spec, std::vector<EigenWeighting>{w}, n2, trials, seed).estimates.front();
}

/// Monte Carlo risk of Sigma_F^{-1/2} Lambda on (Sigma_T, Sigma_F) and of
/// Lambda on the whitened problem (Sigma~_T, I). Both runs use the same seed,
/// so draws coincide wherever the two generators consume the same stream.
inline std::pair<RiskEstimate, RiskEstimate> whitening_invariance_check(const ProblemSpec& spec,
                                                                        const EigenWeighting& w, Index n2,
                                                                        Index trials, std::uint64_t seed) {
  detail::require(spec.feature_cov.min_eigval() > 0.0,
                  "whitening_invariance_check: feature covariance must be positive definite");
  const EigenWeighting original_w(inv_sqrt_spd(spec.feature_cov) * w.matrix());
  const ProblemSpec whitened(CovarianceModel::identity(spec.dim()), canonical_cov(spec.feature_cov, spec.task_cov),
                             spec.noise_sd);
  return {monte_carlo_risk(spec, original_w, n2, trials, seed), monte_carlo_risk(whitened, w, n2, trials, seed)};
}

}  // namespace metarep
