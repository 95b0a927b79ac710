#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "metarep/interpolator.hpp"
#include "metarep/linalg.hpp"
#include "metarep/risk.hpp"

namespace metarep {

inline constexpr double kThetaCeiling = 1.0 - 1e-12;

/// Box constraint theta_lower <= theta <= 1 - (d - n2) theta_lower / n2.
struct RobustBox {
  double theta_lower = 0.0;
  double theta_upper = kThetaCeiling;

  static RobustBox make(double theta_lower, Index d, Index n2, Index r) {
    detail::require(n2 >= 1 && r > n2 && d >= r, "RobustBox: need n2 < R <= d");
    const double uniform = static_cast<double>(n2) / static_cast<double>(r);
    detail::require(theta_lower > 0.0 && theta_lower <= uniform,
                    "RobustBox: theta_lower must lie in (0, n2/R]");
    RobustBox b;
    b.theta_lower = theta_lower;
    b.theta_upper = std::min(kThetaCeiling, 1.0 - static_cast<double>(d - n2) * theta_lower / static_cast<double>(n2));
    detail::require(b.theta_upper >= uniform, "RobustBox: infeasible, theta_upper = " +
                                                  std::to_string(b.theta_upper) + " < n2/R");
    return b;
  }
};

/// Risk objective over shrinkage profiles, restricted to
/// {sum theta = n2, lower <= theta <= upper}.
class ThetaObjective {
 public:
  ThetaObjective(Vector ttil_diag, Index n2, double sigma_r, RiskVariant variant,
                 std::optional<RobustBox> box = std::nullopt)
      : ttil_(std::move(ttil_diag)), n2_(n2), sigma_r_(sigma_r), variant_(variant) {
    const Index r = ttil_.size();
    detail::require(n2 >= 1 && n2 < r, "ThetaObjective: need 1 <= n2 < R");
    detail::require((ttil_.array() >= 0.0).all() && ttil_.allFinite(),
                    "ThetaObjective: reduced task spectrum must be finite and >= 0");
    detail::require(sigma_r >= 0.0, "ThetaObjective: sigma_R must be >= 0");
    if (box) {
      lower_ = box->theta_lower;
      upper_ = box->theta_upper;
    }
    const double uniform = static_cast<double>(n2) / static_cast<double>(r);
    detail::require(lower_ <= uniform && uniform <= upper_, "ThetaObjective: box excludes the uniform profile");
  }

  Index size() const noexcept { return ttil_.size(); }
  Index n2() const noexcept { return n2_; }
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }
  double sigma_r() const noexcept { return sigma_r_; }
  RiskVariant variant() const noexcept { return variant_; }
  const Vector& ttil() const noexcept { return ttil_; }
  double noise_weight() const { return metarep::noise_weight(variant_, static_cast<double>(n2_), size()); }

  /// +inf outside the pole-free region n2 - ||theta||^2 > 0.
  double value(const Vector& theta) const {
    const double n2 = static_cast<double>(n2_);
    const double s = theta.squaredNorm();
    const double denom = n2 - s;
    if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
    const double bias = ((1.0 - theta.array()).square() * ttil_.array()).sum();
    const double c = detail::noise_coefficient(variant_, n2, s, size());
    return (n2 * bias + c * sigma_r_ * sigma_r_) / denom;
  }

  Vector gradient(const Vector& theta) const {
    const double n2 = static_cast<double>(n2_);
    const double s = theta.squaredNorm();
    const double denom = n2 - s;
    const double bias = ((1.0 - theta.array()).square() * ttil_.array()).sum();
    const double c = detail::noise_coefficient(variant_, n2, s, size());
    double dc_ds = 0.0;
    if (variant_ == RiskVariant::main) dc_ds = 1.0;
    if (variant_ == RiskVariant::appendix) dc_ds = static_cast<double>(size());
    const double numer = n2 * bias + c * sigma_r_ * sigma_r_;
    const double s2 = sigma_r_ * sigma_r_;
    Vector g(size());
    for (Index i = 0; i < size(); ++i) {
      const double dnum = -2.0 * n2 * ttil_(i) * (1.0 - theta(i)) + dc_ds * s2 * 2.0 * theta(i);
      g(i) = dnum / denom + numer * 2.0 * theta(i) / (denom * denom);
    }
    return g;
  }

  /// Euclidean projection onto {sum = n2, lower <= theta <= upper}.
  Vector project(const Vector& v) const {
    const double target = static_cast<double>(n2_);
    auto clipped_sum = [&](double tau) { return (v.array() - tau).cwiseMax(lower_).cwiseMin(upper_).sum(); };
    double lo = v.minCoeff() - upper_ - 1.0;
    double hi = v.maxCoeff() - lower_ + 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (clipped_sum(mid) > target) lo = mid; else hi = mid;
    }
    const double tau = 0.5 * (lo + hi);
    Vector p = (v.array() - tau).cwiseMax(lower_).cwiseMin(upper_);
    // Spread the leftover rounding over strictly interior coordinates.
    Index free = 0;
    for (Index i = 0; i < p.size(); ++i)
      if (p(i) > lower_ && p(i) < upper_) ++free;
    if (free > 0) {
      const double shift = (target - p.sum()) / static_cast<double>(free);
      for (Index i = 0; i < p.size(); ++i)
        if (p(i) > lower_ && p(i) < upper_) p(i) = std::clamp(p(i) + shift, lower_, upper_);
    }
    return p;
  }

  /// Infinity norm of theta - P(theta - grad), zero exactly at KKT points.
  double projected_gradient_residual(const Vector& theta) const {
    return (theta - project(theta - gradient(theta))).cwiseAbs().maxCoeff();
  }

  /// Spread of df/dtheta_i over coordinates strictly inside the box, relative
  /// to max(|mean|, f). At a KKT point these all equal the multiplier of
  /// sum theta = n2, which can itself vanish.
  double multiplier_spread(const Vector& theta, double boundary_tol = 1e-9) const {
    const Vector g = gradient(theta);
    double gmin = std::numeric_limits<double>::infinity();
    double gmax = -gmin;
    double acc = 0.0;
    Index count = 0;
    for (Index i = 0; i < size(); ++i) {
      if (theta(i) <= lower_ + boundary_tol || theta(i) >= upper_ - boundary_tol) continue;
      gmin = std::min(gmin, g(i));
      gmax = std::max(gmax, g(i));
      acc += g(i);
      ++count;
    }
    if (count < 2) return 0.0;
    const double scale = std::max({std::abs(acc / static_cast<double>(count)), std::abs(value(theta)), 1e-300});
    return (gmax - gmin) / scale;
  }

 private:
  Vector ttil_;
  Index n2_;
  double sigma_r_;
  RiskVariant variant_;
  double lower_ = 0.0;
  double upper_ = kThetaCeiling;
};

struct ThetaSolution {
  ThetaProfile profile;  // xi pinned to 1
  double objective = 0.0;
  Index iterations = 0;
  double residual = 0.0;
};

struct PgdOptions {
  double tolerance = 1e-10;  // on the projected-gradient residual, relative to max(1, |grad|_inf)
  Index max_iterations = 200000;
};

/// Projected gradient with Barzilai-Borwein steps and backtracking.
inline ThetaSolution solve_theta_pgd(const ThetaObjective& obj, const PgdOptions& opt = {}) {
  const Index r = obj.size();
  const Index support = (obj.ttil().array() > 0.0).count();
  if (obj.sigma_r() == 0.0 && support <= obj.n2() && obj.upper() == kThetaCeiling) {
    // Noiseless with at most n2 live directions: the infimum 0 is reached only
    // in the limit theta -> 1 on the support, so return the ceiling point.
    Vector v = Vector::Zero(r);
    for (Index i = 0; i < r; ++i)
      if (obj.ttil()(i) > 0.0) v(i) = 2.0;
    ThetaSolution out;
    out.profile.theta = obj.project(v);
    out.profile.xi = 1.0;
    out.profile.n2 = obj.n2();
    out.objective = obj.value(out.profile.theta);
    return out;
  }
  Vector theta = obj.project(Vector::Constant(r, static_cast<double>(obj.n2()) / static_cast<double>(r)));
  double f = obj.value(theta);
  Vector g = obj.gradient(theta);
  double step = 1.0 / std::max(1.0, g.cwiseAbs().maxCoeff());
  double residual = std::numeric_limits<double>::infinity();
  bool stalled = false;
  Index it = 0;
  for (; it < opt.max_iterations; ++it) {
    residual = (theta - obj.project(theta - g)).cwiseAbs().maxCoeff();
    if (residual <= opt.tolerance * std::max(1.0, g.cwiseAbs().maxCoeff())) break;

    Vector next;
    double f_next = 0.0;
    for (int bt = 0; bt < 80; ++bt) {
      next = obj.project(theta - step * g);
      f_next = obj.value(next);
      const Vector delta = next - theta;
      // The slack admits steps whose decrease is below the rounding of f.
      const double slack = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(f);
      if (f_next <= f + g.dot(delta) + 0.5 / step * delta.squaredNorm() + slack) break;
      step *= 0.5;
    }
    const Vector g_next = obj.gradient(next);
    const Vector s = next - theta;
    const Vector y = g_next - g;
    const double sy = s.dot(y);
    if (s.squaredNorm() == 0.0) {
      // No movement at the smallest step: the residual is at rounding level.
      residual = (next - obj.project(next - g_next)).cwiseAbs().maxCoeff();
      theta = next;
      g = g_next;
      f = f_next;
      stalled = true;
      break;
    }
    step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-14, 1e14) : std::min(step * 4.0, 1e14);
    theta = std::move(next);
    g = g_next;
    f = f_next;
  }
  if (!(residual <= opt.tolerance * std::max(1.0, g.cwiseAbs().maxCoeff()))) {
    // A stalled line search means the decrease per step, about residual^2,
    // has fallen under the rounding of f. Near the pole D -> 0 that happens
    // around residual 1e-7, so stalls get a wider acceptance than the cap.
    const double accept = stalled ? 1e-6 : 1e-8;
    if (!(residual <= accept * std::max(1.0, g.cwiseAbs().maxCoeff()))) {
      throw NonconvergenceError("solve_theta_pgd: no convergence after " + std::to_string(it) +
                                    " iterations (residual " + detail::format_sci(residual) + ")",
                                theta, residual);
    }
  }
  ThetaSolution out;
  out.profile.theta = theta;
  out.profile.xi = 1.0;
  out.profile.n2 = obj.n2();
  out.objective = f;
  out.iterations = it;
  out.residual = residual;
  return out;
}

/// Root of the stationarity system in phi = 1 - theta,
///   phi_i = C D^2 / (2 n2 (V + K sigma_R^2 + D s_i)),   D = R - n2 - sum phi^2,
///   sum phi = R - n2,  sum phi^2 = S - (2 n2 - R),  sum s_i phi_i^2 = V,
/// with S = ||theta||^2 and K the variant's noise weight.
struct KktState {
  double c = 0.0;
  double v = 0.0;
  double s = 0.0;
  Vector phi;
};

namespace detail {

// phi_i = clamp(m * w_i, lo, hi) with m chosen so sum phi = total.
inline Vector normalize_phi(const Vector& w, double total, double lo, double hi, double* multiplier) {
  auto sum_at = [&](double m) { return (m * w.array()).cwiseMax(lo).cwiseMin(hi).sum(); };
  double a = 0.0;
  double b = 1.0;
  while (sum_at(b) < total && b < 1e300) b *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    if (sum_at(mid) < total) a = mid; else b = mid;
  }
  const double m = 0.5 * (a + b);
  if (multiplier) *multiplier = m;
  return (m * w.array()).cwiseMax(lo).cwiseMin(hi);
}

inline Vector kkt_weights(const ThetaObjective& obj, double v, double dgap) {
  const double k = obj.noise_weight() * obj.sigma_r() * obj.sigma_r();
  Vector w(obj.size());
  for (Index i = 0; i < obj.size(); ++i) w(i) = 1.0 / std::max(v + k + dgap * obj.ttil()(i), 1e-300);
  return w;
}

}  // namespace detail

struct FixedPointOptions {
  double damping = 0.5;
  double tolerance = 1e-13;
  Index max_iterations = 100000;
  Index grid_max_rank = 8;
  Index grid_points = 80;
};

struct FixedPointSolution {
  ThetaSolution solution;
  KktState state;
  bool used_grid = false;
};

namespace detail {

inline bool iterate_fixed_point(const ThetaObjective& obj, Vector& phi, const FixedPointOptions& opt,
                                KktState& state, Index& iterations) {
  const Index r = obj.size();
  const double n2 = static_cast<double>(obj.n2());
  const double total = static_cast<double>(r) - n2;
  const double phi_lo = 1.0 - obj.upper();
  const double phi_hi = 1.0 - obj.lower();
  for (Index it = 0; it < opt.max_iterations; ++it) {
    const double sp = phi.squaredNorm();
    const double v = (obj.ttil().array() * phi.array().square()).sum();
    const double dgap = total - sp;
    if (!(dgap > 0.0)) return false;
    double m = 0.0;
    const Vector next = normalize_phi(kkt_weights(obj, v, dgap), total, phi_lo, phi_hi, &m);
    const double change = (next - phi).cwiseAbs().maxCoeff();
    phi = (1.0 - opt.damping) * phi + opt.damping * next;
    iterations = it + 1;
    if (change <= opt.tolerance) {
      phi = next;
      state.phi = phi;
      state.v = (obj.ttil().array() * phi.array().square()).sum();
      state.s = (1.0 - phi.array()).square().sum();
      const double d_final = total - phi.squaredNorm();
      state.c = m * 2.0 * n2 / (d_final * d_final);
      return true;
    }
  }
  return false;
}

// Coarse search over (V, S') for a consistent starting point.
inline Vector grid_start(const ThetaObjective& obj, Index points) {
  const Index r = obj.size();
  const double total = static_cast<double>(r) - static_cast<double>(obj.n2());
  const double phi_lo = 1.0 - obj.upper();
  const double phi_hi = 1.0 - obj.lower();
  const double sp_min = total * total / static_cast<double>(r);
  const double sp_max = std::min(total * phi_hi, total - 1e-9);
  const double v_max = std::max(obj.ttil().sum() * phi_hi * phi_hi, 1e-12);
  double best = std::numeric_limits<double>::infinity();
  Vector best_phi = Vector::Constant(r, total / static_cast<double>(r));
  for (Index a = 0; a <= points; ++a) {
    const double v = v_max * static_cast<double>(a) / static_cast<double>(points);
    for (Index b = 0; b <= points; ++b) {
      const double sp = sp_min + (sp_max - sp_min) * static_cast<double>(b) / static_cast<double>(points);
      const double dgap = total - sp;
      if (!(dgap > 0.0)) continue;
      const Vector phi = normalize_phi(kkt_weights(obj, v, dgap), total, phi_lo, phi_hi, nullptr);
      const double rs = std::abs(phi.squaredNorm() - sp) / std::max(sp, 1e-12);
      const double rv = std::abs((obj.ttil().array() * phi.array().square()).sum() - v) / v_max;
      if (rs + rv < best) {
        best = rs + rv;
        best_phi = phi;
      }
    }
  }
  return best_phi;
}

}  // namespace detail

/// Damped fixed-point iteration on the stationarity system, started from the
/// uniform profile; for R <= grid_max_rank a failed start is retried from the
/// best point of a coarse (V, S') grid.
inline FixedPointSolution solve_theta_fixed_point(const ThetaObjective& obj, const FixedPointOptions& opt = {}) {
  const Index r = obj.size();
  const double total = static_cast<double>(r) - static_cast<double>(obj.n2());
  FixedPointSolution out;
  Vector phi = Vector::Constant(r, total / static_cast<double>(r));
  Index iterations = 0;
  bool ok = detail::iterate_fixed_point(obj, phi, opt, out.state, iterations);
  if (!ok && r <= opt.grid_max_rank) {
    phi = detail::grid_start(obj, opt.grid_points);
    out.used_grid = true;
    ok = detail::iterate_fixed_point(obj, phi, opt, out.state, iterations);
  }
  const Vector theta = Vector::Ones(r) - phi;
  if (!ok) {
    throw NonconvergenceError("solve_theta_fixed_point: stationarity iteration did not converge", theta,
                              obj.projected_gradient_residual(theta));
  }
  out.solution.profile.theta = theta;
  out.solution.profile.xi = 1.0;
  out.solution.profile.n2 = obj.n2();
  out.solution.objective = obj.value(theta);
  out.solution.iterations = iterations;
  out.solution.residual = obj.projected_gradient_residual(theta);
  return out;
}

/// Reduced objective in phi with the constraint substituted into the
/// denominator: g(phi) = n2 (V + K sigma_R^2) / (R - n2 - sum phi^2).
/// On {sum phi = R - n2} it differs from the variant's risk by a constant.
inline double reduced_objective(const ThetaObjective& obj, const Vector& phi) {
  const double n2 = static_cast<double>(obj.n2());
  const double dgap = static_cast<double>(obj.size()) - n2 - phi.squaredNorm();
  const double v = (obj.ttil().array() * phi.array().square()).sum();
  return n2 * (v + obj.noise_weight() * obj.sigma_r() * obj.sigma_r()) / dgap;
}

/// Closed-form partial derivatives of reduced_objective:
///   2 n2 phi_i (V + K sigma_R^2 + D s_i) / D^2.
inline Vector reduced_objective_gradient(const ThetaObjective& obj, const Vector& phi) {
  const double n2 = static_cast<double>(obj.n2());
  const double dgap = static_cast<double>(obj.size()) - n2 - phi.squaredNorm();
  const double v = (obj.ttil().array() * phi.array().square()).sum();
  const double k = obj.noise_weight() * obj.sigma_r() * obj.sigma_r();
  return (2.0 * n2 / (dgap * dgap)) * (phi.array() * (v + k + dgap * obj.ttil().array())).matrix();
}

/// Minimizes the variant's risk over feasible profiles. Projected gradient is
/// the primary method.
inline ThetaSolution solve_theta_star(const Vector& ttil_diag, Index n2, double sigma_r, RiskVariant variant,
                                      std::optional<RobustBox> box = std::nullopt) {
  return solve_theta_pgd(ThetaObjective(ttil_diag, n2, sigma_r, variant, box));
}

/// Diagonal weights with xi = 1: L_i = (1/theta_i - 1)^{-1/2}, so that
/// theta_i = L_i^2 / (1 + L_i^2). theta_i = 0 drops the direction.
inline Vector theta_to_lambda(const Vector& theta) {
  Vector out(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    const double t = theta(i);
    detail::require(t >= 0.0 && t < 1.0, "theta_to_lambda: theta_i must lie in [0, 1)");
    out(i) = t == 0.0 ? 0.0 : std::sqrt(t / (1.0 - t));
  }
  return out;
}

struct OptimalRep {
  EigenWeighting weighting;  // d x R
  ReductionResult reduction;
  ThetaSolution theta;
  Vector lambda_r;
};

/// Reduce to the top-R canonical eigenspace, solve for theta*, map to weights
/// and lift: Lambda* = U1 (Sigma_F^R)^{-1/2} diag(lambda_R).
inline OptimalRep compute_optimal_rep(Index r, const CovarianceModel& sigma_f, const CovarianceModel& sigma_ttil,
                                      double sigma, Index n2, RiskVariant variant,
                                      std::optional<double> theta_lower = std::nullopt) {
  const Index d = sigma_ttil.dim();
  detail::require(n2 >= 1 && n2 < r && r <= d, "compute_optimal_rep: need 1 <= n2 < R <= d");
  ReductionResult red = compute_reduction(r, sigma_f, sigma_ttil, sigma);
  std::optional<RobustBox> box;
  if (theta_lower) box = RobustBox::make(*theta_lower, d, n2, r);
  ThetaSolution sol = solve_theta_star(red.ttil_diag, n2, red.sigma_r, variant, box);
  Vector lam = theta_to_lambda(sol.profile.theta);
  const CovarianceModel f_r(red.sigma_f_r);
  detail::require(f_r.min_eigval() > 1e-12 * std::max(1.0, f_r.eigvals()(0)),
                  "compute_optimal_rep: Sigma_F is singular on the principal subspace");
  Matrix lifted = red.basis_u1 * inv_sqrt_spd(f_r) * lam.asDiagonal();
  return OptimalRep{EigenWeighting(std::move(lifted)), std::move(red), std::move(sol), std::move(lam)};
}

/// Excess-risk bound n2^2 E / (d (R - n2) (2 n2 - R theta_lower) theta_lower),
/// up to the absolute constant `scale_front`.
inline double e2e_bound(Index r, Index n2, Index d, double theta_lower, double est_error, double scale_front = 1.0) {
  detail::require(r > n2 && n2 >= 1, "e2e_bound: need R > n2 >= 1");
  detail::require(theta_lower > 0.0, "e2e_bound: theta_lower must be > 0");
  detail::require(est_error >= 0.0, "e2e_bound: estimation error must be >= 0");
  const double n = static_cast<double>(n2);
  const double room = 2.0 * n - static_cast<double>(r) * theta_lower;
  detail::require(room > 0.0, "e2e_bound: 2 n2 - R theta_lower must be > 0");
  return scale_front * n * n * est_error /
         (static_cast<double>(d) * static_cast<double>(r - n2) * room * theta_lower);
}

}  // namespace metarep
