#include <gtest/gtest.h>

#include <cmath>

#include "metarep/risk.hpp"

using namespace metarep;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ThetaProfile profile(const Vector& theta, Index n2) {
  ThetaProfile p;
  p.theta = theta;
  p.n2 = n2;
  return p;
}

Vector bilevel(Index hi, double vh, Index lo, double vl) {
  Vector v(hi + lo);
  v.head(hi).setConstant(vh);
  v.tail(lo).setConstant(vl);
  return v;
}

}  // namespace

TEST(CanonicalCov, Examples) {
  const CovarianceModel t = CovarianceModel::diagonal(vec({3, 0.5}));
  EXPECT_LE((canonical_cov(CovarianceModel::identity(2), t).matrix() - t.matrix()).norm(), 1e-14);
  const CovarianceModel a = canonical_cov(CovarianceModel::diagonal(vec({4, 1})), CovarianceModel::identity(2));
  EXPECT_NEAR(a.matrix()(0, 0), 4.0, 1e-14);
  EXPECT_NEAR(a.matrix()(1, 1), 1.0, 1e-14);
  const CovarianceModel b =
      canonical_cov(CovarianceModel::diagonal(vec({0.25, 1})), CovarianceModel::diagonal(vec({8, 0.1})));
  EXPECT_NEAR(b.matrix()(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(b.matrix()(1, 1), 0.1, 1e-14);
}

TEST(ComputeReduction, Examples) {
  const CovarianceModel f = CovarianceModel::identity(2);
  const ReductionResult full = compute_reduction(2, f, CovarianceModel::diagonal(vec({1, 0.1})), 0.7);
  EXPECT_EQ(full.sigma_r, 0.7);
  const ReductionResult one = compute_reduction(1, f, CovarianceModel::diagonal(vec({1, 0.1})), 0.0);
  EXPECT_NEAR(one.sigma_r * one.sigma_r, 0.1, 1e-14);
  const CovarianceModel t = CovarianceModel::diagonal(bilevel(20, 1.0, 80, 0.1));
  const ReductionResult r50 = compute_reduction(50, CovarianceModel::identity(100), t, 0.0);
  EXPECT_NEAR(r50.sigma_r * r50.sigma_r, 5.0, 1e-10);
  EXPECT_NEAR(r50.ttil_diag.sum(), 23.0, 1e-10);
  EXPECT_THROW(compute_reduction(0, f, f, 0.1), ValidationError);
  EXPECT_THROW(compute_reduction(3, f, f, 0.1), ValidationError);
}

TEST(ComputeReduction, EquivalentNoiseIsMonotoneAndExactAtFullRank) {
  RngStream rng(8);
  Matrix a(12, 12);
  for (Index i = 0; i < 12; ++i)
    for (Index j = 0; j < 12; ++j) a(i, j) = rng.normal();
  const CovarianceModel f(a * a.transpose() / 12.0 + 0.2 * Matrix::Identity(12, 12));
  const CovarianceModel t = CovarianceModel::diagonal(vec({3, 2, 2, 1, 1, 0.5, 0.5, 0.2, 0.1, 0.1, 0.05, 0.0}));
  const CovarianceModel c = canonical_cov(f, t);
  const double sigma = 0.3;
  double prev = std::numeric_limits<double>::infinity();
  for (Index r = 1; r <= 12; ++r) {
    const ReductionResult red = compute_reduction(r, f, c, sigma);
    const double expected = sigma * sigma + c.matrix().trace() - red.sigma_ttil_r.trace();
    EXPECT_NEAR(red.sigma_r * red.sigma_r, expected, 1e-10);
    EXPECT_LE(red.sigma_r, prev);
    prev = red.sigma_r;
    const Matrix gram = red.basis_u1.transpose() * red.basis_u1;
    EXPECT_LE((gram - Matrix::Identity(r, r)).norm(), 1e-10);
    // diagonal in the U1 basis
    EXPECT_LE((red.sigma_ttil_r - Matrix(red.ttil_diag.asDiagonal())).norm(), 1e-10);
  }
  EXPECT_EQ(compute_reduction(12, f, c, sigma).sigma_r, sigma);
}

TEST(SolveXi, Examples) {
  EXPECT_NEAR(solve_xi(vec({1, 1}), 1), 1.0, 1e-12);
  const Vector eq = Vector::Constant(10, 2.5);
  EXPECT_NEAR(solve_xi(eq, 4), 4.0 / (6.0 * 2.5), 1e-12);
  EXPECT_NEAR(solve_xi(vec({1, 2}), 1), 1.0 / std::sqrt(2.0), 1e-10);
  const Vector l = vec({0.3, 1.7, 2.2, 0.9, 5.0});
  EXPECT_NEAR(solve_xi(2.0 * l, 2), 0.5 * solve_xi(l, 2), 1e-12);
}

TEST(SolveXi, ResidualAndErrors) {
  RngStream rng(10);
  for (int rep = 0; rep < 50; ++rep) {
    Vector l(20);
    for (Index i = 0; i < 20; ++i) l(i) = std::exp(3.0 * rng.normal());
    const Index n2 = 1 + static_cast<Index>(rng.uniform() * 18);
    const ThetaProfile p = theta_from_weights(l, n2);
    EXPECT_LE(std::abs(p.theta.sum() - static_cast<double>(n2)), 1e-10 * static_cast<double>(n2));
    for (Index i = 0; i < 20; ++i) EXPECT_NEAR(p.theta(i), p.xi * l(i) / (1 + p.xi * l(i)), 1e-12);
  }
  EXPECT_THROW(solve_xi(vec({1, 1}), 2), ValidationError);
  EXPECT_THROW(solve_xi(vec({1, 1, 1}), 0), ValidationError);
  EXPECT_THROW(solve_xi(vec({1, 0, 1}), 1), ValidationError);
  EXPECT_THROW(solve_xi(vec({1, -1, 1}), 1), ValidationError);
}

TEST(AnalyticRisk, Examples) {
  const ThetaProfile p = profile(vec({0.5, 0.5}), 1);
  for (RiskVariant v : {RiskVariant::main, RiskVariant::appendix, RiskVariant::exact})
    EXPECT_NEAR(analytic_risk(p, vec({1, 1}), 0.0, v).value, 1.0, 1e-14);
  EXPECT_NEAR(analytic_risk(p, vec({0, 0}), 1.0, RiskVariant::main).value, 3.0, 1e-14);
  EXPECT_NEAR(analytic_risk(p, vec({0, 0}), 1.0, RiskVariant::appendix).value, 2.0, 1e-14);
  EXPECT_NEAR(analytic_risk(p, vec({0, 0}), 1.0, RiskVariant::exact).value, 2.0, 1e-14);
  EXPECT_EQ(analytic_risk(p, vec({0, 0}), 1.0, RiskVariant::main).method, RiskMethod::analytic_main);
  EXPECT_EQ(analytic_risk(p, vec({0, 0}), 1.0, RiskVariant::main).std_error, 0.0);
}

TEST(AnalyticRisk, UniformProfilePin) {
  const Index r = 50, n2 = 20;
  const double c = 0.7, s = 1.3;
  const double n = n2, rr = r;
  const ThetaProfile p = profile(Vector::Constant(r, n / rr), n2);
  const double expected =
      (n * rr * c * std::pow(1 - n / rr, 2) + (n * n / rr + 1) * s * s) / (n - n * n / rr);
  EXPECT_NEAR(analytic_risk(p, Vector::Constant(r, c), s, RiskVariant::main).value, expected, 1e-10 * expected);
}

TEST(AnalyticRisk, PoleIsDivergence) {
  EXPECT_THROW(analytic_risk(profile(vec({1.0, 0.0}), 1), vec({1, 1}), 1.0, RiskVariant::main), DivergenceError);
}

TEST(AnalyticRisk, LinearInTaskSpectrum) {
  RngStream rng(12);
  const Index r = 15, n2 = 6;
  Vector l(r);
  for (Index i = 0; i < r; ++i) l(i) = 0.2 + rng.uniform();
  const ThetaProfile p = theta_from_weights(l, n2);
  Vector s1(r), s2(r);
  for (Index i = 0; i < r; ++i) {
    s1(i) = rng.uniform();
    s2(i) = rng.uniform();
  }
  const double a = 1.7, b = -0.4, sig = 0.9;
  for (RiskVariant v : {RiskVariant::main, RiskVariant::appendix, RiskVariant::exact}) {
    const double noise = analytic_risk(p, Vector::Zero(r), sig, v).value;
    const double lhs = analytic_risk(p, a * s1 + b * s2, sig, v).value - noise;
    const double rhs = a * (analytic_risk(p, s1, sig, v).value - noise) + b * (analytic_risk(p, s2, sig, v).value - noise);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
  }
}

TEST(DcPredict, TrivialCases) {
  const DcPrediction z = dc_predict(vec({1, 2, 3}), Vector::Zero(3), 1, 0.0);
  EXPECT_EQ(z.gamma, 0.0);
  EXPECT_EQ(z.risk, 0.0);
  const DcPrediction u = dc_predict(Vector::Ones(6), vec({1, 2, 3, 4, 5, 6}), 2, 0.4);
  for (Index i = 1; i < 6; ++i) EXPECT_NEAR(u.shrink(i), u.shrink(0), 1e-14);
}

TEST(DcPredict, EqualsAppendixVariantUnderTaskAveraging) {
  RngStream rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const Index r = 5 + static_cast<Index>(rng.uniform() * 40);
    const Index n2 = 1 + static_cast<Index>(rng.uniform() * static_cast<double>(r - 1));
    Vector l(r), s(r);
    for (Index i = 0; i < r; ++i) {
      l(i) = std::exp(rng.normal());
      s(i) = rng.uniform() * 2.0;
    }
    const double sig = rng.uniform() * 2.0;
    const DcPrediction dc = dc_predict(l, s.cwiseSqrt(), n2, sig);
    const ThetaProfile p = theta_from_weights(l, n2);
    const double a = analytic_risk(p, s, sig, RiskVariant::appendix).value;
    EXPECT_NEAR(dc.risk, a, 1e-10 * std::max(1.0, std::abs(a)));
    EXPECT_LE((dc.shrink - p.theta).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MonteCarloRisk, ZeroProblemIsExactlyZero) {
  const ProblemSpec spec(CovarianceModel::identity(8), CovarianceModel(Matrix::Zero(8, 8)), 0.0);
  const RiskEstimate r = monte_carlo_risk(spec, EigenWeighting::identity(8), 3, 10, 1);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.std_error, 0.0);
  EXPECT_THROW(monte_carlo_risk(spec, EigenWeighting::identity(8), 3, 1, 1), ValidationError);
}

TEST(MonteCarloRisk, NoiseFloorAndDeterminism) {
  const ProblemSpec spec(CovarianceModel::identity(20), CovarianceModel::identity(20), 0.8);
  const RiskEstimate a = monte_carlo_risk(spec, EigenWeighting::identity(20), 8, 200, 5);
  const RiskEstimate b = monte_carlo_risk(spec, EigenWeighting::identity(20), 8, 200, 5);
  EXPECT_EQ(a.value, b.value);
  EXPECT_GE(a.value, 0.64 - 3 * a.std_error);
  EXPECT_GT(a.std_error, 0.0);
}

TEST(MonteCarloRisk, IsotropicMinNormMatchesClosedForm) {
  // Isotropic Gaussian design, n < d - 1: E risk = ||beta||^2 (1 - n/d) + sigma^2 n/(d - n - 1) + sigma^2.
  const Index d = 30, n = 10;
  const double sigma = 0.5;
  const ProblemSpec spec(CovarianceModel::identity(d), CovarianceModel::identity(d), sigma);
  const RiskEstimate r = monte_carlo_risk(spec, EigenWeighting::identity(d), n, 4000, 17);
  const double expected = d * (1.0 - static_cast<double>(n) / d) + sigma * sigma * n / (d - n - 1.0) + sigma * sigma;
  EXPECT_NEAR(r.value, expected, 4 * r.std_error);
}

TEST(WhiteningInvariance, IdentityFeaturesGiveIdenticalRuns) {
  const ProblemSpec spec(CovarianceModel::identity(6), CovarianceModel::diagonal(vec({2, 1, 1, 0.5, 0.1, 0.1})), 0.3);
  const auto [a, b] = whitening_invariance_check(spec, EigenWeighting::identity(6), 3, 50, 4);
  EXPECT_NEAR(a.value, b.value, 1e-12 * a.value);
}

TEST(WhiteningInvariance, ZeroProblemAndSingularFeatures) {
  const ProblemSpec zero(CovarianceModel::diagonal(vec({2, 1, 3})), CovarianceModel(Matrix::Zero(3, 3)), 0.0);
  const auto [a, b] = whitening_invariance_check(zero, EigenWeighting::identity(3), 2, 10, 1);
  EXPECT_EQ(a.value, 0.0);
  EXPECT_EQ(b.value, 0.0);
  const ProblemSpec singular(CovarianceModel::diagonal(vec({2, 0, 3})), CovarianceModel::identity(3), 0.1);
  EXPECT_THROW(whitening_invariance_check(singular, EigenWeighting::identity(3), 2, 10, 1), ValidationError);
}

TEST(WhiteningInvariance, AnisotropicFeatures) {
  RngStream rng(14);
  const Index d = 10;
  Vector f(d), t(d);
  for (Index i = 0; i < d; ++i) {
    f(i) = 2.0 * (0.5 + rng.uniform());
    t(i) = rng.uniform();
  }
  Matrix l(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) l(i, j) = rng.normal();
  const ProblemSpec spec(CovarianceModel::diagonal(f), CovarianceModel::diagonal(t), 0.4);
  const auto [a, b] = whitening_invariance_check(spec, EigenWeighting(l), 4, 2000, 21);
  EXPECT_LE(std::abs(a.value - b.value), 3 * std::hypot(a.std_error, b.std_error));
}
