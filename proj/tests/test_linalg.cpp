#include <gtest/gtest.h>

#include <cmath>

#include "metarep/linalg.hpp"
#include "metarep/rng.hpp"

using namespace metarep;

namespace {

Matrix random_matrix(Index rows, Index cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Matrix random_spd(Index d, RngStream& rng) {
  const Matrix a = random_matrix(d, d, rng);
  return a * a.transpose() / static_cast<double>(d) + 0.1 * Matrix::Identity(d, d);
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(Rng, SplitIsDeterministicAndIgnoresParentState) {
  RngStream a(42);
  const RngStream b(42);
  for (int i = 0; i < 10; ++i) a.normal();
  RngStream ca = a.split("noise", 3);
  RngStream cb = b.split("noise", 3);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(ca.normal(), cb.normal());
  EXPECT_NE(b.split("noise", 3).seed(), b.split("noise", 4).seed());
  EXPECT_NE(b.split("noise").seed(), b.split("features").seed());
}

TEST(EigSym, IdentityKeepsCoordinateBasis) {
  const SymEigen e = eig_sym(Matrix::Identity(3, 3));
  EXPECT_TRUE(e.values.isApprox(Vector::Ones(3)));
  EXPECT_LE((e.vectors - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EigSym, DiagonalIsReordered) {
  Vector d(2);
  d << 0.1, 1.0;
  const SymEigen e = eig_sym(Matrix(d.asDiagonal()));
  EXPECT_NEAR(e.values(0), 1.0, 1e-14);
  EXPECT_NEAR(e.values(1), 0.1, 1e-14);
  EXPECT_NEAR(std::abs(e.vectors(1, 0)), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(e.vectors(0, 1)), 1.0, 1e-14);
}

TEST(EigSym, TwoByTwoHandSolved) {
  const SymEigen e = eig_sym(mat2(2, 1, 1, 2));
  EXPECT_NEAR(e.values(0), 3.0, 1e-12);
  EXPECT_NEAR(e.values(1), 1.0, 1e-12);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(e.vectors(0, 0)), r, 1e-12);
  EXPECT_NEAR(e.vectors(0, 0), e.vectors(1, 0), 1e-12);
  EXPECT_NEAR(e.vectors(0, 1), -e.vectors(1, 1), 1e-12);
}

TEST(EigSym, ReconstructsRandomSymmetric) {
  RngStream rng(1);
  const Matrix a = random_matrix(12, 12, rng);
  const Matrix s = a + a.transpose();
  const SymEigen e = eig_sym(s);
  for (Index i = 1; i < e.values.size(); ++i) EXPECT_GE(e.values(i - 1), e.values(i));
  const Matrix back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  EXPECT_LE((back - s).norm(), 1e-8 * s.norm());
  EXPECT_LE((e.vectors.transpose() * e.vectors - Matrix::Identity(12, 12)).norm(), 1e-10);
}

TEST(EigSym, RejectsNonSymmetric) {
  EXPECT_THROW(eig_sym(mat2(1, 2, 0, 1)), ValidationError);
  EXPECT_THROW(eig_sym(Matrix::Zero(2, 3)), ValidationError);
}

TEST(CovarianceModel, ClipsRoundoffAndRejectsIndefinite) {
  Vector d(2);
  d << 1.0, -1e-13;
  const CovarianceModel c = CovarianceModel::diagonal(d);
  EXPECT_EQ(c.min_eigval(), 0.0);
  d(1) = -1e-3;
  EXPECT_THROW(CovarianceModel::diagonal(d), ValidationError);
}

TEST(CovarianceModel, PsdPartDropsNegativeDirections) {
  const CovarianceModel c = CovarianceModel::psd_part(mat2(1, 2, 2, 1));
  // eigenvalues 3 and -1; only the (1,1)/sqrt2 direction survives
  EXPECT_NEAR(c.matrix()(0, 0), 1.5, 1e-12);
  EXPECT_NEAR(c.matrix()(0, 1), 1.5, 1e-12);
}

TEST(SpectrumSummary, EffectiveRankAndApproxRank) {
  Vector d(4);
  d << 2.0, 1.0, 0.5, 0.5;
  const SpectrumSummary s = CovarianceModel::diagonal(d).summary();
  EXPECT_NEAR(s.trace, 4.0, 1e-14);
  EXPECT_NEAR(s.op_norm, 2.0, 1e-14);
  EXPECT_NEAR(s.effective_rank, 2.0, 1e-14);
  EXPECT_GE(s.approx_rank_s, 1);
  EXPECT_LE(s.approx_rank_s, 4);
  const SpectrumSummary iso = CovarianceModel::identity(5).summary();
  EXPECT_NEAR(iso.effective_rank, 5.0, 1e-14);
}

TEST(SqrtSpd, Examples) {
  EXPECT_LE((sqrt_spd(CovarianceModel::identity(3)) - Matrix::Identity(3, 3)).norm(), 1e-14);
  Vector d(2);
  d << 4, 9;
  const Matrix s = sqrt_spd(CovarianceModel::diagonal(d));
  EXPECT_NEAR(s(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(s(1, 1), 3.0, 1e-14);
  const CovarianceModel c(mat2(2, 1, 1, 2));
  const Matrix r = sqrt_spd(c);
  Matrix expected(2, 2);
  const double a = std::sqrt(3.0);
  expected << (a + 1) / 2, (a - 1) / 2, (a - 1) / 2, (a + 1) / 2;
  EXPECT_LE((r - expected).norm(), 1e-12);
}

TEST(SqrtSpd, SquaresBackAndCommutes) {
  RngStream rng(2);
  const CovarianceModel c(random_spd(15, rng));
  const Matrix s = sqrt_spd(c);
  EXPECT_LE((s * s - c.matrix()).norm(), 1e-8);
  EXPECT_LE((s * c.matrix() - c.matrix() * s).norm(), 1e-8);
  EXPECT_LE((inv_sqrt_spd(c) * s - Matrix::Identity(15, 15)).norm(), 1e-8);
}

TEST(SqrtSpd, InverseRejectsSingular) {
  Vector d(2);
  d << 1, 0;
  EXPECT_THROW(inv_sqrt_spd(CovarianceModel::diagonal(d)), ValidationError);
}

TEST(MinNormSolve, Examples) {
  Matrix a(1, 2);
  a << 1, 0;
  Vector y(1);
  y << 2;
  Vector x = min_norm_solve(a, y);
  EXPECT_NEAR(x(0), 2.0, 1e-14);
  EXPECT_NEAR(x(1), 0.0, 1e-14);
  Vector y2(2);
  y2 << 3, 4;
  EXPECT_LE((min_norm_solve(Matrix::Identity(2, 2), y2) - y2).norm(), 1e-14);
  a << 1, 1;
  x = min_norm_solve(a, y);
  EXPECT_NEAR(x(0), 1.0, 1e-14);
  EXPECT_NEAR(x(1), 1.0, 1e-14);
}

TEST(MinNormSolve, InterpolatesAndIsMinimal) {
  RngStream rng(3);
  const Matrix a = random_matrix(6, 15, rng);
  Vector y(6);
  for (Index i = 0; i < 6; ++i) y(i) = rng.normal();
  const Vector x = min_norm_solve(a, y);
  EXPECT_LE((a * x - y).norm(), 1e-8 * y.norm());
  Eigen::FullPivLU<Matrix> lu(a);
  const Matrix null = lu.kernel();
  for (int k = 0; k < 100; ++k) {
    Vector c(null.cols());
    for (Index j = 0; j < c.size(); ++j) c(j) = rng.normal();
    EXPECT_LE(x.norm(), (x + null * c).norm() + 1e-12);
  }
}

TEST(MinNormSolve, RankDeficientAndZero) {
  Matrix a(3, 2);
  a << 1, 1, 1, 1, 1, 1;
  Vector y = Vector::Ones(3);
  const Vector x = min_norm_solve(a, y);
  EXPECT_NEAR(x(0), 0.5, 1e-12);
  EXPECT_NEAR(x(1), 0.5, 1e-12);
  EXPECT_EQ(min_norm_solve(Matrix::Zero(3, 2), y).norm(), 0.0);
  EXPECT_THROW(min_norm_solve(a, Vector::Ones(2)), ValidationError);
}

TEST(PrincipalAngle, Examples) {
  const Matrix e = Matrix::Identity(3, 3);
  EXPECT_NEAR(principal_angle_sin(Subspace(e.col(0)), Subspace(e.col(0))), 0.0, 1e-14);
  EXPECT_NEAR(principal_angle_sin(Subspace(e.col(0)), Subspace(e.col(1))), 1.0, 1e-14);
  Matrix u(2, 1), v(2, 1);
  u << 1, 0;
  v << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  EXPECT_NEAR(principal_angle_sin(Subspace(u), Subspace(v)), std::sqrt(0.5), 1e-12);
  EXPECT_THROW(principal_angle_sin(Subspace(e.leftCols(2)), Subspace(e.col(0))), ValidationError);
}

TEST(PrincipalAngle, SymmetricAndRotationInvariant) {
  RngStream rng(4);
  const Subspace u = Subspace::top_left_singular(random_matrix(10, 3, rng), 3);
  const Subspace v = Subspace::top_left_singular(random_matrix(10, 3, rng), 3);
  const double a = principal_angle_sin(u, v);
  EXPECT_NEAR(a, principal_angle_sin(v, u), 1e-10);
  Eigen::HouseholderQR<Matrix> qr(random_matrix(3, 3, rng));
  const Matrix q = qr.householderQ();
  EXPECT_NEAR(a, principal_angle_sin(Subspace(u.basis() * q), v), 1e-10);
}

TEST(Subspace, RejectsNonOrthonormal) {
  Matrix b(2, 1);
  b << 1, 1;
  EXPECT_THROW(Subspace{b}, ValidationError);
}

TEST(SampleGaussian, ZeroCovarianceAndDeterminism) {
  RngStream r1(5);
  EXPECT_EQ(sample_gaussian(CovarianceModel(Matrix::Zero(3, 3)), 4, r1).norm(), 0.0);
  RngStream a(9), b(9);
  const CovarianceModel c = CovarianceModel::identity(4);
  EXPECT_EQ(sample_gaussian(c, 7, a), sample_gaussian(c, 7, b));
}

TEST(SampleGaussian, EmpiricalCovariance) {
  RngStream rng(6);
  Matrix target(3, 3);
  target << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 0.5;
  const Index n = 100000;
  const Matrix x = sample_gaussian(CovarianceModel(target), n, rng);
  const Matrix emp = x.transpose() * x / static_cast<double>(n);
  EXPECT_LE(op_norm(emp - target), 0.05);
  const Matrix xi = sample_gaussian(CovarianceModel::identity(5), n, rng);
  EXPECT_LE(op_norm(xi.transpose() * xi / static_cast<double>(n) - Matrix::Identity(5, 5)), 0.05);
}
