#include <gtest/gtest.h>

#include <cmath>

#include "metarep/datagen.hpp"
#include "metarep/interpolator.hpp"

using namespace metarep;

namespace {

Matrix random_matrix(Index rows, Index cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Vector random_vector(Index n, RngStream& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

ProblemSpec iso_spec(Index d, double task_scale, double sigma) {
  return ProblemSpec(CovarianceModel::identity(d), CovarianceModel::diagonal(Vector::Constant(d, task_scale)), sigma);
}

}  // namespace

TEST(ProblemSpec, Validates) {
  EXPECT_THROW(ProblemSpec(CovarianceModel::identity(2), CovarianceModel::identity(3), 0.0), ValidationError);
  EXPECT_THROW(ProblemSpec(CovarianceModel::identity(2), CovarianceModel::identity(2), -1.0), ValidationError);
}

TEST(GenMetaTrain, ZeroTasksZeroNoiseGiveZeroLabels) {
  const MetaTrainSet data = gen_meta_train(iso_spec(5, 0.0, 0.0), 10, 3, 1);
  EXPECT_EQ(data.labels.norm(), 0.0);
  EXPECT_EQ(data.total_samples(), 30);
}

TEST(GenMetaTrain, DeterministicAndLinearModel) {
  const ProblemSpec spec = iso_spec(6, 1.0, 0.3);
  const MetaTrainSet a = gen_meta_train(spec, 8, 4, 77);
  const MetaTrainSet b = gen_meta_train(spec, 8, 4, 77);
  EXPECT_EQ(a.tasks, b.tasks);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t i = 0; i < a.features.size(); ++i) EXPECT_EQ(a.features[i], b.features[i]);
  const ProblemSpec clean = iso_spec(6, 1.0, 0.0);
  const MetaTrainSet c = gen_meta_train(clean, 8, 4, 77);
  for (Index i = 0; i < 8; ++i) {
    const Vector y = c.features[i] * c.tasks.row(i).transpose();
    EXPECT_LE((y - c.labels.row(i).transpose()).norm(), 1e-12);
  }
}

TEST(GenMetaTrain, TaskDataDoesNotDependOnT) {
  const ProblemSpec spec = iso_spec(4, 1.0, 0.5);
  const MetaTrainSet small = gen_meta_train(spec, 3, 2, 11);
  const MetaTrainSet big = gen_meta_train(spec, 9, 2, 11);
  EXPECT_EQ(small.features[2], big.features[2]);
  EXPECT_EQ(small.labels.row(2), big.labels.row(2));
}

TEST(GenMetaTrain, TaskCovarianceConcentrates) {
  const MetaTrainSet data = gen_meta_train(iso_spec(50, 1.0, 0.0), 200, 20, 3);
  const Matrix emp = data.tasks.transpose() * data.tasks / 200.0;
  // The op-norm error of a 50 x 50 Wishart average over T = 200 draws sits
  // near (1 + sqrt(50/200))^2 - 1 = 1.25, so 0.3 is out of reach here.
  EXPECT_LE(op_norm(emp - Matrix::Identity(50, 50)), 1.5);
  const MetaTrainSet more = gen_meta_train(iso_spec(50, 1.0, 0.0), 20000, 1, 3);
  const Matrix emp2 = more.tasks.transpose() * more.tasks / 20000.0;
  EXPECT_LE(op_norm(emp2 - Matrix::Identity(50, 50)), 0.3);
}

TEST(GenMetaTrain, FeatureMomentAndLabelVariance) {
  const ProblemSpec spec = iso_spec(10, 1.0, 0.0);
  const MetaTrainSet data = gen_meta_train(spec, 2000, 10, 5);
  Matrix acc = Matrix::Zero(10, 10);
  for (const auto& x : data.features) acc += x.transpose() * x;
  acc /= static_cast<double>(data.total_samples());
  EXPECT_LE(op_norm(acc - Matrix::Identity(10, 10)), 5.0 * std::sqrt(10.0 / 20000.0));
  const double var = data.labels.squaredNorm() / static_cast<double>(data.total_samples());
  EXPECT_NEAR(var, 10.0, 0.5);
}

TEST(GenFewShot, Boundaries) {
  const ProblemSpec spec = iso_spec(5, 0.0, 0.0);
  EXPECT_THROW(gen_few_shot(spec, 0, std::uint64_t{1}), ValidationError);
  const FewShotSet s = gen_few_shot(spec, 3, std::uint64_t{1});
  EXPECT_EQ(s.labels.norm(), 0.0);
}

TEST(GenFewShot, FullRowRankDesign) {
  const FewShotSet s = gen_few_shot(iso_spec(100, 1.0, 0.5), 40, std::uint64_t{9});
  Eigen::JacobiSVD<Matrix> svd(s.features);
  EXPECT_GT(svd.singularValues().minCoeff(), 0.0);
  EXPECT_EQ(s.features.rows(), 40);
}

TEST(Interpolator, Examples) {
  Matrix x(1, 2);
  x << 1, 0;
  Vector y(1);
  y << 2;
  Vector b = fit_weighted_min_norm(x, y, EigenWeighting::identity(2));
  EXPECT_NEAR(b(0), 2.0, 1e-14);
  EXPECT_NEAR(b(1), 0.0, 1e-14);
  x << 1, 1;
  y << 5;
  Vector lam(2);
  lam << 1, 2;
  b = fit_weighted_min_norm(x, y, EigenWeighting(Matrix(lam.asDiagonal())));
  EXPECT_NEAR(b(0), 1.0, 1e-12);
  EXPECT_NEAR(b(1), 4.0, 1e-12);
}

TEST(Interpolator, RejectsBadInput) {
  EXPECT_THROW(EigenWeighting(Matrix::Zero(3, 2)), ValidationError);
  Matrix x = Matrix::Ones(2, 3);
  EXPECT_THROW(fit_weighted_min_norm(x, Vector::Ones(2), EigenWeighting::identity(4)), ValidationError);
  EXPECT_THROW(fit_weighted_min_norm(x, Vector::Ones(3), EigenWeighting::identity(3)), ValidationError);
  EXPECT_THROW(fit_weighted_ridge(x, Vector::Ones(2), EigenWeighting::identity(3), 0.0), ValidationError);
  EXPECT_THROW(fit_weighted_ridge(x, Vector::Ones(2), EigenWeighting::identity(3), -1.0), ValidationError);
}

TEST(Interpolator, InterpolatesStaysInRangeAndIsScaleInvariant) {
  RngStream rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix x = random_matrix(5, 12, rng);
    const Vector y = random_vector(5, rng);
    const EigenWeighting w(random_matrix(12, 8, rng));
    const Vector b = fit_weighted_min_norm(x, y, w);
    EXPECT_LE((x * b - y).norm(), 1e-8 * y.norm());
    const Matrix& l = w.matrix();
    const Vector proj = l * min_norm_solve(l, b);
    EXPECT_LE((proj - b).norm(), 1e-8 * std::max(1.0, b.norm()));
    for (double c : {7.0, -0.3, 1e-3}) {
      const Vector bc = fit_weighted_min_norm(x, y, EigenWeighting(c * l));
      EXPECT_LE((bc - b).norm(), 1e-10 * b.norm());
    }
  }
}

TEST(Ridge, Examples) {
  Vector y(2);
  y << 2, 2;
  const Vector b = fit_weighted_ridge(Matrix::Identity(2, 2), y, EigenWeighting::identity(2), 1.0);
  EXPECT_NEAR(b(0), 1.0, 1e-14);
  EXPECT_NEAR(b(1), 1.0, 1e-14);
}

TEST(Ridge, ShrinksToZeroForLargePenalty) {
  RngStream rng(22);
  const Matrix x = random_matrix(5, 10, rng);
  const Vector y = random_vector(5, rng);
  const EigenWeighting w(random_matrix(10, 6, rng));
  const double t = 1e8;
  const Vector b = fit_weighted_ridge(x, y, w, t);
  const Matrix a = x * w.matrix();
  EXPECT_LE(b.norm(), (a.transpose() * y).norm() * op_norm(w.matrix()) / t * (1 + 1e-9));
}

TEST(Ridge, PathConvergesToMinNorm) {
  RngStream rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix x = random_matrix(5, 10, rng);
    const Vector y = random_vector(5, rng);
    const EigenWeighting w(random_matrix(10, 10, rng));
    const Vector mn = fit_weighted_min_norm(x, y, w);
    double prev = std::numeric_limits<double>::infinity();
    for (double t : {1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12}) {
      const double gap = (fit_weighted_ridge(x, y, w, t) - mn).norm();
      EXPECT_LE(gap, prev * (1 + 1e-6) + 1e-13);
      prev = gap;
    }
    EXPECT_LE((fit_weighted_ridge(x, y, w, 1e-10) - mn).norm(), 1e-6 * mn.norm());
  }
}
