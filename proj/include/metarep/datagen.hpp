#pragma once

#include <cstdint>
#include <vector>

#include "metarep/linalg.hpp"
#include "metarep/rng.hpp"

namespace metarep {

/// Linear-Gaussian task model: beta ~ N(0, task_cov), x ~ N(0, feature_cov),
/// y = x^T beta + noise_sd * eps.
struct ProblemSpec {
  CovarianceModel feature_cov;
  CovarianceModel task_cov;
  double noise_sd = 0.0;

  ProblemSpec(CovarianceModel feature, CovarianceModel task, double sigma)
      : feature_cov(std::move(feature)), task_cov(std::move(task)), noise_sd(sigma) {
    detail::require(feature_cov.dim() == task_cov.dim(),
                    "ProblemSpec: feature and task covariances have different dimensions");
    detail::require(noise_sd >= 0.0 && std::isfinite(noise_sd), "ProblemSpec: noise_sd must be >= 0");
  }

  Index dim() const noexcept { return feature_cov.dim(); }
};

/// Multi-task training data: T tasks with n1 labelled samples each.
struct MetaTrainSet {
  Matrix tasks;                 // T x d, row i is beta_i
  std::vector<Matrix> features; // T entries, each n1 x d
  Matrix labels;                // T x n1
  double noise_sd = 0.0;
  std::uint64_t seed = 0;

  Index num_tasks() const noexcept { return tasks.rows(); }
  Index samples_per_task() const noexcept { return labels.cols(); }
  Index dim() const noexcept { return tasks.cols(); }
  Index total_samples() const noexcept { return num_tasks() * samples_per_task(); }
};

/// One few-shot task: n2 samples of a freshly drawn beta_star.
struct FewShotSet {
  Vector beta_star;
  Matrix features;  // n2 x d
  Vector labels;    // n2
};

namespace detail {

inline Vector sample_one(const CovarianceModel& cov, RngStream& rng) {
  return sample_gaussian(cov, 1, rng).row(0).transpose();
}

}  // namespace detail

/// Each task i draws from its own substreams ("features", i) and ("noise", i),
/// so task i's data does not depend on T.
inline MetaTrainSet gen_meta_train(const ProblemSpec& spec, Index num_tasks, Index n1, std::uint64_t seed) {
  detail::require(num_tasks >= 1, "gen_meta_train: need T >= 1");
  detail::require(n1 >= 1, "gen_meta_train: need n1 >= 1");
  const RngStream master(seed);
  MetaTrainSet out;
  out.noise_sd = spec.noise_sd;
  out.seed = seed;
  RngStream task_rng = master.split("tasks");
  out.tasks = sample_gaussian(spec.task_cov, num_tasks, task_rng);
  out.labels.resize(num_tasks, n1);
  out.features.reserve(static_cast<std::size_t>(num_tasks));
  for (Index i = 0; i < num_tasks; ++i) {
    RngStream feat_rng = master.split("features", static_cast<std::uint64_t>(i));
    RngStream noise_rng = master.split("noise", static_cast<std::uint64_t>(i));
    Matrix x = sample_gaussian(spec.feature_cov, n1, feat_rng);
    Vector y = x * out.tasks.row(i).transpose();
    for (Index j = 0; j < n1; ++j) y(j) += spec.noise_sd * noise_rng.normal();
    out.labels.row(i) = y.transpose();
    out.features.push_back(std::move(x));
  }
  return out;
}

/// Draws beta_star, the n2 x d design and labels from an explicit stream.
inline FewShotSet gen_few_shot(const ProblemSpec& spec, Index n2, const RngStream& stream) {
  detail::require(n2 >= 1, "gen_few_shot: need n2 >= 1");
  RngStream beta_rng = stream.split("beta");
  RngStream feat_rng = stream.split("features");
  RngStream noise_rng = stream.split("noise");
  FewShotSet out;
  out.beta_star = detail::sample_one(spec.task_cov, beta_rng);
  out.features = sample_gaussian(spec.feature_cov, n2, feat_rng);
  out.labels = out.features * out.beta_star;
  for (Index j = 0; j < n2; ++j) out.labels(j) += spec.noise_sd * noise_rng.normal();
  return out;
}

inline FewShotSet gen_few_shot(const ProblemSpec& spec, Index n2, std::uint64_t seed) {
  return gen_few_shot(spec, n2, RngStream(seed).split("few_shot"));
}

}  // namespace metarep
