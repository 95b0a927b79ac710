#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "metarep/datagen.hpp"
#include "metarep/estimators.hpp"
#include "metarep/io.hpp"
#include "metarep/optrep.hpp"
#include "metarep/parallel.hpp"
#include "metarep/risk.hpp"

namespace metarep {

namespace detail {

inline std::string num(double v) { return format_number(v); }
inline std::string num(Index v) { return std::to_string(v); }

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Equal weights on the top-R canonical directions: U1 (Sigma_F^R)^{-1/2}.
inline EigenWeighting uniform_weighting(const ReductionResult& red) {
  return EigenWeighting(red.basis_u1 * inv_sqrt_spd(CovarianceModel(red.sigma_f_r)));
}

inline ResultTable table_with_config(const ExperimentConfig& cfg, std::vector<std::string> columns) {
  ResultTable t;
  t.metadata = cfg.entries();
  t.columns = std::move(columns);
  return t;
}

class Stopwatch {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Built-in configuration for each named experiment.
inline ExperimentConfig default_config(std::string_view name) {
  ExperimentConfig c;
  c.name = std::string(name);
  c.seed = 20240611;
  if (name == "fig1b") {
    c.task_spectrum = SpectrumDescriptor::bilevel(20, 1.0, 80, 0.1);
    c.set_sweep("R", parse_value_list("45:100:5", "R"));
  } else if (name == "fig3") {
    c.task_spectrum = SpectrumDescriptor::bilevel(20, 1.0, 80, 0.1);
    c.set_sweep("R", parse_value_list("5:100:5", "R"));
    c.set_sweep("iota", {0.01, 0.05, 0.1, 0.3, 1.0});
  } else if (name == "fig4") {
    c.sigma = 0.0;
    c.feature_spectrum = SpectrumDescriptor::bilevel(30, 1.0, 70, 0.0);
    c.task_spectrum = SpectrumDescriptor::bilevel(30, 1.0, 70, 0.0);
    c.set_sweep("iota", parse_value_list("0:0.3:0.05", "iota"));
    c.params = {{"tasks", "50"}, {"n1", "2"}, {"seeds", "50"}};
  } else if (name == "fig5") {
    c.task_spectrum = SpectrumDescriptor::bilevel(20, 1.0, 80, 0.05);
    c.set_sweep("R", parse_value_list("45:100:5", "R"));
    c.set_sweep("n1", {2, 8});
    c.params = {{"tasks", "200"}, {"theta_lower", "0.05"}, {"seeds", "5"}};
  } else if (name == "scaling") {
    c.d = 40;
    c.sigma = 0.0;
    c.task_spectrum = SpectrumDescriptor::bilevel(5, 1.0, 35, 0.0);
    c.set_sweep("N", {400, 1600, 6400, 25600});
    c.set_sweep("n1", {8, 32, 128});
    c.params = {{"mom_n1", "2"}, {"seeds", "50"}, {"subspace_N", "12800"}, {"fixed_tasks", "100"}, {"rank", "5"}};
  } else {
    throw ValidationError("unknown experiment '" + std::string(name) + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Weighted versus unweighted few-shot risk across R.

struct Fig1bPoint {
  Index r = 0;
  RiskEstimate mc_optimal;
  RiskEstimate mc_identity;
  double analytic_optimal[3] = {0, 0, 0};  // indexed by RiskVariant
  double analytic_identity[3] = {0, 0, 0};
  Vector theta;
};

struct Fig1bResult {
  std::vector<Fig1bPoint> points;
  ResultTable table;
  double wall_time_ms = 0.0;
};

inline constexpr RiskVariant kAllVariants[] = {RiskVariant::main, RiskVariant::appendix, RiskVariant::exact};

inline Fig1bResult run_fig1b(const ExperimentConfig& cfg) {
  cfg.validate();
  const detail::Stopwatch clock;
  const ProblemSpec spec = cfg.problem();
  const CovarianceModel ttil = canonical_cov(spec.feature_cov, spec.task_cov);
  const RngStream master(cfg.seed);
  Fig1bResult out;
  out.table = detail::table_with_config(cfg, {"R", "weighting", "method", "risk", "stderr"});
  for (Index r : cfg.int_sweep("R")) {
    detail::require(r > cfg.n2 && r <= cfg.d, "fig1b: every R must satisfy n2 < R <= d");
    const OptimalRep rep = compute_optimal_rep(r, spec.feature_cov, ttil, cfg.sigma, cfg.n2, cfg.variant);
    const EigenWeighting ident = detail::uniform_weighting(rep.reduction);
    const ThetaProfile theta_id = theta_from_weights(Vector::Ones(r), cfg.n2);
    Fig1bPoint p;
    p.r = r;
    p.theta = rep.theta.profile.theta;
    const MonteCarloResult mc = monte_carlo_risk(spec, {rep.weighting, ident}, cfg.n2, cfg.trials,
                                                 master.split("fig1b_mc", static_cast<std::uint64_t>(r)).seed());
    p.mc_optimal = mc.estimates[0];
    p.mc_identity = mc.estimates[1];
    for (RiskVariant v : kAllVariants) {
      const auto k = static_cast<int>(v);
      p.analytic_optimal[k] = analytic_risk(rep.theta.profile, rep.reduction.ttil_diag, rep.reduction.sigma_r, v).value;
      p.analytic_identity[k] = analytic_risk(theta_id, rep.reduction.ttil_diag, rep.reduction.sigma_r, v).value;
    }
    out.table.add_row({detail::num(r), "optimal", "monte_carlo", detail::num(p.mc_optimal.value),
                       detail::num(p.mc_optimal.std_error)});
    out.table.add_row({detail::num(r), "identity", "monte_carlo", detail::num(p.mc_identity.value),
                       detail::num(p.mc_identity.std_error)});
    for (RiskVariant v : kAllVariants) {
      const std::string m(to_string(analytic_method(v)));
      out.table.add_row({detail::num(r), "optimal", m, detail::num(p.analytic_optimal[static_cast<int>(v)]), "0"});
      out.table.add_row({detail::num(r), "identity", m, detail::num(p.analytic_identity[static_cast<int>(v)]), "0"});
    }
    out.points.push_back(std::move(p));
  }
  out.wall_time_ms = clock.elapsed_ms();
  return out;
}

// ---------------------------------------------------------------------------
// Analytic optimal risk over R and the low task-spectrum level iota.

struct Fig3Result {
  std::vector<double> iotas;
  std::vector<Index> ranks;
  Matrix risk;  // iota x R; NaN where R sits at the least-squares pole
  ResultTable table;
  double wall_time_ms = 0.0;
};

inline Fig3Result run_fig3(const ExperimentConfig& cfg) {
  cfg.validate();
  const detail::Stopwatch clock;
  Fig3Result out;
  out.iotas = cfg.sweep("iota");
  out.ranks = cfg.int_sweep("R");
  out.risk = Matrix::Constant(static_cast<Index>(out.iotas.size()), static_cast<Index>(out.ranks.size()),
                              std::numeric_limits<double>::quiet_NaN());
  out.table = detail::table_with_config(cfg, {"iota", "R", "regime", "risk"});
  const CovarianceModel sigma_f = cfg.feature_spectrum.covariance(cfg.d);
  for (std::size_t a = 0; a < out.iotas.size(); ++a) {
    const CovarianceModel sigma_t = cfg.task_spectrum.with_low_value(out.iotas[a]).covariance(cfg.d);
    const CovarianceModel ttil = canonical_cov(sigma_f, sigma_t);
    for (std::size_t b = 0; b < out.ranks.size(); ++b) {
      const Index r = out.ranks[b];
      detail::require(r >= 1 && r <= cfg.d, "fig3: R out of range");
      std::string regime;
      double value = std::numeric_limits<double>::quiet_NaN();
      if (r > cfg.n2) {
        const OptimalRep rep = compute_optimal_rep(r, sigma_f, ttil, cfg.sigma, cfg.n2, cfg.variant);
        value = analytic_risk(rep.theta.profile, rep.reduction.ttil_diag, rep.reduction.sigma_r, cfg.variant).value;
        regime = "weighted_min_norm";
      } else if (r + 1 < cfg.n2) {
        const ReductionResult red = compute_reduction(r, sigma_f, ttil, cfg.sigma);
        value = projected_least_squares_risk(r, cfg.n2, red.sigma_r).value;
        regime = "least_squares";
      } else {
        continue;  // interpolation threshold: risk is infinite
      }
      out.risk(static_cast<Index>(a), static_cast<Index>(b)) = value;
      out.table.add_row({detail::num(out.iotas[a]), detail::num(r), regime, detail::num(value)});
    }
  }
  out.wall_time_ms = clock.elapsed_ms();
  return out;
}

// ---------------------------------------------------------------------------
// Moment-estimator error versus the feature-spectrum tail level iota.

struct Fig4Point {
  double iota = 0.0;
  double mean_error = 0.0;
  double std_error = 0.0;
  Index seeds = 0;
};

struct Fig4Result {
  std::vector<Fig4Point> points;
  ResultTable table;
  double wall_time_ms = 0.0;
};

inline Fig4Result run_fig4(const ExperimentConfig& cfg) {
  cfg.validate();
  const detail::Stopwatch clock;
  const Index tasks = cfg.param_int("tasks", 50);
  const Index n1 = cfg.param_int("n1", 2);
  const Index seeds = cfg.param_int("seeds", 50);
  detail::require(seeds >= 2, "fig4: seeds must be >= 2");
  detail::require(n1 >= 2, "fig4: the moment estimator needs n1 >= 2");
  const RngStream master(cfg.seed);
  Fig4Result out;
  out.table = detail::table_with_config(cfg, {"iota", "err_opnorm", "stderr", "seeds"});
  const CovarianceModel sigma_t = cfg.task_spectrum.covariance(cfg.d);
  for (double iota : cfg.sweep("iota")) {
    const ProblemSpec spec(cfg.feature_spectrum.with_low_value(iota).covariance(cfg.d), sigma_t, cfg.sigma);
    const Matrix m = spec.feature_cov.matrix() * sigma_t.matrix() * spec.feature_cov.matrix();
    std::vector<double> errors(static_cast<std::size_t>(seeds));
    // Seed s is shared across iota so the trend is read off common draws.
    detail::parallel_for(errors.size(), [&](std::size_t s) {
      const MetaTrainSet data = gen_meta_train(spec, tasks, n1, master.split("fig4", s).seed());
      errors[s] = op_norm(mom_m_hat(data).m_hat - m);
    });
    Fig4Point p{iota, detail::mean_of(errors), detail::stderr_of(errors), seeds};
    out.table.add_row({detail::num(iota), detail::num(p.mean_error), detail::num(p.std_error), detail::num(seeds)});
    out.points.push_back(p);
  }
  out.wall_time_ms = clock.elapsed_ms();
  return out;
}

// ---------------------------------------------------------------------------
// End to end: estimate M, build the weighting, measure few-shot risk.

struct Fig5Point {
  Index n1 = 0;
  Index r = 0;
  RiskEstimate estimated;  // averaged over phase-1 repetitions
  RiskEstimate oracle;
  RiskEstimate gap;        // paired differences
  double estimation_error = 0.0;  // mean ||M_hat - M||_op
  double bound = 0.0;             // e2e_bound at the mean estimation error
};

struct Fig5Result {
  std::vector<Fig5Point> points;
  ResultTable table;
  double wall_time_ms = 0.0;
};

inline Fig5Result run_fig5(const ExperimentConfig& cfg) {
  cfg.validate();
  const detail::Stopwatch clock;
  const Index tasks = cfg.param_int("tasks", 200);
  const Index reps = cfg.param_int("seeds", 5);
  const double theta_lower = cfg.param_double("theta_lower", 0.05);
  detail::require(reps >= 1, "fig5: seeds must be >= 1");
  const ProblemSpec spec = cfg.problem();
  const CovarianceModel ttil = canonical_cov(spec.feature_cov, spec.task_cov);
  const Matrix m_true = spec.feature_cov.matrix() * spec.task_cov.matrix() * spec.feature_cov.matrix();
  const std::vector<Index> ranks = cfg.int_sweep("R");
  const RngStream master(cfg.seed);

  std::vector<OptimalRep> oracle;
  for (Index r : ranks) {
    detail::require(r > cfg.n2 && r <= cfg.d, "fig5: every R must satisfy n2 < R <= d");
    oracle.push_back(compute_optimal_rep(r, spec.feature_cov, ttil, cfg.sigma, cfg.n2, cfg.variant, theta_lower));
  }

  Fig5Result out;
  out.table = detail::table_with_config(cfg, {"n1", "N", "R", "method", "risk", "stderr", "est_error", "bound"});
  for (Index n1 : cfg.int_sweep("n1")) {
    detail::require(n1 >= 2, "fig5: n1 must be >= 2");
    const std::size_t nr = ranks.size();
    std::vector<std::vector<double>> est(nr), orc(nr), gap(nr);
    std::vector<double> err(static_cast<std::size_t>(reps));
    for (Index rep = 0; rep < reps; ++rep) {
      const MetaTrainSet data = gen_meta_train(spec, tasks, n1, master.split("phase1", static_cast<std::uint64_t>(rep)).seed());
      const Matrix m_hat = mom_m_hat(data).m_hat;
      err[static_cast<std::size_t>(rep)] = op_norm(m_hat - m_true);
      const CovarianceModel ttil_hat = canonical_from_moment(m_hat, spec.feature_cov);
      for (std::size_t k = 0; k < nr; ++k) {
        const OptimalRep learned =
            compute_optimal_rep(ranks[k], spec.feature_cov, ttil_hat, cfg.sigma, cfg.n2, cfg.variant, theta_lower);
        const std::uint64_t mc_seed =
            master.split("fig5_mc", static_cast<std::uint64_t>(rep)).split("R", static_cast<std::uint64_t>(ranks[k])).seed();
        const MonteCarloResult mc = monte_carlo_risk(spec, {learned.weighting, oracle[k].weighting}, cfg.n2, cfg.trials, mc_seed);
        for (Index t = 0; t < cfg.trials; ++t) {
          est[k].push_back(mc.losses(t, 0));
          orc[k].push_back(mc.losses(t, 1));
          gap[k].push_back(mc.losses(t, 0) - mc.losses(t, 1));
        }
      }
    }
    const double mean_err = detail::mean_of(err);
    for (std::size_t k = 0; k < nr; ++k) {
      Fig5Point p;
      p.n1 = n1;
      p.r = ranks[k];
      p.estimated = {detail::mean_of(est[k]), RiskMethod::monte_carlo, detail::stderr_of(est[k])};
      p.oracle = {detail::mean_of(orc[k]), RiskMethod::monte_carlo, detail::stderr_of(orc[k])};
      p.gap = {detail::mean_of(gap[k]), RiskMethod::monte_carlo, detail::stderr_of(gap[k])};
      p.estimation_error = mean_err;
      p.bound = e2e_bound(p.r, cfg.n2, cfg.d, theta_lower, mean_err);
      const std::string big_n = detail::num(tasks * n1);
      for (auto [name, est_value] : {std::pair<const char*, const RiskEstimate*>{"estimated", &p.estimated},
                                     {"oracle", &p.oracle},
                                     {"gap", &p.gap}}) {
        out.table.add_row({detail::num(n1), big_n, detail::num(p.r), name, detail::num(est_value->value),
                           detail::num(est_value->std_error), detail::num(mean_err), detail::num(p.bound)});
      }
      out.points.push_back(std::move(p));
    }
  }
  out.wall_time_ms = clock.elapsed_ms();
  return out;
}

// ---------------------------------------------------------------------------
// Estimator error rates.

struct ScalingPoint {
  std::string path;  // "mom", "task_average", "task_average_fixed_T"
  Index n = 0;       // total samples N
  Index n1 = 0;
  Index tasks = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
};

struct ScalingResult {
  std::vector<ScalingPoint> points;
  double mom_slope = 0.0;                  // log error vs log N
  double task_average_slope = 0.0;         // log error vs log n1, N fixed
  double task_average_fixed_t_slope = 0.0; // log error vs log n1, T fixed
  ResultTable table;
  double wall_time_ms = 0.0;
};

inline ScalingResult run_scaling(const ExperimentConfig& cfg) {
  cfg.validate();
  const detail::Stopwatch clock;
  const ProblemSpec spec = cfg.problem();
  const Index mom_n1 = cfg.param_int("mom_n1", 2);
  const Index seeds = cfg.param_int("seeds", 50);
  const Index subspace_n = cfg.param_int("subspace_N", 12800);
  const Index fixed_tasks = cfg.param_int("fixed_tasks", 100);
  const Index rank = cfg.param_int("rank", 5);
  detail::require(seeds >= 2, "scaling: seeds must be >= 2");
  detail::require(rank >= 1 && rank < cfg.d, "scaling: rank must lie in [1, d)");
  const CovarianceModel m_true(spec.feature_cov.matrix() * spec.task_cov.matrix() * spec.feature_cov.matrix());
  const Subspace target(m_true.eigvecs().leftCols(rank));
  const RngStream master(cfg.seed);

  ScalingResult out;
  out.table = detail::table_with_config(cfg, {"path", "N", "n1", "T", "error", "stderr", "seeds"});

  auto measure = [&](const std::string& path, Index tasks, Index n1) {
    std::vector<double> errors(static_cast<std::size_t>(seeds));
    detail::parallel_for(errors.size(), [&](std::size_t s) {
      const MetaTrainSet data =
          gen_meta_train(spec, tasks, n1, master.split(path, s).split("N", static_cast<std::uint64_t>(tasks * n1)).seed());
      if (path == "mom") {
        errors[s] = op_norm(mom_m_hat(data).m_hat - m_true.matrix());
      } else {
        errors[s] = principal_angle_sin(task_average_subspace(task_average_b_hat(data), rank), target);
      }
    });
    ScalingPoint p{path, tasks * n1, n1, tasks, detail::mean_of(errors), detail::stderr_of(errors)};
    out.table.add_row({path, detail::num(p.n), detail::num(n1), detail::num(tasks), detail::num(p.mean_error),
                       detail::num(p.std_error), detail::num(seeds)});
    out.points.push_back(p);
    return p;
  };

  std::vector<double> xs, ys;
  for (Index n : cfg.int_sweep("N")) {
    detail::require(n % mom_n1 == 0, "scaling: every N must be a multiple of mom_n1");
    const ScalingPoint p = measure("mom", n / mom_n1, mom_n1);
    xs.push_back(static_cast<double>(n));
    ys.push_back(p.mean_error);
  }
  out.mom_slope = detail::loglog_slope(xs, ys);

  xs.clear();
  ys.clear();
  std::vector<double> ys_fixed;
  for (Index n1 : cfg.int_sweep("n1")) {
    detail::require(n1 >= 1 && subspace_n % n1 == 0, "scaling: subspace_N must be a multiple of every n1");
    xs.push_back(static_cast<double>(n1));
    ys.push_back(measure("task_average", subspace_n / n1, n1).mean_error);
    ys_fixed.push_back(measure("task_average_fixed_T", fixed_tasks, n1).mean_error);
  }
  out.task_average_slope = detail::loglog_slope(xs, ys);
  out.task_average_fixed_t_slope = detail::loglog_slope(xs, ys_fixed);
  for (auto [path, slope] : {std::pair<const char*, double>{"mom_slope_vs_N", out.mom_slope},
                             {"task_average_slope_vs_n1", out.task_average_slope},
                             {"task_average_fixed_T_slope_vs_n1", out.task_average_fixed_t_slope}}) {
    out.table.add_row({path, "", "", "", detail::num(slope), "", ""});
  }
  out.wall_time_ms = clock.elapsed_ms();
  return out;
}

/// Runs a named experiment and returns its CSV table.
inline ResultTable run_experiment(std::string_view name, const ExperimentConfig& cfg) {
  if (name == "fig1b") return run_fig1b(cfg).table;
  if (name == "fig3") return run_fig3(cfg).table;
  if (name == "fig4") return run_fig4(cfg).table;
  if (name == "fig5") return run_fig5(cfg).table;
  if (name == "scaling") return run_scaling(cfg).table;
  throw ValidationError("unknown experiment '" + std::string(name) + "'");
}

}  // namespace metarep
