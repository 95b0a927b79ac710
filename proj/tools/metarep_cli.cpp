// Command-line front end for data generation, estimation, weighting
// construction, risk evaluation and the experiment runners.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "metarep/metarep.hpp"

namespace {

using namespace metarep;
using nlohmann::ordered_json;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<Index> trials;
  std::string out;
  std::string variant;
  bool describe = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Configuration file (key = value lines)");
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--trials", o.trials, "Monte Carlo trials (overrides the config)");
  cmd->add_option("--out", o.out, "Output path; stdout when omitted");
  cmd->add_option("--variant", o.variant, "Analytic risk variant")->check(CLI::IsMember({"main", "appendix", "exact"}));
  cmd->add_flag("--describe", o.describe, "Print the resolved configuration as JSON and exit");
}

ExperimentConfig resolve(const CommonOptions& o, std::string_view fallback) {
  ExperimentConfig cfg = o.config_path.empty() ? default_config(fallback) : ExperimentConfig::load(o.config_path);
  if (cfg.name.empty()) cfg.name = std::string(fallback);
  if (o.seed) cfg.seed = *o.seed;
  if (o.trials) cfg.trials = *o.trials;
  if (!o.out.empty()) cfg.output_path = o.out;
  if (!o.variant.empty()) cfg.variant = parse_risk_variant(o.variant);
  cfg.validate();
  return cfg;
}

ordered_json describe(const ExperimentConfig& cfg) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : cfg.entries()) j[k] = v;
  return j;
}

void emit(const ResultTable& t, const std::string& path) {
  if (path.empty()) {
    t.write(std::cout);
  } else {
    t.save(path);
    std::cerr << "wrote " << path << '\n';
  }
}

ordered_json risk_json(const RiskEstimate& r) {
  return ordered_json{{"method", std::string(to_string(r.method))}, {"value", r.value}, {"stderr", r.std_error}};
}

ordered_json vector_json(const Vector& v) { return ordered_json(std::vector<double>(v.data(), v.data() + v.size())); }

int cmd_gen(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o, "fig5");
  if (o.describe) return std::cout << describe(cfg).dump(2) << '\n', 0;
  const MetaTrainSet data = gen_meta_train(cfg.problem(), cfg.param_int("tasks", 200), cfg.param_int("n1", 2), cfg.seed);
  emit(dataset_table(data), cfg.output_path);
  return 0;
}

int cmd_estimate(const CommonOptions& o, const std::string& data_path, const std::string& estimator, Index rank) {
  if (o.describe) {
    std::cout << ordered_json{{"data", data_path}, {"estimator", estimator}, {"rank", rank}}.dump(2) << '\n';
    return 0;
  }
  detail::require(!data_path.empty(), "estimate: --data is required");
  const MetaTrainSet data = table_dataset(ResultTable::load(data_path));
  Matrix result;
  if (estimator == "mom") {
    const MomEstimate m = mom_m_hat(data);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
    result = m.m_hat;
  } else if (estimator == "g_hat") {
    result = g_hat(data).debiased;
  } else if (estimator == "g_hat_raw") {
    result = g_hat(data).raw;
  } else if (estimator == "sigma_f") {
    result = sigma_f_hat(data).matrix();
  } else if (estimator == "task_average") {
    result = task_average_subspace(task_average_b_hat(data), rank).basis();
  } else {
    throw ValidationError("estimate: unknown estimator '" + estimator + "'");
  }
  emit(matrix_table(result), o.out);
  return 0;
}

int cmd_optrep(const CommonOptions& o, Index rank, const std::string& moment_path, std::optional<double> theta_lower) {
  const ExperimentConfig cfg = resolve(o, "fig1b");
  if (o.describe) return std::cout << describe(cfg).dump(2) << '\n', 0;
  const ProblemSpec spec = cfg.problem();
  const CovarianceModel ttil = moment_path.empty()
                                   ? canonical_cov(spec.feature_cov, spec.task_cov)
                                   : canonical_from_moment(table_matrix(ResultTable::load(moment_path)), spec.feature_cov);
  const OptimalRep rep = compute_optimal_rep(rank, spec.feature_cov, ttil, cfg.sigma, cfg.n2, cfg.variant, theta_lower);
  ordered_json j;
  j["R"] = rank;
  j["n2"] = cfg.n2;
  j["variant"] = std::string(to_string(cfg.variant));
  j["sigma_R"] = rep.reduction.sigma_r;
  j["objective"] = rep.theta.objective;
  j["iterations"] = rep.theta.iterations;
  j["theta"] = vector_json(rep.theta.profile.theta);
  j["lambda_R"] = vector_json(rep.lambda_r);
  std::cout << j.dump(2) << '\n';
  if (!cfg.output_path.empty()) emit(matrix_table(rep.weighting.matrix()), cfg.output_path);
  return 0;
}

int cmd_risk(const CommonOptions& o, Index rank) {
  const ExperimentConfig cfg = resolve(o, "fig1b");
  if (o.describe) return std::cout << describe(cfg).dump(2) << '\n', 0;
  const ProblemSpec spec = cfg.problem();
  const CovarianceModel ttil = canonical_cov(spec.feature_cov, spec.task_cov);
  const OptimalRep rep = compute_optimal_rep(rank, spec.feature_cov, ttil, cfg.sigma, cfg.n2, cfg.variant);
  const ThetaProfile uniform = theta_from_weights(Vector::Ones(rank), cfg.n2);
  const MonteCarloResult mc = monte_carlo_risk(
      spec, {rep.weighting, EigenWeighting(rep.reduction.basis_u1 * inv_sqrt_spd(CovarianceModel(rep.reduction.sigma_f_r)))},
      cfg.n2, cfg.trials, cfg.seed);
  ordered_json j;
  j["R"] = rank;
  j["n2"] = cfg.n2;
  j["trials"] = cfg.trials;
  for (auto [name, theta, k] : {std::tuple<const char*, const ThetaProfile*, int>{"optimal", &rep.theta.profile, 0},
                                {"uniform", &uniform, 1}}) {
    ordered_json w;
    w["monte_carlo"] = risk_json(mc.estimates[static_cast<std::size_t>(k)]);
    for (RiskVariant v : kAllVariants)
      w[std::string(to_string(v))] = analytic_risk(*theta, rep.reduction.ttil_diag, rep.reduction.sigma_r, v).value;
    j[name] = w;
  }
  const std::string text = j.dump(2) + "\n";
  if (cfg.output_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream(cfg.output_path, std::ios::binary) << text;
    std::cerr << "wrote " << cfg.output_path << '\n';
  }
  return 0;
}

int cmd_experiment(const CommonOptions& o, const std::string& name) {
  const ExperimentConfig cfg = resolve(o, name);
  if (o.describe) return std::cout << describe(cfg).dump(2) << '\n', 0;
  const auto start = std::chrono::steady_clock::now();
  const ResultTable t = run_experiment(name, cfg);
  emit(t, cfg.output_path);
  std::cerr << name << ": " << t.rows.size() << " rows in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted min-norm representations for few-shot linear regression"};
  app.require_subcommand(1);

  CommonOptions gen_opt, est_opt, opt_opt, risk_opt, exp_opt;
  auto* gen = app.add_subcommand("gen", "Generate a meta-training dataset as CSV");
  add_common(gen, gen_opt);

  std::string data_path, estimator = "mom";
  Index est_rank = 1;
  auto* est = app.add_subcommand("estimate", "Estimate M, Sigma_F or the task subspace from a dataset CSV");
  add_common(est, est_opt);
  est->add_option("--data", data_path, "Dataset CSV written by `gen`");
  est->add_option("--estimator", estimator, "mom | g_hat | g_hat_raw | sigma_f | task_average");
  est->add_option("--rank", est_rank, "Subspace rank for task_average");

  Index opt_rank = 0;
  std::string moment_path;
  std::optional<double> theta_lower;
  auto* opt = app.add_subcommand("optrep", "Compute the optimal weighting for rank R");
  add_common(opt, opt_opt);
  opt->add_option("--rank", opt_rank, "Representation rank R")->required();
  opt->add_option("--moment", moment_path, "Matrix CSV with an estimate of Sigma_F Sigma_T Sigma_F");
  opt->add_option("--theta-lower", theta_lower, "Robust lower bound on theta");

  Index risk_rank = 0;
  auto* risk = app.add_subcommand("risk", "Analytic and Monte Carlo risk of optimal and uniform weightings");
  add_common(risk, risk_opt);
  risk->add_option("--rank", risk_rank, "Representation rank R")->required();

  std::string exp_name;
  auto* exp = app.add_subcommand("experiment", "Run a named experiment");
  add_common(exp, exp_opt);
  exp->add_option("name", exp_name, "Experiment name")
      ->required()
      ->check(CLI::IsMember({"fig1b", "fig3", "fig4", "fig5", "scaling"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen(gen_opt);
    if (*est) return cmd_estimate(est_opt, data_path, estimator, est_rank);
    if (*opt) return cmd_optrep(opt_opt, opt_rank, moment_path, theta_lower);
    if (*risk) return cmd_risk(risk_opt, risk_rank);
    if (*exp) return cmd_experiment(exp_opt, exp_name);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NonconvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
