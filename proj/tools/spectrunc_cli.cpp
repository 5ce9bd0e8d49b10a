#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "spectrunc/cli.hpp"
#include "spectrunc/common.hpp"

namespace {

using namespace spectrunc;

struct Args {
  std::string model = "circle";
  int dimension = 2;
  double theta = 0.0;  // 2d skew parameter; full matrices go via config files
  std::vector<double> df;
  std::string op, op_b;
  std::vector<double> lambda_ladder, t_ladder, time_ladder, f_poly;
  std::vector<std::size_t> horizons;
  std::string estimator = "truncated";
  double s = 0.0, beta = 0.0, d_override = 0.0, lambda = 0.0;
  std::size_t horizon = 0;
  double drift_tol = 1e-2;
  std::string out;
  std::string config_path;
};

void add_model_flags(CLI::App* cmd, Args& a) {
  cmd->add_option("--model", a.model,
                  "circle | toeplitz | nc_torus | almost_commutative");
  cmd->add_option("--dimension", a.dimension, "torus dimension");
  cmd->add_option("--theta", a.theta, "2d torus skew parameter");
  cmd->add_option("--df", a.df, "internal Dirac block, row-major")
      ->delimiter(',');
  cmd->add_option("--out", a.out, "output directory for CSV + summary");
}

void add_ladder_flags(CLI::App* cmd, Args& a) {
  cmd->add_option("--lambda-ladder", a.lambda_ladder, "increasing cutoffs")
      ->delimiter(',');
  cmd->add_option("--horizons", a.horizons, "diagonal index checkpoints")
      ->delimiter(',');
  cmd->add_option("--t-ladder", a.t_ladder, "decreasing heat/Gibbs times")
      ->delimiter(',');
  cmd->add_option("--drift-tol", a.drift_tol, "ladder stabilization tolerance");
}

cli::ModelConfig model_config(const Args& a) {
  cli::ModelConfig m;
  m.name = a.model;
  m.dimension = a.dimension;
  if (a.theta != 0.0) {
    if (a.dimension != 2)
      throw std::invalid_argument("--theta covers dimension 2 only");
    m.theta = {0.0, a.theta, -a.theta, 0.0};
  }
  m.d_f_re = a.df;
  return m;
}

int run_config(const cli::ExperimentConfig& cfg, bool print_summary) {
  cli::RunResult res = cli::run_experiment(cfg);
  cli::write_outputs(cfg, res);
  if (print_summary || res.jobs.empty())
    std::cout << res.summary.dump(2) << "\n";
  else
    std::cout << res.summary["results"][0].dump(2) << "\n";
  return res.exit_code;
}

int dispatch(const std::string& kind, const Args& a) {
  cli::ExperimentConfig cfg;
  cfg.model = model_config(a);
  cfg.output_dir = a.out;
  cli::JobConfig j;
  j.kind = kind;
  j.op = a.op;
  j.op_b = a.op_b;
  j.lambda_ladder = a.lambda_ladder;
  j.horizons = a.horizons;
  j.t_ladder = a.t_ladder;
  j.time_ladder = a.time_ladder;
  j.f_poly = a.f_poly;
  j.s = a.s;
  j.beta = a.beta;
  j.d_override = a.d_override;
  j.lambda = a.lambda;
  j.horizon = a.horizon;
  j.drift_tol = a.drift_tol;
  cfg.jobs.push_back(std::move(j));
  return run_config(cfg, false);
}

nlohmann::json error_record(const char* type, const std::exception& e) {
  return nlohmann::json{{"error", {{"type", type}, {"what", e.what()}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"functionals of spectrally truncated operators"};
  app.require_subcommand(1);
  Args a;

  auto* weyl = app.add_subcommand("weyl", "fit N(lambda) ~ C lambda^d");
  add_model_flags(weyl, a);
  add_ladder_flags(weyl, a);

  auto* integrate =
      app.add_subcommand("integrate", "normalized integral estimators");
  add_model_flags(integrate, a);
  add_ladder_flags(integrate, a);
  integrate->add_option("--op", a.op, "operator expression");
  integrate->add_option(
      "--estimator", a.estimator,
      "truncated | log_mean | dixmier | weighted_dixmier | heat");
  integrate->add_option("--s", a.s, "weighted Dixmier order");
  integrate->add_option("--d-override", a.d_override, "dixmier power override");

  auto* szego = app.add_subcommand("szego", "compression vs symbol functional");
  add_model_flags(szego, a);
  add_ladder_flags(szego, a);
  szego->add_option("--op", a.op, "operator expression");
  szego->add_option("--f-poly", a.f_poly, "coefficients of x^1..x^p")
      ->delimiter(',');

  auto* widom = app.add_subcommand("widom", "cross-term Hilbert-Schmidt decay");
  add_model_flags(widom, a);
  add_ladder_flags(widom, a);
  widom->add_option("--op", a.op, "first operator");
  widom->add_option("--op-b", a.op_b, "second operator");

  auto* qe = app.add_subcommand("qe", "diagonal variance and density-one scan");
  add_model_flags(qe, a);
  add_ladder_flags(qe, a);
  qe->add_option("--op", a.op, "operator expression");

  auto* froh = app.add_subcommand("frohlich", "Gibbs-weighted mean toward beta");
  add_model_flags(froh, a);
  add_ladder_flags(froh, a);
  froh->add_option("--op", a.op, "operator expression");
  froh->add_option("--beta", a.beta, "summability abscissa");

  auto* tavg = app.add_subcommand("timeavg", "flow-averaged square criterion");
  add_model_flags(tavg, a);
  add_ladder_flags(tavg, a);
  tavg->add_option("--op", a.op, "operator expression");
  tavg->add_option("--time-ladder", a.time_ladder, "averaging horizons T")
      ->delimiter(',');
  tavg->add_option("--lambda", a.lambda, "truncation cutoff");
  tavg->add_option("--horizon", a.horizon, "diagonal horizon");

  auto* run = app.add_subcommand("run", "execute a JSON experiment config");
  run->add_option("config", a.config_path, "config path")->required();
  run->add_option("--out", a.out, "override output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      cli::ExperimentConfig cfg = cli::load_config(a.config_path);
      if (!a.out.empty()) cfg.output_dir = a.out;
      return run_config(cfg, true);
    }
    if (weyl->parsed()) return dispatch("weyl", a);
    if (integrate->parsed()) return dispatch(a.estimator, a);
    if (szego->parsed()) return dispatch("szego", a);
    if (widom->parsed()) return dispatch("widom", a);
    if (qe->parsed()) return dispatch("qe", a);
    if (froh->parsed()) return dispatch("frohlich", a);
    return dispatch("timeavg", a);
  } catch (const spectrunc::ResourceLimitError& e) {
    std::cout << error_record("resource_limit", e).dump(2) << "\n";
    return 3;
  } catch (const spectrunc::UnsupportedOperatorError& e) {
    std::cout << error_record("unsupported_operator", e).dump(2) << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cout << error_record("invalid_config", e).dump(2) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cout << error_record("internal", e).dump(2) << "\n";
    return 1;
  }
}
