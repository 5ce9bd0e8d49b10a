#include "spectrunc/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "spectrunc/ergo.hpp"
#include "spectrunc/expr.hpp"
#include "spectrunc/integrals.hpp"

namespace spectrunc::cli {

using nlohmann::json;

json to_json(const ModelConfig& m) {
  return json{{"name", m.name},
              {"dimension", m.dimension},
              {"theta", m.theta},
              {"d_f_re", m.d_f_re},
              {"d_f_im", m.d_f_im}};
}

json to_json(const Assertion& a) {
  return json{{"field", a.field},
              {"target", a.target},
              {"abs_tol", a.abs_tol},
              {"rel_tol", a.rel_tol}};
}

json to_json(const JobConfig& j) {
  return json{{"kind", j.kind},
              {"name", j.name},
              {"op", j.op},
              {"op_b", j.op_b},
              {"lambda_ladder", j.lambda_ladder},
              {"horizons", j.horizons},
              {"t_ladder", j.t_ladder},
              {"time_ladder", j.time_ladder},
              {"f_poly", j.f_poly},
              {"s", j.s},
              {"beta", j.beta},
              {"d_override", j.d_override},
              {"lambda", j.lambda},
              {"horizon", j.horizon},
              {"drift_tol", j.drift_tol},
              {"check", j.check ? to_json(*j.check) : json(nullptr)}};
}

json to_json(const ExperimentConfig& c) {
  json jobs = json::array();
  for (const JobConfig& j : c.jobs) jobs.push_back(to_json(j));
  return json{{"schema_version", c.schema_version},
              {"seed", c.seed},
              {"model", to_json(c.model)},
              {"output_dir", c.output_dir},
              {"jobs", jobs}};
}

ExperimentConfig config_from_json(const json& j) {
  try {
    ExperimentConfig c;
    c.schema_version = j.value("schema_version", 1);
    if (c.schema_version != 1)
      throw std::invalid_argument("config: unsupported schema_version " +
                                  std::to_string(c.schema_version));
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("model")) {
      const json& m = j.at("model");
      c.model.name = m.value("name", std::string("circle"));
      c.model.dimension = m.value("dimension", 2);
      c.model.theta = m.value("theta", std::vector<double>{});
      c.model.d_f_re = m.value("d_f_re", std::vector<double>{});
      c.model.d_f_im = m.value("d_f_im", std::vector<double>{});
    }
    c.output_dir = j.value("output_dir", std::string());
    for (const json& q : j.value("jobs", json::array())) {
      JobConfig jc;
      jc.kind = q.at("kind").get<std::string>();
      jc.name = q.value("name", std::string());
      jc.op = q.value("op", std::string());
      jc.op_b = q.value("op_b", std::string());
      jc.lambda_ladder = q.value("lambda_ladder", std::vector<double>{});
      jc.horizons = q.value("horizons", std::vector<std::size_t>{});
      jc.t_ladder = q.value("t_ladder", std::vector<double>{});
      jc.time_ladder = q.value("time_ladder", std::vector<double>{});
      jc.f_poly = q.value("f_poly", std::vector<double>{});
      jc.s = q.value("s", 0.0);
      jc.beta = q.value("beta", 0.0);
      jc.d_override = q.value("d_override", 0.0);
      jc.lambda = q.value("lambda", 0.0);
      jc.horizon = q.value("horizon", std::size_t{0});
      jc.drift_tol = q.value("drift_tol", 1e-2);
      if (q.contains("check") && !q.at("check").is_null()) {
        Assertion a;
        const json& k = q.at("check");
        a.field = k.value("field", std::string("value"));
        a.target = k.value("target", 0.0);
        a.abs_tol = k.value("abs_tol", 0.0);
        a.rel_tol = k.value("rel_tol", 0.0);
        jc.check = a;
      }
      c.jobs.push_back(std::move(jc));
    }
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

std::shared_ptr<const models::SpectralModel> make_model(const ModelConfig& m) {
  if (m.name == "circle") return models::make_circle();
  if (m.name == "toeplitz") return models::make_toeplitz();
  if (m.name == "nc_torus") {
    int d = m.dimension;
    if (d < 1)
      throw std::invalid_argument("nc_torus: dimension must be positive");
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(d, d);
    if (!m.theta.empty()) {
      if (m.theta.size() != std::size_t(d) * std::size_t(d))
        throw std::invalid_argument("nc_torus: theta needs dimension^2 entries");
      for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) theta(i, k) = m.theta[std::size_t(i) * d + k];
    }
    return models::make_nc_torus(d, theta);
  }
  if (m.name == "almost_commutative") {
    std::size_t n2 = m.d_f_re.size();
    std::size_t n = std::size_t(std::llround(std::sqrt(double(n2))));
    if (n == 0 || n * n != n2)
      throw std::invalid_argument(
          "almost_commutative: d_f_re must be a nonempty square matrix");
    if (!m.d_f_im.empty() && m.d_f_im.size() != n2)
      throw std::invalid_argument(
          "almost_commutative: d_f_im must match d_f_re in size");
    Eigen::MatrixXcd df(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        df(Eigen::Index(i), Eigen::Index(k)) =
            cplx(m.d_f_re[i * n + k],
                 m.d_f_im.empty() ? 0.0 : m.d_f_im[i * n + k]);
    return models::make_almost_commutative(df);
  }
  throw std::invalid_argument("unknown model: " + m.name);
}

namespace {

models::MatrixOracle compile_op(
    const std::shared_ptr<const models::SpectralModel>& model,
    const JobConfig& jc, const std::string& src) {
  if (src.empty())
    throw std::invalid_argument(jc.kind + ": missing operator expression");
  return expr::compile(src, model);
}

std::vector<double> or_default(const std::vector<double>& v,
                               std::vector<double> fallback) {
  return v.empty() ? std::move(fallback) : v;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.schema_version != 1)
    throw std::invalid_argument("config: unsupported schema_version");
  auto model = make_model(cfg.model);

  RunResult out;
  json results = json::array();
  for (std::size_t i = 0; i < cfg.jobs.size(); ++i) {
    const JobConfig& jc = cfg.jobs[i];
    JobResult r;
    r.kind = jc.kind;
    r.name = jc.name.empty() ? jc.kind + "_" + std::to_string(i) : jc.name;

    integrals::EstimatorOptions opts;
    opts.drift_tol = jc.drift_tol;
    opts.inputs = jc.op;

    std::map<std::string, double> fields;
    auto finish_est = [&](const integrals::EstimateReport& er) {
      r.report = integrals::to_json(er);
      std::string csv = integrals::csv_header();
      integrals::append_csv(er, csv);
      r.csv = std::move(csv);
      fields["value"] = er.value.real();
      fields["value_im"] = er.value.imag();
      fields["drift"] = er.drift;
    };

    if (jc.kind == "weyl") {
      auto fit = integrals::weyl_fit(
          *model, or_default(jc.lambda_ladder, integrals::default_lambda_ladder()));
      r.report = integrals::to_json(fit);
      std::string csv = "lambda,count\n";
      for (double lam : fit.ladder)
        csv += format_double(lam) + "," + format_double(model->counting(lam)) +
               "\n";
      r.csv = std::move(csv);
      fields["value"] = fit.constant;
      fields["constant"] = fit.constant;
      fields["dimension"] = fit.dimension;
      fields["residual"] = fit.residual;
      fields["trace_omega"] = fit.trace_omega;
    } else if (jc.kind == "truncated") {
      finish_est(integrals::truncated_integral(
          *model, compile_op(model, jc, jc.op),
          or_default(jc.lambda_ladder, integrals::default_lambda_ladder()),
          opts));
    } else if (jc.kind == "log_mean") {
      auto horizons = jc.horizons.empty() ? integrals::default_horizon_ladder()
                                          : jc.horizons;
      finish_est(integrals::log_mean_diagonal(
          *model, compile_op(model, jc, jc.op), horizons, opts));
    } else if (jc.kind == "dixmier") {
      auto horizons = jc.horizons.empty() ? integrals::default_horizon_ladder()
                                          : jc.horizons;
      std::optional<double> dov;
      if (jc.d_override > 0.0) dov = jc.d_override;
      finish_est(integrals::dixmier_diagonal(
          *model, compile_op(model, jc, jc.op), dov, horizons, opts));
    } else if (jc.kind == "weighted_dixmier") {
      finish_est(integrals::weighted_dixmier(
          *model, compile_op(model, jc, jc.op), jc.s,
          or_default(jc.lambda_ladder, integrals::default_lambda_ladder()),
          opts));
    } else if (jc.kind == "heat") {
      finish_est(integrals::heat_integral(
          *model, compile_op(model, jc, jc.op),
          or_default(jc.t_ladder, integrals::default_heat_ladder()), opts));
    } else if (jc.kind == "frohlich") {
      finish_est(integrals::frohlich(
          *model, compile_op(model, jc, jc.op), jc.beta,
          or_default(jc.t_ladder, integrals::default_heat_ladder()), opts));
    } else if (jc.kind == "szego") {
      if (jc.f_poly.empty())
        throw std::invalid_argument("szego: f_poly must list monomial weights");
      ergo::SzegoFunction f;
      f.poly = jc.f_poly;
      f.f = [poly = jc.f_poly](double x) {
        double acc = 0.0, xp = 1.0;
        for (double c : poly) {
          xp *= x;
          acc += c * xp;
        }
        return acc;
      };
      if (jc.op.empty())
        throw std::invalid_argument("szego: missing operator expression");
      auto s = ergo::szego_functional(
          model, jc.op, f,
          or_default(jc.lambda_ladder, integrals::default_lambda_ladder()),
          opts);
      r.report = ergo::to_json(s);
      std::string csv = integrals::csv_header();
      integrals::append_csv(s.lhs, csv);
      integrals::append_csv(s.rhs, csv);
      r.csv = std::move(csv);
      fields["value"] = s.lhs.value.real();
      fields["lhs"] = s.lhs.value.real();
      fields["rhs"] = s.rhs.value.real();
      fields["drift"] = s.lhs.drift;
    } else if (jc.kind == "widom") {
      if (jc.op_b.empty())
        throw std::invalid_argument("widom: needs op and op_b");
      ergo::WidomOptions wo;
      wo.op_a = jc.op;
      wo.op_b = jc.op_b;
      auto w = ergo::widom_ratio(
          *model, compile_op(model, jc, jc.op), compile_op(model, jc, jc.op_b),
          or_default(jc.lambda_ladder, integrals::default_lambda_ladder()), wo);
      r.report = ergo::to_json(w);
      r.csv = ergo::ladder_csv(w);
      fields["value"] = w.ratios.back();
      fields["ratio"] = w.ratios.back();
      fields["commutator_a"] = w.commutator_a;
      fields["commutator_b"] = w.commutator_b;
    } else if (jc.kind == "qe") {
      ergo::QEOptions qo;
      qo.inputs = jc.op;
      auto q = ergo::qe_statistics(
          *model, compile_op(model, jc, jc.op),
          or_default(jc.lambda_ladder, integrals::default_lambda_ladder()), qo);
      r.report = ergo::to_json(q);
      r.csv = ergo::ladder_csv(q);
      fields["value"] = q.variance.back();
      fields["variance"] = q.variance.back();
      fields["tau"] = q.tau.real();
      fields["density_final"] = q.extraction.density_final;
    } else if (jc.kind == "timeavg") {
      if (jc.time_ladder.empty() || jc.lambda <= 0.0)
        throw std::invalid_argument("timeavg: needs time_ladder and lambda");
      ergo::TimeAverageOptions to;
      to.inputs = jc.op;
      to.drift_tol = jc.drift_tol;
      auto er = ergo::time_average_criterion(*model,
                                             compile_op(model, jc, jc.op),
                                             jc.time_ladder, jc.lambda,
                                             jc.horizon, to);
      finish_est(er);
      fields["rhs"] = er.aux.at("rhs");
    } else {
      throw std::invalid_argument("unknown job kind: " + jc.kind);
    }

    json assertion(nullptr);
    if (jc.check) {
      auto it = fields.find(jc.check->field);
      if (it == fields.end())
        throw std::invalid_argument("check: job " + r.name +
                                    " has no field named " + jc.check->field);
      r.checked = true;
      r.check_value = it->second;
      double tol = std::max(jc.check->abs_tol,
                            jc.check->rel_tol * std::abs(jc.check->target));
      r.passed = std::abs(r.check_value - jc.check->target) <= tol;
      if (!r.passed) out.exit_code = 4;
      assertion = json{{"field", jc.check->field},
                       {"target", jc.check->target},
                       {"value", r.check_value},
                       {"passed", r.passed}};
    }
    results.push_back(json{{"name", r.name},
                           {"kind", r.kind},
                           {"report", r.report},
                           {"assertion", assertion}});
    out.jobs.push_back(std::move(r));
  }

  bool all = std::all_of(out.jobs.begin(), out.jobs.end(),
                         [](const JobResult& j) { return j.passed; });
  out.summary = json{{"schema_version", 1},
                     {"model", to_json(cfg.model)},
                     {"all_passed", all},
                     {"results", results}};
  return out;
}

void write_outputs(const ExperimentConfig& cfg, const RunResult& r) {
  if (cfg.output_dir.empty()) return;
  namespace fs = std::filesystem;
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream stamp;
  stamp << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");

  for (const JobResult& j : r.jobs) {
    std::ofstream f(dir / (j.name + ".csv"), std::ios::binary);
    if (!f)
      throw std::invalid_argument("output: cannot write " +
                                  (dir / (j.name + ".csv")).string());
    f << "# written " << stamp.str() << "\n" << j.csv;
  }
  std::ofstream s(dir / "summary.json", std::ios::binary);
  if (!s)
    throw std::invalid_argument("output: cannot write summary.json");
  s << r.summary.dump(2) << "\n";
}

std::string random_operator_source(std::mt19937_64& rng,
                                   const models::SpectralModel& model,
                                   int depth) {
  auto names = model.generator_names();
  auto has = [&](const std::string& g) {
    return std::find(names.begin(), names.end(), g) != names.end();
  };
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  static const char* kScalars[] = {"1", "-1", "0.5", "2", "0.25", "1.5"};
  auto scalar = [&]() {
    std::string s = kScalars[pick(0, 5)];
    if (pick(0, 3) == 0) s += "i";
    return s;
  };

  // probe the internal block's flattened arity once
  int internal_args = 0;
  if (has("internal")) {
    for (int n : {1, 2, 3, 4}) {
      try {
        model.generator("internal", std::vector<cplx>(std::size_t(n) * n, 0.0));
        internal_args = n * n;
        break;
      } catch (const std::invalid_argument&) {
      }
    }
  }

  std::vector<std::function<std::string()>> atoms;
  atoms.push_back([&]() { return scalar(); });
  atoms.push_back([&]() { return std::string("id"); });
  if (has("proj_pos")) atoms.push_back([]() { return std::string("proj_pos"); });
  if (has("sign_symbol"))
    atoms.push_back([&]() {
      return "sign_symbol(" + scalar() + ", " + scalar() + ", " + scalar() +
             ")";
    });
  if (has("dpow"))
    atoms.push_back([&]() {
      static const char* kPows[] = {"-1", "-0.5", "-2"};
      return "dpow(" + std::string(kPows[pick(0, 2)]) + ")";
    });
  auto coeff_list = [&](const char* gen) {
    int half = pick(0, 2);
    std::string s = std::string(gen) + "(";
    for (int k = 0; k < 2 * half + 1; ++k) {
      if (k) s += ", ";
      s += scalar();
    }
    return s + ")";
  };
  if (has("mult")) atoms.push_back([&]() { return coeff_list("mult"); });
  if (has("toeplitz")) atoms.push_back([&]() { return coeff_list("toeplitz"); });
  if (has("u"))
    atoms.push_back([&]() {
      std::string s = "u(";
      for (int k = 0; k < model.dimension(); ++k) {
        if (k) s += ", ";
        s += std::to_string(pick(-2, 2));
      }
      return s + ")";
    });
  if (has("angular"))
    atoms.push_back([&]() {
      int terms = pick(1, 2);
      std::string s = "angular(";
      for (int t = 0; t < terms; ++t) {
        if (t) s += ", ";
        s += scalar();
        for (int k = 0; k < model.dimension(); ++k)
          s += ", " + std::to_string(pick(0, 2));
      }
      return s + ")";
    });
  if (internal_args > 0)
    atoms.push_back([&, internal_args]() {
      std::string s = "internal(";
      for (int k = 0; k < internal_args; ++k) {
        if (k) s += ", ";
        s += scalar();
      }
      return s + ")";
    });

  std::function<std::string(int)> gen = [&](int d) -> std::string {
    if (d <= 0) return atoms[std::size_t(pick(0, int(atoms.size()) - 1))]();
    switch (pick(0, 6)) {
      case 0:
        return atoms[std::size_t(pick(0, int(atoms.size()) - 1))]();
      case 1:
        return gen(d - 1) + " + " + gen(d - 1);
      case 2:
        return gen(d - 1) + " - " + gen(d - 1);
      case 3:
        return gen(d - 1) + " * " + gen(d - 1);
      case 4:
        return "adj(" + gen(d - 1) + ")";
      case 5:
        return "pow(" + gen(d - 1) + ", " + std::to_string(pick(1, 3)) + ")";
      default:
        return scalar() + " * (" + gen(d - 1) + ")";
    }
  };
  return gen(depth);
}

}  // namespace spectrunc::cli
