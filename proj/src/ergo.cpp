#include "spectrunc/ergo.hpp"

#include <algorithm>
#include <cmath>

#include "spectrunc/expr.hpp"

namespace spectrunc::ergo {

namespace {

struct CutoffLadder {
  std::vector<double> snapped;
  std::vector<std::size_t> counts;
};

CutoffLadder snap_ladder(const models::SpectralModel& model,
                         const std::vector<double>& ladder, const char* who,
                         std::size_t max_count) {
  if (ladder.empty())
    throw std::invalid_argument(std::string(who) + ": empty ladder");
  CutoffLadder out;
  for (double l : ladder) {
    if (!std::isfinite(l) || l <= 0.0)
      throw std::invalid_argument(std::string(who) +
                                  ": ladder entries must be positive");
    // counting() is closed-form; snapping is not, so guard the cap first
    if (model.counting(l) > double(max_count))
      throw ResourceLimitError(std::string(who) + ": cutoff " +
                               format_double(l) + " spans " +
                               format_double(model.counting(l)) +
                               " modes, over the cap of " +
                               std::to_string(max_count));
    double s = model.snap_cutoff(l);
    if (!out.snapped.empty() && s <= out.snapped.back())
      throw std::invalid_argument(std::string(who) +
                                  ": ladder collapses after snapping to eigenvalues");
    out.snapped.push_back(s);
    out.counts.push_back(static_cast<std::size_t>(std::llround(model.counting(s))));
  }
  return out;
}

std::vector<std::size_t> counts_to_horizons(const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> h;
  h.reserve(counts.size());
  for (std::size_t c : counts) h.push_back(c - 1);
  return h;
}

nlohmann::json complex_json(cplx v) { return {v.real(), v.imag()}; }

}  // namespace

WidomReport widom_ratio(const models::SpectralModel& model,
                        const models::MatrixOracle& a,
                        const models::MatrixOracle& b,
                        const std::vector<double>& ladder,
                        const WidomOptions& opts) {
  auto cl = snap_ladder(model, ladder, "widom_ratio",
                        trunc::kDefaultStreamCap);
  WidomReport r;
  r.model = model.name();
  r.op_a = opts.op_a;
  r.op_b = opts.op_b;
  r.ladder = cl.snapped;
  r.counts = cl.counts;
  for (std::size_t i = 0; i < cl.snapped.size(); ++i) {
    cplx cross = trunc::banded_cross_trace(model, a, b, cl.snapped[i]);
    r.ratios.push_back(std::abs(cross) / double(cl.counts[i]));
  }

  // sample commutator boundedness where a dense check still fits
  double lc = cl.snapped.back();
  while (lc > 0.0 && model.counting(lc) > double(opts.mode_cap)) lc /= 2.0;
  if (lc > 0.0) {
    try {
      r.commutator_lambda = model.snap_cutoff(lc);
      r.commutator_a =
          models::commutator_norm_check(model, a, r.commutator_lambda, opts.mode_cap);
      r.commutator_b =
          models::commutator_norm_check(model, b, r.commutator_lambda, opts.mode_cap);
    } catch (const std::invalid_argument&) {
      r.commutator_lambda = 0.0;
    }
  }
  return r;
}

SzegoReport szego_functional(
    const std::shared_ptr<const models::SpectralModel>& model,
    const std::string& a_src, const SzegoFunction& f,
    const std::vector<double>& ladder, const integrals::EstimatorOptions& opts) {
  if (!f.f) throw std::invalid_argument("szego_functional: missing scalar function");
  if (f.f(0.0) != 0.0)
    throw std::invalid_argument("szego_functional: f(0) must vanish");
  auto a = expr::compile(a_src, model);
  auto cl = snap_ladder(*model, ladder, "szego_functional",
                        trunc::kDefaultModeCap);

  SzegoReport out;
  out.lhs.estimator = "szego_lhs";
  out.lhs.model = model->name();
  out.lhs.inputs = a_src;
  out.lhs.ladder = cl.snapped;
  trunc::TruncatedMatrix top;
  for (std::size_t i = 0; i < cl.snapped.size(); ++i) {
    auto t = trunc::truncate(*model, a, cl.snapped[i], a_src);
    if (i + 1 == cl.snapped.size() && f.poly.empty()) {
      // the fallback RHS below reads the diagonal of f(T), so this one rung
      // pays for the full functional calculus
      top = trunc::matrix_function(t, f.f);
      out.lhs.ladder_values.push_back(trunc::trace_mean(top));
    } else {
      out.lhs.ladder_values.push_back(trunc::spectral_mean(t, f.f));
    }
  }
  integrals::finalize(out.lhs, opts.drift_tol);
  out.lhs.aux["poly_degree"] = double(f.poly.size());

  if (!f.poly.empty()) {
    std::string src;
    for (std::size_t k = 0; k < f.poly.size(); ++k) {
      if (f.poly[k] == 0.0) continue;
      if (!src.empty()) src += " + ";
      src += "(" + format_double(f.poly[k]) + " * ";
      if (k == 0)
        src += "(" + a_src + ")";
      else
        src += "pow((" + a_src + "), " + std::to_string(k + 1) + ")";
      src += ")";
    }
    if (src.empty()) src = "0 * (" + a_src + ")";
    auto fa = expr::compile(src, model);
    integrals::EstimatorOptions ropts = opts;
    ropts.inputs = src;
    out.rhs = integrals::log_mean_diagonal(*model, fa,
                                           counts_to_horizons(cl.counts), ropts);
  } else {
    // no exact handle on f(A): read the diagonal of f applied to the largest
    // compression and average it along the same checkpoints
    out.approximate_rhs = true;
    out.rhs.estimator = "szego_rhs_truncated";
    out.rhs.model = model->name();
    out.rhs.inputs = a_src;
    KahanSum<cplx> cum;
    std::size_t ci = 0;
    for (std::size_t k = 0; k < std::size_t(top.size()); ++k) {
      cum.add(top.entries(k, k));
      while (ci < cl.counts.size() && cl.counts[ci] == k + 1) {
        out.rhs.ladder.push_back(double(cl.counts[ci] - 1));
        out.rhs.ladder_values.push_back(cum.value() / double(k + 1));
        ++ci;
      }
    }
    integrals::finalize(out.rhs, opts.drift_tol);
    out.rhs.aux["approximate"] = 1.0;
  }
  return out;
}

std::vector<double> default_eps_schedule() {
  std::vector<double> eps;
  for (int m = 1; m <= 12; ++m) eps.push_back(std::pow(2.0, -m));
  return eps;
}

DensityExtraction extract_density_one(const std::vector<cplx>& x, cplx target,
                                      const std::vector<double>& eps_schedule) {
  if (x.empty())
    throw std::invalid_argument("extract_density_one: empty prefix");
  if (eps_schedule.empty())
    throw std::invalid_argument("extract_density_one: empty schedule");
  for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
    if (!(eps_schedule[i] > 0.0))
      throw std::invalid_argument("extract_density_one: tolerances must be positive");
    if (i > 0 && eps_schedule[i] > eps_schedule[i - 1])
      throw std::invalid_argument("extract_density_one: schedule must not increase");
  }

  std::size_t n = x.size();
  DensityExtraction out;
  std::size_t n_prev = 0;
  for (std::size_t m = 1; m <= eps_schedule.size(); ++m) {
    double eps = eps_schedule[m - 1];
    double goal = 1.0 - std::pow(2.0, -double(m));
    std::size_t members = 0, start = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(x[k] - target) < eps) ++members;
      if (double(members) / double(k + 1) < goal) start = k + 1;
    }
    start = std::max(start, n_prev);
    if (start >= n) break;
    out.levels.emplace_back(int(m), start);
    n_prev = start;
  }

  out.member.assign(n, false);
  if (!out.levels.empty()) {
    for (std::size_t k = 0; k < out.levels.front().second; ++k)
      out.member[k] = true;
    for (std::size_t i = 0; i < out.levels.size(); ++i) {
      double eps = eps_schedule[std::size_t(out.levels[i].first) - 1];
      std::size_t lo = out.levels[i].second;
      std::size_t hi = (i + 1 < out.levels.size()) ? out.levels[i + 1].second : n;
      for (std::size_t k = lo; k < hi; ++k)
        out.member[k] = std::abs(x[k] - target) < eps;
    }
  }

  out.running_density.reserve(n);
  std::size_t cnt = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (out.member[k]) ++cnt;
    out.running_density.push_back(double(cnt) / double(k + 1));
  }
  out.density_final = out.running_density.back();

  if (!out.levels.empty()) {
    std::size_t tail = out.levels.back().second;
    for (std::size_t k = tail; k < n; ++k)
      if (out.member[k])
        out.sup_tail_dev = std::max(out.sup_tail_dev, std::abs(x[k] - target));
  }

  if (out.levels.empty())
    out.verdict = "no density-one convergence";
  else if (out.density_final >=
           1.0 - std::pow(2.0, -double(out.levels.back().first)))
    out.verdict = "density-one";
  else
    out.verdict = "inconclusive";
  return out;
}

QEStatistics qe_statistics(const models::SpectralModel& model,
                           const models::MatrixOracle& a,
                           const std::vector<double>& ladder,
                           const QEOptions& opts) {
  auto cl = snap_ladder(model, ladder, "qe_statistics", opts.prefix_cap);
  std::size_t n_top = cl.counts.back();
  if (n_top > opts.prefix_cap)
    throw ResourceLimitError("qe_statistics: prefix of " + std::to_string(n_top) +
                             " modes exceeds cap");

  QEStatistics s;
  s.model = model.name();
  s.inputs = opts.inputs;
  s.ladder = cl.snapped;
  s.counts = cl.counts;

  if (opts.tau_override) {
    s.tau = *opts.tau_override;
    s.tau_estimator = "override";
  } else {
    integrals::EstimatorOptions eopts;
    eopts.inputs = opts.inputs;
    eopts.stream_cap = opts.stream_cap;
    eopts.prefix_cap = opts.prefix_cap;
    switch (opts.tau_source) {
      case TauSource::log_mean:
        s.tau = integrals::log_mean_diagonal(model, a,
                                             counts_to_horizons(cl.counts), eopts)
                    .value;
        s.tau_estimator = "log_mean_diagonal";
        break;
      case TauSource::truncated:
        s.tau = integrals::truncated_integral(model, a, cl.snapped, eopts).value;
        s.tau_estimator = "truncated_integral";
        break;
      case TauSource::heat:
        s.tau = integrals::heat_integral(model, a, integrals::default_heat_ladder(),
                                         eopts)
                    .value;
        s.tau_estimator = "heat_integral";
        break;
    }
  }

  auto modes = model.modes_prefix(n_top);
  s.diagonal.reserve(n_top);
  for (const auto& m : modes) s.diagonal.push_back(a.entry(m, m));

  KahanSum<double> dev2;
  std::size_t ci = 0;
  for (std::size_t k = 0; k < n_top; ++k) {
    dev2.add(std::norm(s.diagonal[k] - s.tau));
    while (ci < cl.counts.size() && cl.counts[ci] == k + 1) {
      s.variance.push_back(dev2.value() / double(cl.counts[ci]));
      ++ci;
    }
  }

  double v_top = s.variance.back();
  double span = cl.snapped.back() / cl.snapped.front();
  bool decays = span >= opts.span_factor * (1.0 - 1e-9) && v_top > 0.0 &&
                s.variance.front() / v_top >= opts.decay_factor;
  double spread = 0.0;
  std::size_t half = s.variance.size() < 2 ? 0 : s.variance.size() / 2;
  if (half > s.variance.size() - 2) half = s.variance.size() - 2;
  for (std::size_t i = half; i < s.variance.size(); ++i)
    for (std::size_t j = i + 1; j < s.variance.size(); ++j)
      spread = std::max(spread, std::abs(s.variance[i] - s.variance[j]));
  if (v_top < opts.tiny_variance)
    s.verdict = "QE-consistent";
  else if (decays)
    s.verdict = "QE-consistent";
  else if (spread <= opts.stabilize_band * v_top)
    s.verdict = "QE-violated";
  else
    s.verdict = "inconclusive";

  s.extraction = extract_density_one(
      s.diagonal, s.tau,
      opts.eps_schedule.empty() ? default_eps_schedule() : opts.eps_schedule);
  return s;
}

integrals::EstimateReport time_average_criterion(
    const models::SpectralModel& model, const models::MatrixOracle& a,
    const std::vector<double>& t_ladder, double lambda, std::size_t horizon,
    const TimeAverageOptions& opts) {
  if (t_ladder.empty())
    throw std::invalid_argument("time_average_criterion: empty time ladder");
  for (std::size_t i = 0; i < t_ladder.size(); ++i) {
    if (!(t_ladder[i] > 0.0))
      throw std::invalid_argument(
          "time_average_criterion: time horizons must be positive");
    if (i > 0 && t_ladder[i] <= t_ladder[i - 1])
      throw std::invalid_argument("time_average_criterion: time ladder must increase");
  }
  if (model.counting(lambda) > double(opts.mode_cap))
    throw ResourceLimitError("time_average_criterion: cutoff " +
                             format_double(lambda) + " spans " +
                             format_double(model.counting(lambda)) +
                             " modes, over the cap of " +
                             std::to_string(opts.mode_cap));
  double snapped = model.snap_cutoff(lambda);
  std::size_t n = static_cast<std::size_t>(std::llround(model.counting(snapped)));
  if (horizon + 1 > n)
    throw std::invalid_argument(
        "time_average_criterion: horizon exceeds the truncation");

  std::vector<double> wl = opts.weyl_ladder;
  if (wl.empty())
    wl = {snapped / 8.0, snapped / 4.0, snapped / 2.0, snapped};
  auto wf = integrals::weyl_fit(model, wl);
  double c2 = wf.constant * wf.constant;

  integrals::EstimatorOptions dopts;
  dopts.prefix_cap = opts.prefix_cap;
  std::vector<std::size_t> hors;
  if (horizon >= 2) hors = {horizon / 2, horizon};
  else hors = {horizon};
  cplx rhs_lin =
      integrals::dixmier_diagonal(model, a, std::nullopt, hors, dopts).value;
  double rhs = std::norm(rhs_lin);

  integrals::EstimateReport r;
  r.estimator = "time_average_criterion";
  r.model = model.name();
  r.inputs = opts.inputs;
  r.ladder = t_ladder;
  double raw_top = 0.0;
  for (double t : t_ladder) {
    auto at = trunc::time_average(model, a, t, snapped, opts.mode_cap);
    KahanSum<double> cum;
    for (std::size_t k = 0; k <= horizon; ++k)
      cum.add(at.entries.col(Eigen::Index(k)).squaredNorm());
    raw_top = cum.value() / double(horizon + 1);
    r.ladder_values.push_back(cplx(c2 * raw_top, 0.0));
  }
  integrals::finalize(r, opts.drift_tol);

  double diff = std::abs(r.value.real() - rhs);
  double scale = std::max(std::abs(r.value.real()), rhs);
  r.verdict = diff <= std::max(opts.abs_tol, opts.rel_tol * scale)
                  ? "ergodicity-consistent"
                  : "ergodicity-violated";
  r.aux["rhs"] = rhs;
  r.aux["weyl_constant"] = wf.constant;
  r.aux["lambda"] = snapped;
  r.aux["horizon"] = double(horizon);
  r.aux["raw_mean_top"] = raw_top;
  return r;
}

nlohmann::json to_json(const WidomReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["operator_a"] = r.op_a;
  j["operator_b"] = r.op_b;
  j["ladder"] = r.ladder;
  j["counts"] = r.counts;
  j["ratios"] = r.ratios;
  j["commutator_a"] = r.commutator_a;
  j["commutator_b"] = r.commutator_b;
  j["commutator_lambda"] = r.commutator_lambda;
  return j;
}

nlohmann::json to_json(const SzegoReport& r) {
  nlohmann::json j;
  j["lhs"] = integrals::to_json(r.lhs);
  j["rhs"] = integrals::to_json(r.rhs);
  j["approximate_rhs"] = r.approximate_rhs;
  return j;
}

nlohmann::json to_json(const DensityExtraction& e) {
  nlohmann::json j;
  auto& lv = j["levels"] = nlohmann::json::array();
  for (const auto& [m, start] : e.levels) lv.push_back({m, start});
  j["size"] = e.member.size();
  j["member_count"] =
      std::size_t(std::count(e.member.begin(), e.member.end(), true));
  j["density_final"] = e.density_final;
  j["sup_tail_dev"] = e.sup_tail_dev;
  j["verdict"] = e.verdict;
  return j;
}

nlohmann::json to_json(const QEStatistics& s) {
  nlohmann::json j;
  j["model"] = s.model;
  j["operator"] = s.inputs;
  j["tau"] = complex_json(s.tau);
  j["tau_estimator"] = s.tau_estimator;
  j["ladder"] = s.ladder;
  j["counts"] = s.counts;
  j["variance"] = s.variance;
  j["verdict"] = s.verdict;
  j["prefix_size"] = s.diagonal.size();
  j["extraction"] = to_json(s.extraction);
  return j;
}

std::string ladder_csv(const WidomReport& r) {
  std::string out = "lambda,count,widom_ratio\n";
  for (std::size_t i = 0; i < r.ladder.size(); ++i) {
    out += format_double(r.ladder[i]);
    out += ',';
    out += std::to_string(r.counts[i]);
    out += ',';
    out += format_double(r.ratios[i]);
    out += '\n';
  }
  return out;
}

std::string ladder_csv(const QEStatistics& s) {
  std::string out = "lambda,count,variance\n";
  for (std::size_t i = 0; i < s.ladder.size(); ++i) {
    out += format_double(s.ladder[i]);
    out += ',';
    out += std::to_string(s.counts[i]);
    out += ',';
    out += format_double(s.variance[i]);
    out += '\n';
  }
  return out;
}

}  // namespace spectrunc::ergo
