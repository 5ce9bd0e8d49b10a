#include "spectrunc/integrals.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "spectrunc/seq.hpp"

namespace spectrunc::integrals {

namespace {

std::size_t top_half_start(std::size_t m) {
  if (m < 2) return 0;
  std::size_t s = m / 2;
  if (s > m - 2) s = m - 2;
  return s;
}

void check_ladder(const std::vector<double>& v, const char* who, bool increasing) {
  if (v.empty()) throw std::invalid_argument(std::string(who) + ": empty ladder");
  for (double x : v)
    if (!std::isfinite(x) || x <= 0.0)
      throw std::invalid_argument(std::string(who) + ": ladder entries must be positive");
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    bool ok = increasing ? v[i] < v[i + 1] : v[i] > v[i + 1];
    if (!ok)
      throw std::invalid_argument(std::string(who) +
                                  (increasing ? ": ladder must increase"
                                              : ": ladder must decrease"));
  }
}

void check_horizons(const std::vector<std::size_t>& h, const char* who) {
  if (h.empty()) throw std::invalid_argument(std::string(who) + ": empty horizon ladder");
  for (std::size_t i = 0; i + 1 < h.size(); ++i)
    if (h[i] >= h[i + 1])
      throw std::invalid_argument(std::string(who) + ": horizons must increase");
}

// Snapped cutoffs plus their exact mode counts, shared by the cutoff-ladder
// estimators. Snapping can merge neighbors; that is rejected rather than
// silently duplicating a ladder point.
struct CutoffLadder {
  std::vector<double> snapped;
  std::vector<std::size_t> counts;
};

CutoffLadder snap_ladder(const models::SpectralModel& model,
                         const std::vector<double>& ladder, const char* who,
                         std::size_t max_count) {
  CutoffLadder out;
  out.snapped.reserve(ladder.size());
  out.counts.reserve(ladder.size());
  for (double l : ladder) {
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

struct DiagPrefix {
  std::vector<double> lambdas;
  std::vector<cplx> diag;
};

DiagPrefix diagonal_prefix(const models::SpectralModel& model,
                           const models::MatrixOracle& a, std::size_t count,
                           std::size_t cap, const char* who) {
  if (count > cap)
    throw ResourceLimitError(std::string(who) + ": prefix of " +
                             std::to_string(count) + " modes exceeds cap " +
                             std::to_string(cap));
  auto modes = model.modes_prefix(count);
  DiagPrefix p;
  p.lambdas.reserve(count);
  p.diag.reserve(count);
  for (const auto& m : modes) {
    p.lambdas.push_back(m.lambda);
    p.diag.push_back(a.entry(m, m));
  }
  return p;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  q += '"';
  return q;
}

}  // namespace

void finalize(EstimateReport& r, double drift_tol) {
  r.value = r.ladder_values.back();
  r.drift = 0.0;
  std::size_t start = top_half_start(r.ladder_values.size());
  for (std::size_t i = start; i < r.ladder_values.size(); ++i)
    for (std::size_t j = i + 1; j < r.ladder_values.size(); ++j)
      r.drift = std::max(r.drift,
                         std::abs(r.ladder_values[i] - r.ladder_values[j]));
  r.measurable = r.drift < drift_tol;
}

std::vector<double> default_lambda_ladder() {
  return {32.0, 64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0};
}

std::vector<double> default_heat_ladder() { return {1e-1, 1e-2, 1e-3, 1e-4}; }

std::vector<std::size_t> default_horizon_ladder() { return {1000, 10000, 100000}; }

WeylFit weyl_fit(const models::SpectralModel& model,
                 const std::vector<double>& ladder) {
  check_ladder(ladder, "weyl_fit", true);
  if (ladder.size() < 3)
    throw std::invalid_argument("weyl_fit: need at least three cutoffs");
  if (ladder.back() < 4.0 * ladder.front())
    throw std::invalid_argument("weyl_fit: ladder must span a factor of four");

  std::vector<double> lx, ly;
  lx.reserve(ladder.size());
  ly.reserve(ladder.size());
  for (double l : ladder) {
    double n = model.counting(l);
    if (n <= 0.0)
      throw std::invalid_argument("weyl_fit: no modes at or below cutoff " +
                                  format_double(l));
    lx.push_back(std::log(l));
    ly.push_back(std::log(n));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= double(lx.size());
  my /= double(ly.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }

  WeylFit f;
  f.dimension = sxy / sxx;
  if (!(f.dimension > 0.0))
    throw std::invalid_argument("weyl_fit: ladder resolves no spectral growth");
  f.constant = model.counting(ladder.back()) / std::pow(ladder.back(), f.dimension);
  f.trace_omega = f.constant;
  f.ladder = ladder;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    double fit = f.constant * std::pow(ladder[i], f.dimension);
    f.residual = std::max(f.residual, std::abs(fit / model.counting(ladder[i]) - 1.0));
  }
  return f;
}

EstimateReport truncated_integral(const models::SpectralModel& model,
                                  const models::MatrixOracle& a,
                                  const std::vector<double>& ladder,
                                  const EstimatorOptions& opts) {
  check_ladder(ladder, "truncated_integral", true);
  auto cl = snap_ladder(model, ladder, "truncated_integral", opts.stream_cap);

  std::vector<KahanSum<cplx>> bucket(cl.snapped.size());
  model.stream_modes(cl.snapped.back(), [&](const models::Mode& m) {
    auto it = std::lower_bound(cl.snapped.begin(), cl.snapped.end(), m.lambda);
    std::size_t idx = std::size_t(it - cl.snapped.begin());
    if (idx == cl.snapped.size()) idx = cl.snapped.size() - 1;
    bucket[idx].add(a.entry(m, m));
  });

  EstimateReport r;
  r.estimator = "truncated_integral";
  r.model = model.name();
  r.inputs = opts.inputs;
  r.ladder = cl.snapped;
  cplx run{};
  for (std::size_t i = 0; i < bucket.size(); ++i) {
    run += bucket[i].value();
    r.ladder_values.push_back(run / double(cl.counts[i]));
  }
  finalize(r, opts.drift_tol);
  r.aux["modes_top"] = double(cl.counts.back());
  return r;
}

EstimateReport log_mean_diagonal(const models::SpectralModel& model,
                                 const models::MatrixOracle& a,
                                 const std::vector<std::size_t>& horizons,
                                 const EstimatorOptions& opts) {
  check_horizons(horizons, "log_mean_diagonal");
  std::size_t n_top = horizons.back();
  auto p = diagonal_prefix(model, a, n_top + 1, opts.prefix_cap,
                           "log_mean_diagonal");

  EstimateReport r;
  r.estimator = "log_mean_diagonal";
  r.model = model.name();
  r.inputs = opts.inputs;
  KahanSum<cplx> cum, logcum;
  std::size_t ci = 0;
  cplx log_top{};
  for (std::size_t k = 0; k <= n_top; ++k) {
    cum.add(p.diag[k]);
    logcum.add(p.diag[k] / double(k + 1));
    while (ci < horizons.size() && horizons[ci] == k) {
      r.ladder.push_back(double(k));
      r.ladder_values.push_back(cum.value() / double(k + 1));
      log_top = logcum.value() / std::log(double(k + 2));
      ++ci;
    }
  }
  finalize(r, opts.drift_tol);
  r.aux["log_mean_top_re"] = log_top.real();
  r.aux["log_mean_top_im"] = log_top.imag();
  r.aux["log_cesaro_gap_top"] = std::abs(log_top - r.value);
  return r;
}

EstimateReport dixmier_diagonal(const models::SpectralModel& model,
                                const models::MatrixOracle& a,
                                std::optional<double> d_override,
                                const std::vector<std::size_t>& horizons,
                                const EstimatorOptions& opts) {
  check_horizons(horizons, "dixmier_diagonal");
  double d = d_override.value_or(double(model.dimension()));
  if (!(d > 0.0))
    throw std::invalid_argument("dixmier_diagonal: dimension must be positive");
  std::size_t n_top = horizons.back();
  auto p = diagonal_prefix(model, a, n_top + 1, opts.prefix_cap,
                           "dixmier_diagonal");

  EstimateReport r;
  r.estimator = "dixmier_diagonal";
  r.model = model.name();
  r.inputs = opts.inputs;
  KahanSum<cplx> cum;
  std::size_t ci = 0;
  for (std::size_t k = 0; k <= n_top; ++k) {
    double w = std::pow(1.0 + p.lambdas[k] * p.lambdas[k], -0.5 * d);
    cum.add(w * p.diag[k]);
    while (ci < horizons.size() && horizons[ci] == k) {
      r.ladder.push_back(double(k));
      r.ladder_values.push_back(cum.value() / std::log(double(k + 2)));
      ++ci;
    }
  }
  finalize(r, opts.drift_tol);
  r.aux["dimension"] = d;
  return r;
}

EstimateReport weighted_dixmier(const models::SpectralModel& model,
                                const models::MatrixOracle& q, double s,
                                const std::vector<double>& ladder,
                                const EstimatorOptions& opts) {
  double d = double(model.dimension());
  if (s < -d - 1e-12)
    throw std::invalid_argument("weighted_dixmier: order below -dimension");
  bool critical = std::abs(s + d) <= 1e-12;
  check_ladder(ladder, "weighted_dixmier", true);
  auto cl = snap_ladder(model, ladder, "weighted_dixmier",
                        std::min(opts.stream_cap, opts.prefix_cap));
  std::size_t n_top = cl.counts.back();
  auto p = diagonal_prefix(model, q, n_top, opts.prefix_cap, "weighted_dixmier");

  // heuristic growth check on the diagonal of Q <D>^{-s}
  double sup_half = 0.0, sup_all = 0.0;
  for (std::size_t k = 0; k < n_top; ++k) {
    double g = std::abs(p.diag[k]) *
               std::pow(1.0 + p.lambdas[k] * p.lambdas[k], -0.5 * s);
    sup_all = std::max(sup_all, g);
    if (k < n_top / 2) sup_half = std::max(sup_half, g);
  }
  double growth_ratio =
      sup_half > 0.0 ? sup_all / sup_half
                     : (sup_all > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  if (growth_ratio > 2.0)
    std::clog << "weighted_dixmier: diagonal growth ratio "
              << format_double(growth_ratio)
              << " suggests the weighted operator is unbounded (heuristic)\n";

  EstimateReport r;
  r.estimator = "weighted_dixmier";
  r.model = model.name();
  r.inputs = opts.inputs;
  r.ladder = cl.snapped;

  if (critical) {
    KahanSum<cplx> cum;
    std::size_t ci = 0;
    for (std::size_t k = 0; k < n_top; ++k) {
      cum.add(p.diag[k]);
      while (ci < cl.counts.size() && cl.counts[ci] == k + 1) {
        if (cl.counts[ci] < 2)
          throw std::invalid_argument(
              "weighted_dixmier: cutoff captures fewer than two modes");
        r.ladder_values.push_back(cum.value() / std::log(double(cl.counts[ci])));
        ++ci;
      }
    }
  } else {
    double expo = s / d + 1.0;
    KahanSum<cplx> cum, ces, logm;
    std::size_t ci = 0;
    cplx raw_top{}, log_top{};
    std::size_t i = 0;
    while (i < n_top) {
      std::size_t j = i;
      while (j < n_top && p.lambdas[j] == p.lambdas[i]) {
        cum.add(p.diag[j]);
        ++j;
      }
      cplx ratio = cum.value() / std::pow(double(j), expo);
      for (std::size_t n = i; n < j; ++n) {
        ces.add(ratio);
        logm.add(ratio / double(n + 1));
        while (ci < cl.counts.size() && cl.counts[ci] == n + 1) {
          r.ladder_values.push_back(expo * ces.value() / double(n + 1));
          raw_top = expo * ratio;
          log_top = expo * logm.value() / std::log(double(n + 2));
          ++ci;
        }
      }
      i = j;
    }
    r.aux["raw_top_re"] = raw_top.real();
    r.aux["raw_top_im"] = raw_top.imag();
    r.aux["log_mean_route_re"] = log_top.real();
    r.aux["log_mean_route_im"] = log_top.imag();
  }
  finalize(r, opts.drift_tol);
  r.aux["order"] = s;
  r.aux["growth_sup"] = sup_all;
  r.aux["growth_ratio"] = growth_ratio;
  return r;
}

EstimateReport heat_integral(const models::SpectralModel& model,
                             const models::MatrixOracle& a,
                             const std::vector<double>& t_ladder,
                             const EstimatorOptions& opts) {
  check_ladder(t_ladder, "heat_integral", false);
  double d = double(model.dimension());
  auto one = model.identity();

  EstimateReport r;
  r.estimator = "heat_integral";
  r.model = model.name();
  r.inputs = opts.inputs;
  r.ladder = t_ladder;
  cplx ca_top{};
  double c1_top = 0.0;
  for (double t : t_ladder) {
    cplx ha = trunc::heat_trace(model, a, t, true, opts.stream_cap);
    cplx h1 = trunc::heat_trace(model, one, t, true, opts.stream_cap);
    double scale = std::pow(t, 0.5 * d);
    cplx ca = ha * scale;
    double c1 = h1.real() * scale;
    if (!(c1 > 0.0))
      throw std::invalid_argument("heat_integral: degenerate identity trace");
    ca_top = ca;
    c1_top = c1;
    r.ladder_values.push_back(ca / c1);
  }
  finalize(r, opts.drift_tol);
  r.aux["c_a_re"] = ca_top.real();
  r.aux["c_a_im"] = ca_top.imag();
  r.aux["c_1"] = c1_top;
  r.aux["trace_omega"] = c1_top / lanczos_gamma(0.5 * d + 1.0);
  r.aux["dimension"] = d;
  return r;
}

EstimateReport frohlich(const models::SpectralModel& model,
                        const models::MatrixOracle& a, double beta,
                        const std::vector<double>& t_ladder,
                        const EstimatorOptions& opts) {
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("frohlich: beta must be finite and nonnegative");
  check_ladder(t_ladder, "frohlich", false);
  if (t_ladder.back() <= beta)
    throw std::invalid_argument("frohlich: ladder must stay above beta");
  auto one = model.identity();

  EstimateReport r;
  r.estimator = "frohlich";
  r.model = model.name();
  r.inputs = opts.inputs;
  r.ladder = t_ladder;
  double z_prev = 0.0, z_top = 0.0;
  for (double t : t_ladder) {
    cplx za = trunc::heat_trace(model, a, t, false, opts.stream_cap);
    cplx z1 = trunc::heat_trace(model, one, t, false, opts.stream_cap);
    double z = z1.real();
    if (!(z > 0.0) || !std::isfinite(z) || !std::isfinite(std::abs(za)))
      throw std::invalid_argument("frohlich: trace not finite at t = " +
                                  format_double(t));
    if (z_prev > 0.0 && z <= z_prev)
      throw std::invalid_argument(
          "frohlich: partition trace fails to grow toward beta");
    z_prev = z;
    z_top = z;
    r.ladder_values.push_back(za / z);
  }
  finalize(r, opts.drift_tol);
  r.aux["beta"] = beta;
  r.aux["z_top"] = z_top;

  std::vector<double> comp;
  for (double l : default_lambda_ladder())
    if (model.counting(l) <= double(opts.stream_cap) / 4.0) comp.push_back(l);
  if (comp.size() >= 2) {
    EstimatorOptions copts = opts;
    copts.inputs.clear();
    auto ct = truncated_integral(model, a, comp, copts);
    r.aux["comparison_re"] = ct.value.real();
    r.aux["comparison_im"] = ct.value.imag();
    r.aux["comparison_lambda"] = ct.ladder.back();
  }
  return r;
}

nlohmann::json to_json(const EstimateReport& r) {
  nlohmann::json j;
  j["estimator"] = r.estimator;
  j["model"] = r.model;
  j["operator"] = r.inputs;
  j["value"] = {r.value.real(), r.value.imag()};
  j["ladder"] = r.ladder;
  auto& lv = j["ladder_values"] = nlohmann::json::array();
  for (const auto& v : r.ladder_values) lv.push_back({v.real(), v.imag()});
  j["drift"] = r.drift;
  j["measurable"] = r.measurable;
  if (!r.verdict.empty()) j["verdict"] = r.verdict;
  j["aux"] = r.aux;
  return j;
}

nlohmann::json to_json(const WeylFit& f) {
  nlohmann::json j;
  j["dimension"] = f.dimension;
  j["constant"] = f.constant;
  j["residual"] = f.residual;
  j["trace_omega"] = f.trace_omega;
  j["ladder"] = f.ladder;
  return j;
}

std::string csv_header() {
  return "estimator,model,operator,ladder_point,value_re,value_im,drift,measurable";
}

void append_csv(const EstimateReport& r, std::string& out) {
  for (std::size_t i = 0; i < r.ladder.size(); ++i) {
    out += csv_quote(r.estimator);
    out += ',';
    out += csv_quote(r.model);
    out += ',';
    out += csv_quote(r.inputs);
    out += ',';
    out += format_double(r.ladder[i]);
    out += ',';
    out += format_double(r.ladder_values[i].real());
    out += ',';
    out += format_double(r.ladder_values[i].imag());
    out += ',';
    out += format_double(r.drift);
    out += ',';
    out += r.measurable ? "true" : "false";
    out += '\n';
  }
}

}  // namespace spectrunc::integrals
