#include "spectrunc/trunc.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "spectrunc/linalg.hpp"

namespace spectrunc::trunc {

namespace {

constexpr double kTailLog = 36.85;  // -log(1e-16), rounded up a touch

void require_band(const models::MatrixOracle& o, const char* who) {
  if (!o.band)
    throw UnsupportedOperatorError(std::string(who) +
                                   ": oracle has no finite band");
}

}  // namespace

TruncatedMatrix truncate(const models::SpectralModel& model,
                         const models::MatrixOracle& a, double lambda,
                         std::string source, std::size_t mode_cap) {
  double snapped = model.snap_cutoff(lambda);
  if (model.counting(snapped) > double(mode_cap))
    throw ResourceLimitError("truncate: " + model.name() + " at cutoff " +
                             format_double(snapped) + " needs " +
                             format_double(model.counting(snapped)) +
                             " modes, cap is " + std::to_string(mode_cap));
  auto modes = model.modes_up_to(snapped);
  TruncatedMatrix t;
  t.cutoff = snapped;
  t.entries = materialize(a, modes);
  t.mode_lambdas.reserve(modes.size());
  for (const auto& m : modes) t.mode_lambdas.push_back(m.lambda);
  t.source = std::move(source);
  return t;
}

cplx trace_mean(const TruncatedMatrix& t) {
  if (t.size() < 1) throw std::invalid_argument("trace_mean: empty truncation");
  KahanSum<cplx> s;
  for (Eigen::Index i = 0; i < t.size(); ++i) s.add(t.entries(i, i));
  return s.value() / double(t.size());
}

namespace {

Eigen::MatrixXcd hermitian_part(const TruncatedMatrix& t, const char* who) {
  double scale = t.size() ? t.entries.cwiseAbs().maxCoeff() : 0.0;
  double dev =
      t.size() ? (t.entries - t.entries.adjoint()).cwiseAbs().maxCoeff() : 0.0;
  if (dev > 1e-10 * std::max(scale, 1e-300))
    throw std::invalid_argument(
        std::string(who) + ": input is not hermitian (deviation " +
        format_double(dev) + " vs scale " + format_double(scale) + ")");
  if (dev > 1e-13 * std::max(scale, 1e-300))
    std::clog << who << ": symmetrized input, deviation "
              << format_double(dev) << "\n";
  return 0.5 * (t.entries + t.entries.adjoint());
}

}  // namespace

cplx spectral_mean(const TruncatedMatrix& t,
                   const std::function<double(double)>& f) {
  if (t.size() < 1)
    throw std::invalid_argument("spectral_mean: empty truncation");
  Eigen::VectorXd w = linalg::eigh(hermitian_part(t, "spectral_mean"));
  KahanSum<double> s;
  for (Eigen::Index i = 0; i < w.size(); ++i) s.add(f(w(i)));
  return cplx(s.value() / double(w.size()), 0.0);
}

TruncatedMatrix matrix_function(const TruncatedMatrix& t,
                                const std::function<double(double)>& f) {
  Eigen::MatrixXcd sym = hermitian_part(t, "matrix_function");
  Eigen::MatrixXcd u;
  Eigen::VectorXd w = linalg::eigh(sym, &u);
  Eigen::VectorXd fw(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) fw(i) = f(w(i));
  TruncatedMatrix out;
  out.cutoff = t.cutoff;
  out.entries = u * fw.asDiagonal() * u.adjoint();
  out.mode_lambdas = t.mode_lambdas;
  out.source = t.source;
  out.f_vanishes_at_zero = f(0.0) == 0.0;
  return out;
}

cplx heat_trace(const models::SpectralModel& model, const models::MatrixOracle& a,
                double t, bool squared, std::size_t stream_cap) {
  if (!(t > 0.0)) throw std::invalid_argument("heat_trace: need t > 0");
  double lambda_max = squared ? std::sqrt(kTailLog / t) : kTailLog / t;
  if (model.counting(lambda_max) > double(stream_cap))
    throw ResourceLimitError(
        "heat_trace: t = " + format_double(t) + " needs " +
        format_double(model.counting(lambda_max)) + " modes on " +
        model.name() + ", cap is " + std::to_string(stream_cap));
  KahanSum<cplx> sum;
  model.stream_modes(lambda_max, [&](const models::Mode& m) {
    double w = squared ? std::exp(-t * m.lambda * m.lambda)
                       : std::exp(-t * m.lambda);
    sum.add(a.entry(m, m) * w);
  });
  return sum.value();
}

TruncatedMatrix time_average(const models::SpectralModel& model,
                             const models::MatrixOracle& a, double time_horizon,
                             double lambda, std::size_t mode_cap) {
  if (!(time_horizon > 0.0))
    throw std::invalid_argument("time_average: need T > 0");
  TruncatedMatrix t = truncate(model, a, lambda, {}, mode_cap);
  for (Eigen::Index j = 0; j < t.size(); ++j)
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      double delta = t.mode_lambdas[std::size_t(j)] - t.mode_lambdas[std::size_t(k)];
      if (delta == 0.0) continue;  // kernel is 1
      cplx itd(0.0, time_horizon * delta);
      t.entries(j, k) *= (std::exp(itd) - 1.0) / itd;
    }
  return t;
}

double hs_norm_offdiag(const models::SpectralModel& model,
                       const models::MatrixOracle& b, double lambda,
                       double margin) {
  require_band(b, "hs_norm_offdiag");
  double band = *b.band;
  // only modes within one band of the cutoff can contribute
  auto inner = model.index_window(std::max(0.0, lambda - band), lambda);
  auto outer = model.index_window(std::nextafter(lambda, lambda + 1.0),
                                  lambda + band + margin);
  KahanSum<double> sum;
  for (std::size_t j = inner.first; j < inner.second; ++j) {
    models::Mode mj = model.mode(j);
    for (std::size_t k = outer.first; k < outer.second; ++k) {
      sum.add(std::norm(b.entry(mj, model.mode(k))));
    }
  }
  return sum.value();
}

cplx banded_cross_trace(const models::SpectralModel& model,
                        const models::MatrixOracle& a,
                        const models::MatrixOracle& b, double lambda) {
  require_band(a, "banded_cross_trace");
  require_band(b, "banded_cross_trace");
  double reach = std::min(*a.band, *b.band);
  auto inner = model.index_window(std::max(0.0, lambda - reach), lambda);
  auto outer = model.index_window(std::nextafter(lambda, lambda + 1.0),
                                  lambda + reach);
  KahanSum<cplx> sum;
  for (std::size_t j = inner.first; j < inner.second; ++j) {
    models::Mode mj = model.mode(j);
    for (std::size_t k = outer.first; k < outer.second; ++k) {
      models::Mode mk = model.mode(k);
      sum.add(a.entry(mj, mk) * b.entry(mk, mj));
    }
  }
  return sum.value();
}

void dump_matrix(const TruncatedMatrix& t, const std::string& path) {
  nlohmann::json header = {{"size", t.size()},
                           {"cutoff", t.cutoff},
                           {"source", t.source},
                           {"layout", "complex128-colmajor"}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("dump_matrix: cannot open " + path);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(t.entries.data()),
            std::streamsize(sizeof(cplx)) * t.size() * t.size());
  if (!out) throw std::runtime_error("dump_matrix: short write to " + path);
}

TruncatedMatrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("load_matrix: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("load_matrix: missing header in " + path);
  auto header = nlohmann::json::parse(line);
  TruncatedMatrix t;
  t.cutoff = header.at("cutoff").get<double>();
  t.source = header.at("source").get<std::string>();
  auto n = header.at("size").get<Eigen::Index>();
  t.entries.resize(n, n);
  in.read(reinterpret_cast<char*>(t.entries.data()),
          std::streamsize(sizeof(cplx)) * n * n);
  if (!in) throw std::invalid_argument("load_matrix: truncated payload in " + path);
  return t;
}

}  // namespace spectrunc::trunc
