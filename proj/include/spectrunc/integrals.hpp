#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectrunc/common.hpp"
#include "spectrunc/models.hpp"
#include "spectrunc/trunc.hpp"

namespace spectrunc::integrals {

// One estimator evaluation along a ladder of cutoffs / horizons / times.
// value is read at the final ladder point; drift is the max pairwise spread
// over the top half of the ladder and decides measurability.
struct EstimateReport {
  std::string estimator;
  std::string model;
  std::string inputs;  // operator expression provenance, free-form
  cplx value{};
  std::vector<double> ladder;
  std::vector<cplx> ladder_values;
  double drift = 0.0;
  bool measurable = false;
  std::string verdict;  // optional diagnostic outcome, empty when not applicable
  std::map<std::string, double> aux;  // estimator-specific scalars
};

// Power-law fit N(lambda) ~ constant * lambda^dimension over a cutoff window.
struct WeylFit {
  double dimension = 0.0;
  double constant = 0.0;     // read off at the largest cutoff
  double residual = 0.0;     // max relative deviation over the window
  double trace_omega = 0.0;  // the constant, in its role as a trace value
  std::vector<double> ladder;
};

struct EstimatorOptions {
  double drift_tol = 1e-2;
  std::string inputs;  // recorded on the report verbatim
  std::size_t stream_cap = trunc::kDefaultStreamCap;
  // cap on modes materialized in flattened order for index-ladder estimators
  std::size_t prefix_cap = 2'000'000;
};

std::vector<double> default_lambda_ladder();        // 32 .. 2048, geometric
std::vector<double> default_heat_ladder();          // 1e-1 .. 1e-4, geometric
std::vector<std::size_t> default_horizon_ladder();  // 1e3, 1e4, 1e5

// Fill value/drift/measurable from ladder_values: value is the final entry,
// drift the max pairwise spread over the top half of the ladder.
void finalize(EstimateReport& r, double drift_tol);

WeylFit weyl_fit(const models::SpectralModel& model,
                 const std::vector<double>& lambda_ladder);

// Tr(P A P)/Tr(P) along increasing cutoffs, streamed off the diagonal.
EstimateReport truncated_integral(const models::SpectralModel& model,
                                  const models::MatrixOracle& a,
                                  const std::vector<double>& lambda_ladder,
                                  const EstimatorOptions& opts = {});

// Averaged diagonal along the flattened order, read at index horizons.
// The ladder values follow the Cesaro mean of the diagonal, whose limit the
// slower logarithmic mean shares; the verbatim log-mean lands in aux.
EstimateReport log_mean_diagonal(const models::SpectralModel& model,
                                 const models::MatrixOracle& a,
                                 const std::vector<std::size_t>& horizons,
                                 const EstimatorOptions& opts = {});

// (1/log(n+2)) sum_{k<=n} <lambda_k>^{-d} <e_k, A e_k>, unnormalized.
EstimateReport dixmier_diagonal(const models::SpectralModel& model,
                                const models::MatrixOracle& a,
                                std::optional<double> d_override,
                                const std::vector<std::size_t>& horizons,
                                const EstimatorOptions& opts = {});

// Trace of Q against <D>^{-d} via cutoff traces. At s = -d the ladder value
// is Tr(P Q P)/log Tr(P); for s > -d it is (s/d+1) times the Cesaro mean of
// Tr(P_{lambda_n} Q P_{lambda_n})/Tr(P_{lambda_n})^{s/d+1} over mode index n.
EstimateReport weighted_dixmier(const models::SpectralModel& model,
                                const models::MatrixOracle& q, double s,
                                const std::vector<double>& lambda_ladder,
                                const EstimatorOptions& opts = {});

// Leading heat coefficient C_A with Tr(A e^{-t D^2}) ~ C_A t^{-d/2}; the
// report value is C_A/C_1 and aux carries C_1 and C_1/Gamma(d/2+1).
EstimateReport heat_integral(const models::SpectralModel& model,
                             const models::MatrixOracle& a,
                             const std::vector<double>& t_ladder,
                             const EstimatorOptions& opts = {});

// Gibbs-weighted mean Tr(A e^{-t|D|})/Tr(e^{-t|D|}) for t decreasing to beta,
// with the cutoff-trace value alongside for comparison.
EstimateReport frohlich(const models::SpectralModel& model,
                        const models::MatrixOracle& a, double beta,
                        const std::vector<double>& t_ladder,
                        const EstimatorOptions& opts = {});

nlohmann::json to_json(const EstimateReport& r);
nlohmann::json to_json(const WeylFit& f);

// CSV, one row per ladder point. Fields with commas or quotes are quoted.
std::string csv_header();
void append_csv(const EstimateReport& r, std::string& out);

}  // namespace spectrunc::integrals
