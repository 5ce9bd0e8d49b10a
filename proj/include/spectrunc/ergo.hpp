#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectrunc/common.hpp"
#include "spectrunc/integrals.hpp"
#include "spectrunc/models.hpp"
#include "spectrunc/trunc.hpp"

namespace spectrunc::ergo {

// Cross-term decay Tr(P A (1-P) B P)/Tr(P) along cutoffs; the modulus is
// reported since admissible pairs drive it to zero. Commutator norms are
// sampled at the largest cutoff that fits the dense-check cap.
struct WidomReport {
  std::string model;
  std::string op_a, op_b;
  std::vector<double> ladder;  // snapped
  std::vector<std::size_t> counts;
  std::vector<double> ratios;
  double commutator_a = 0.0;
  double commutator_b = 0.0;
  double commutator_lambda = 0.0;  // 0 when no cutoff fit under the cap
};

struct WidomOptions {
  std::size_t mode_cap = trunc::kDefaultModeCap;
  std::string op_a, op_b;  // provenance
};

WidomReport widom_ratio(const models::SpectralModel& model,
                        const models::MatrixOracle& a,
                        const models::MatrixOracle& b,
                        const std::vector<double>& lambda_ladder,
                        const WidomOptions& opts = {});

// Scalar function with optional polynomial form. When poly is nonempty it
// lists c_1..c_p with f(x) = sum c_k x^k, which makes the comparison side
// exactly expressible through operator powers.
struct SzegoFunction {
  std::function<double(double)> f;
  std::vector<double> poly;
};

struct SzegoReport {
  integrals::EstimateReport lhs;  // Tr(f(P A P))/Tr(P) along the ladder
  integrals::EstimateReport rhs;  // diagonal estimate of f(A)
  bool approximate_rhs = false;   // rhs read off the largest truncation only
};

// a_src is the operator expression for A; it must compile to a hermitian
// truncation on this model. f(0) = 0 is required.
SzegoReport szego_functional(
    const std::shared_ptr<const models::SpectralModel>& model,
    const std::string& a_src, const SzegoFunction& f,
    const std::vector<double>& lambda_ladder,
    const integrals::EstimatorOptions& opts = {});

// Greedy level extraction: level m admits |x_k - target| < eps[m-1] and asks
// for empirical density >= 1 - 2^{-m} from its start index onward.
struct DensityExtraction {
  std::vector<std::pair<int, std::size_t>> levels;  // (m, start index N_m)
  std::vector<bool> member;
  std::vector<double> running_density;
  double density_final = 0.0;
  double sup_tail_dev = 0.0;  // sup |x_j - target| over members past the last level
  std::string verdict;
};

std::vector<double> default_eps_schedule();  // 2^{-m}, m = 1..12

DensityExtraction extract_density_one(const std::vector<cplx>& x, cplx target,
                                      const std::vector<double>& eps_schedule);

enum class TauSource { log_mean, truncated, heat };

struct QEOptions {
  TauSource tau_source = TauSource::log_mean;
  std::optional<cplx> tau_override;
  double tiny_variance = 1e-3;   // V below this is consistency outright
  double decay_factor = 4.0;     // required V drop across a wide ladder
  double span_factor = 16.0;     // how wide "wide" is, in cutoff ratio
  double stabilize_band = 0.2;   // relative spread that counts as a plateau
  std::vector<double> eps_schedule;  // defaults to default_eps_schedule()
  std::size_t prefix_cap = 2'000'000;
  std::size_t stream_cap = trunc::kDefaultStreamCap;
  std::string inputs;
};

struct QEStatistics {
  std::string model;
  std::string inputs;
  std::string tau_estimator;
  cplx tau{};
  std::vector<double> ladder;  // snapped
  std::vector<std::size_t> counts;
  std::vector<double> variance;
  std::string verdict;
  std::vector<cplx> diagonal;  // prefix feeding the variances
  DensityExtraction extraction;
};

QEStatistics qe_statistics(const models::SpectralModel& model,
                           const models::MatrixOracle& a,
                           const std::vector<double>& lambda_ladder,
                           const QEOptions& opts = {});

struct TimeAverageOptions {
  std::vector<double> weyl_ladder;  // empty: lambda/8, lambda/4, lambda/2, lambda
  double abs_tol = 0.05;
  double rel_tol = 0.15;
  double drift_tol = 1e-2;
  std::size_t mode_cap = trunc::kDefaultModeCap;
  std::size_t prefix_cap = 2'000'000;
  std::string inputs;
};

// For each time horizon T: compress A, average it over the spectral flow in
// closed form, and take the squared-constant-weighted mean of the diagonal of
// A_T* A_T up to the index horizon. Compared against the squared modulus of
// the Dixmier diagonal estimate of A.
integrals::EstimateReport time_average_criterion(
    const models::SpectralModel& model, const models::MatrixOracle& a,
    const std::vector<double>& t_ladder, double lambda, std::size_t horizon,
    const TimeAverageOptions& opts = {});

nlohmann::json to_json(const WidomReport& r);
nlohmann::json to_json(const SzegoReport& r);
nlohmann::json to_json(const DensityExtraction& e);
nlohmann::json to_json(const QEStatistics& s);

// Per-cutoff CSV bodies: lambda, count, statistic.
std::string ladder_csv(const WidomReport& r);
std::string ladder_csv(const QEStatistics& s);

}  // namespace spectrunc::ergo
