#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spectrunc/common.hpp"
#include "spectrunc/models.hpp"

namespace spectrunc::trunc {

// Compression of an operator to the span of modes with eigenvalue <= cutoff,
// stored dense in the flattened mode order.
struct TruncatedMatrix {
  double cutoff = 0.0;  // snapped to a distinct eigenvalue
  Eigen::MatrixXcd entries;
  std::vector<double> mode_lambdas;  // eigenvalue per row/column
  std::string source;                // provenance of the generating expression
  // set by matrix_function: whether the applied f satisfied f(0) = 0
  std::optional<bool> f_vanishes_at_zero;

  Eigen::Index size() const { return entries.rows(); }
};

inline constexpr std::size_t kDefaultModeCap = 4096;
inline constexpr std::size_t kDefaultStreamCap = 20'000'000;

// Dense compression. The requested cutoff snaps down to the nearest distinct
// eigenvalue; all modes at that eigenvalue are included.
TruncatedMatrix truncate(const models::SpectralModel& model,
                         const models::MatrixOracle& a, double lambda,
                         std::string source = {},
                         std::size_t mode_cap = kDefaultModeCap);

// Tr(T) / size
cplx trace_mean(const TruncatedMatrix& t);

// Hermitian functional calculus U f(L) U*. Inputs within 1e-10 * max|entry|
// of hermitian are symmetrized first; anything further is rejected.
TruncatedMatrix matrix_function(const TruncatedMatrix& t,
                                const std::function<double(double)>& f);

// Mean of f over the spectrum, equal to trace_mean(matrix_function(t, f))
// but without reconstructing f(T), so large truncations stay cheap. Same
// hermiticity contract as matrix_function.
cplx spectral_mean(const TruncatedMatrix& t,
                   const std::function<double(double)>& f);

// Sum of <e_k, A e_k> w(lambda_k) over the whole spectrum, streamed without
// materializing anything. w = exp(-t lambda^2) when squared, else
// exp(-t lambda). The tail is cut where w < 1e-16.
cplx heat_trace(const models::SpectralModel& model, const models::MatrixOracle& a,
                double t, bool squared,
                std::size_t stream_cap = kDefaultStreamCap);

// Exact truncation of (1/T) int_0^T e^{it|D|} A e^{-it|D|} dt: entrywise
// kernel (e^{iT d}-1)/(iT d) on eigenvalue differences d.
TruncatedMatrix time_average(const models::SpectralModel& model,
                             const models::MatrixOracle& a, double time_horizon,
                             double lambda, std::size_t mode_cap = kDefaultModeCap);

// ||P B (1-P)||_HS^2 for banded B: sum of |B(j,k)|^2 over lambda_j <= lambda
// < lambda_k. margin widens the outer enumeration window beyond the band.
double hs_norm_offdiag(const models::SpectralModel& model,
                       const models::MatrixOracle& b, double lambda,
                       double margin = 0.0);

// Tr(P A (1-P) B P) for banded A, B: the cross term controlling how far
// truncation is from being multiplicative.
cplx banded_cross_trace(const models::SpectralModel& model,
                        const models::MatrixOracle& a,
                        const models::MatrixOracle& b, double lambda);

// Debug dump: one JSON header line (size, cutoff, source), then raw
// column-major complex128. Strip up to the first newline to get bare data.
void dump_matrix(const TruncatedMatrix& t, const std::string& path);
TruncatedMatrix load_matrix(const std::string& path);

}  // namespace spectrunc::trunc
