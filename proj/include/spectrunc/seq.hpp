#pragma once

#include <functional>
#include <vector>

#include "spectrunc/common.hpp"

namespace spectrunc::seq {

// Finite prefix x_0..x_n of a bounded scalar sequence.
struct Series {
  std::vector<cplx> values;

  std::size_t horizon() const { return values.size() - 1; }
  static Series constant(cplx c, std::size_t n);
};

// Evaluation of a limit functional along a horizon ladder.
// value is taken at the largest horizon; drift is the max pairwise spread
// over the top half of the ladder (at least two points when available).
struct LimitSurrogate {
  std::vector<std::size_t> ladder;
  std::vector<cplx> ladder_values;
  cplx value{};
  double drift = 0.0;
  bool measurable = false;
};

// output_n = (1/(n+1)) sum_{k<=n} x_k
Series cesaro(const Series& x);

// output_n = (1/log(n+2)) sum_{k<=n} x_k/(k+1)
Series log_mean(const Series& x);

// |M(x)_n - M(C(x))_n|
double log_cesaro_gap(const Series& x, std::size_t n);

struct ResampleResult {
  Series direct;      // (1/phi(n)) sum_{k<=n} a_k
  Series resampled;   // (1/phi(k_{i_n})) sum_{k<=k_{i_n}} a_k, k_{i_n} = min{k_i >= n}
  double sup_diff_top_half = 0.0;
  double phi_ratio_max = 0.0;   // max phi(k_{i+1})/phi(k_i) over the tail checkpoints
  double block_sum_max = 0.0;   // max (1/phi(k_i)) sum_{k_{i-1}<k<=k_i} |a_k| over the tail
  bool hypotheses_hold = false;
};

// Compares direct weighted sums against sums frozen at the checkpoint grid.
// phi must be positive and nondecreasing on the touched indices.
ResampleResult resample_on_checkpoints(const Series& a,
                                       const std::function<double(std::size_t)>& phi,
                                       const std::vector<std::size_t>& checkpoints,
                                       double ratio_tol = 0.1,
                                       double block_tol = 0.1);

LimitSurrogate omega_surrogate(const Series& x,
                               const std::vector<std::size_t>& ladder,
                               double drift_tol = 1e-2);

}  // namespace spectrunc::seq
