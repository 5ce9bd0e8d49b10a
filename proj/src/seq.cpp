#include "spectrunc/seq.hpp"

#include <algorithm>
#include <cmath>

namespace spectrunc::seq {

namespace {

void require_nonempty(const Series& x, const char* who) {
  if (x.values.empty())
    throw std::invalid_argument(std::string(who) + ": series must be non-empty");
}

// start index of the "top half" of a ladder of size m; keeps at least
// two points whenever m >= 2 so drift is never vacuous
std::size_t top_half_start(std::size_t m) {
  if (m < 2) return 0;
  std::size_t s = m / 2;
  if (s > m - 2) s = m - 2;
  return s;
}

}  // namespace

Series Series::constant(cplx c, std::size_t n) {
  Series s;
  s.values.assign(n + 1, c);
  return s;
}

Series cesaro(const Series& x) {
  require_nonempty(x, "cesaro");
  Series out;
  out.values.resize(x.values.size());
  KahanSum<cplx> acc;
  for (std::size_t n = 0; n < x.values.size(); ++n) {
    acc.add(x.values[n]);
    out.values[n] = acc.value() / static_cast<double>(n + 1);
  }
  return out;
}

Series log_mean(const Series& x) {
  require_nonempty(x, "log_mean");
  Series out;
  out.values.resize(x.values.size());
  KahanSum<cplx> acc;
  for (std::size_t n = 0; n < x.values.size(); ++n) {
    acc.add(x.values[n] / static_cast<double>(n + 1));
    out.values[n] = acc.value() / std::log(static_cast<double>(n) + 2.0);
  }
  return out;
}

double log_cesaro_gap(const Series& x, std::size_t n) {
  require_nonempty(x, "log_cesaro_gap");
  if (n > x.horizon())
    throw std::invalid_argument("log_cesaro_gap: n beyond horizon");
  Series m1 = log_mean(x);
  Series m2 = log_mean(cesaro(x));
  return std::abs(m1.values[n] - m2.values[n]);
}

ResampleResult resample_on_checkpoints(const Series& a,
                                       const std::function<double(std::size_t)>& phi,
                                       const std::vector<std::size_t>& checkpoints,
                                       double ratio_tol, double block_tol) {
  require_nonempty(a, "resample_on_checkpoints");
  if (checkpoints.empty())
    throw std::invalid_argument("resample_on_checkpoints: need checkpoints");
  for (std::size_t i = 0; i + 1 < checkpoints.size(); ++i)
    if (checkpoints[i] >= checkpoints[i + 1])
      throw std::invalid_argument("resample_on_checkpoints: checkpoints must increase");
  if (checkpoints.back() > a.horizon())
    throw std::invalid_argument("resample_on_checkpoints: checkpoint beyond horizon");

  const std::size_t n_max = checkpoints.back();
  std::vector<cplx> partial(n_max + 1);  // partial[n] = sum_{k<=n} a_k
  {
    KahanSum<cplx> acc;
    for (std::size_t n = 0; n <= n_max; ++n) {
      acc.add(a.values[n]);
      partial[n] = acc.value();
    }
  }

  ResampleResult r;
  r.direct.values.resize(n_max + 1);
  r.resampled.values.resize(n_max + 1);
  std::size_t ci = 0;
  for (std::size_t n = 0; n <= n_max; ++n) {
    double pn = phi(n);
    if (!(pn > 0.0))
      throw std::invalid_argument("resample_on_checkpoints: phi must be positive");
    r.direct.values[n] = partial[n] / pn;
    while (checkpoints[ci] < n) ++ci;  // k_{i_n} = min{k_i >= n}
    std::size_t kc = checkpoints[ci];
    r.resampled.values[n] = partial[kc] / phi(kc);
  }

  std::size_t start = n_max / 2;
  for (std::size_t n = start; n <= n_max; ++n)
    r.sup_diff_top_half = std::max(
        r.sup_diff_top_half, std::abs(r.direct.values[n] - r.resampled.values[n]));

  std::size_t cstart = top_half_start(checkpoints.size());
  for (std::size_t i = cstart; i < checkpoints.size(); ++i) {
    if (i + 1 < checkpoints.size())
      r.phi_ratio_max = std::max(
          r.phi_ratio_max, phi(checkpoints[i + 1]) / phi(checkpoints[i]));
    KahanSum<double> blk;
    std::size_t lo = (i == 0) ? 0 : checkpoints[i - 1] + 1;
    for (std::size_t k = lo; k <= checkpoints[i]; ++k) blk.add(std::abs(a.values[k]));
    r.block_sum_max = std::max(r.block_sum_max, blk.value() / phi(checkpoints[i]));
  }
  r.hypotheses_hold =
      (r.phi_ratio_max - 1.0 <= ratio_tol) && (r.block_sum_max <= block_tol);
  return r;
}

LimitSurrogate omega_surrogate(const Series& x,
                               const std::vector<std::size_t>& ladder,
                               double drift_tol) {
  require_nonempty(x, "omega_surrogate");
  if (ladder.empty()) throw std::invalid_argument("omega_surrogate: need a ladder");
  for (std::size_t i = 0; i + 1 < ladder.size(); ++i)
    if (ladder[i] >= ladder[i + 1])
      throw std::invalid_argument("omega_surrogate: ladder must increase");
  if (ladder.back() > x.horizon())
    throw std::invalid_argument("omega_surrogate: ladder beyond horizon");

  LimitSurrogate s;
  s.ladder = ladder;
  s.ladder_values.reserve(ladder.size());
  for (std::size_t n : ladder) s.ladder_values.push_back(x.values[n]);
  s.value = s.ladder_values.back();
  std::size_t start = top_half_start(ladder.size());
  for (std::size_t i = start; i < s.ladder_values.size(); ++i)
    for (std::size_t j = i + 1; j < s.ladder_values.size(); ++j)
      s.drift = std::max(s.drift, std::abs(s.ladder_values[i] - s.ladder_values[j]));
  s.measurable = s.drift < drift_tol;
  return s;
}

}  // namespace spectrunc::seq
