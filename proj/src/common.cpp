#include "spectrunc/common.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace spectrunc {

double lanczos_gamma(double x) {
  // g = 7, 9-term coefficient set.
  static const double g = 7.0;
  static const double coef[9] = {
      0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
      771.32342877765313,       -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7};
  if (!(x > 0.0)) throw std::invalid_argument("lanczos_gamma: need x > 0");
  if (x < 0.5) {
    // reflection
    return M_PI / (std::sin(M_PI * x) * lanczos_gamma(1.0 - x));
  }
  x -= 1.0;
  double a = coef[0];
  for (int i = 1; i < 9; ++i) a += coef[i] / (x + i);
  double t = x + g + 0.5;
  return std::sqrt(2.0 * M_PI) * std::pow(t, x + 0.5) * std::exp(-t) * a;
}

std::string format_double(double v) {
  std::array<char, 64> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace spectrunc
