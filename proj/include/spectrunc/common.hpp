#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace spectrunc {

using cplx = std::complex<double>;

// Error categories. The CLI maps them to process exit codes:
// std::invalid_argument -> 2, ResourceLimitError -> 3, assertion failure -> 4.
struct ResourceLimitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedOperatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Compensated accumulator, error <= 2 ulp per added term.
template <class T>
class KahanSum {
 public:
  void add(const T& v) {
    T y = v - c_;
    T t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  T value() const { return s_; }

 private:
  T s_{};
  T c_{};
};

// Lanczos approximation, good to better than 1e-12 relative on [0.5, 30].
double lanczos_gamma(double x);

// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace spectrunc
