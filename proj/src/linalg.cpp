#include "spectrunc/linalg.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

namespace spectrunc::linalg {

namespace {

// outermost diagonal holding a nonzero entry; cheap for dense input because
// the scan starts at the widest diagonal and stops at the first hit
lapack_int bandwidth(const Eigen::MatrixXcd& a) {
  lapack_int n = static_cast<lapack_int>(a.rows());
  for (lapack_int kd = n - 1; kd > 0; --kd)
    for (lapack_int j = 0; j + kd < n; ++j)
      if (a(j + kd, j) != 0.0 || a(j, j + kd) != 0.0) return kd;
  return 0;
}

}  // namespace

Eigen::VectorXd eigh(const Eigen::MatrixXcd& a, Eigen::MatrixXcd* vectors) {
  if (a.rows() != a.cols()) throw std::invalid_argument("eigh: matrix not square");
  lapack_int n = static_cast<lapack_int>(a.rows());
  Eigen::MatrixXcd work = a;  // column-major, overwritten with eigenvectors
  Eigen::VectorXd w(n);
  if (n == 0) return w;
  if (!vectors && n >= 64) {
    // eigenvalues of a narrow-band matrix cost O(n^2 kd) through the banded
    // solver instead of the O(n^3) dense reduction
    lapack_int kd = bandwidth(work);
    if (kd + 1 < n / 8) {
      Eigen::MatrixXcd ab = Eigen::MatrixXcd::Zero(kd + 1, n);
      for (lapack_int j = 0; j < n; ++j)
        for (lapack_int i = j; i <= std::min<lapack_int>(n - 1, j + kd); ++i)
          ab(i - j, j) = work(i, j);
      Eigen::MatrixXcd z(1, 1);
      lapack_int info = LAPACKE_zhbev(LAPACK_COL_MAJOR, 'N', 'L', n, kd,
                                      ab.data(), kd + 1, w.data(), z.data(), 1);
      if (info == 0) return w;
    }
  }
  char jobz = vectors ? 'V' : 'N';
  lapack_int info = LAPACKE_zheev(LAPACK_COL_MAJOR, jobz, 'L', n, work.data(), n,
                                  w.data());
  if (info != 0)
    throw std::runtime_error("eigh: zheev failed with info=" + std::to_string(info));
  if (vectors) *vectors = std::move(work);
  return w;
}

double operator_norm(const Eigen::MatrixXcd& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  Eigen::MatrixXcd gram = a.adjoint() * a;
  Eigen::VectorXd w = eigh(gram);
  double top = w(w.size() - 1);
  return top > 0.0 ? std::sqrt(top) : 0.0;
}

}  // namespace spectrunc::linalg
