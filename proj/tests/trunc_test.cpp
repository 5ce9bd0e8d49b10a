#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "spectrunc/trunc.hpp"

#include <cmath>
#include <complex>
#include <cstdio>

#include "spectrunc/linalg.hpp"

using namespace spectrunc;
using namespace spectrunc::models;
using namespace spectrunc::trunc;

namespace {

Eigen::MatrixXd theta2(double t) {
  Eigen::MatrixXd th(2, 2);
  th << 0.0, t, -t, 0.0;
  return th;
}

}  // namespace

TEST_CASE("truncate: shapes, snapping, cap") {
  auto m = make_circle();
  auto t = truncate(*m, m->mult({1.0, 0.0, 1.0}), 2.0, "mult(1,0,1)");
  CHECK(t.size() == 5);
  CHECK(t.cutoff == 2.0);
  CHECK(t.source == "mult(1,0,1)");
  for (Eigen::Index j = 0; j < 5; ++j)
    for (Eigen::Index k = 0; k < 5; ++k) {
      int dn = (j == 0 ? 0 : (j % 2 ? -(int(j) + 1) / 2 : int(j) / 2)) -
               (k == 0 ? 0 : (k % 2 ? -(int(k) + 1) / 2 : int(k) / 2));
      CHECK(t.entries(j, k) == ((dn == 1 || dn == -1) ? cplx(1.0) : cplx(0.0)));
    }

  // cutoff snaps down to the largest eigenvalue <= lambda
  auto ts = truncate(*m, m->identity(), 2.9);
  CHECK(ts.cutoff == 2.0);
  CHECK(ts.size() == 5);
  CHECK(ts.entries == Eigen::MatrixXcd::Identity(5, 5));

  auto torus = make_nc_torus(2, theta2(0.7));
  CHECK_THROWS_AS(truncate(*torus, torus->identity(), 200.0), ResourceLimitError);
}

TEST_CASE("trace_mean basics") {
  auto m = make_circle();
  CHECK(trace_mean(truncate(*m, m->identity(), 7.0)) == cplx(1.0));
  CHECK(trace_mean(truncate(*m, m->mult({0.0, 0.0, 1.0}), 7.0)) == cplx(0.0));

  auto tp = make_toeplitz();
  auto sym = tp->toeplitz({cplx(0, 1), cplx(0.75, 0.0), cplx(0, -1)});
  for (double lam : {3.0, 9.0, 20.0})
    CHECK(trace_mean(truncate(*tp, sym, lam)) == cplx(0.75));

  TruncatedMatrix empty;
  CHECK_THROWS_AS(trace_mean(empty), std::invalid_argument);
}

TEST_CASE("projection compatibility: smaller cutoff is a leading block") {
  auto m = make_nc_torus(2, theta2(0.4));
  auto a = m->u({1, 0});
  auto t1 = truncate(*m, a, 3.0);
  auto t2 = truncate(*m, a, 6.0);
  CHECK(t2.entries.topLeftCorner(t1.size(), t1.size()) == t1.entries);
}

TEST_CASE("matrix_function: reconstruction, traces, zero flag") {
  auto tp = make_toeplitz();
  auto t = truncate(*tp, tp->toeplitz({1.0, 0.5, 1.0}), 12.0);

  auto same = matrix_function(t, [](double x) { return x; });
  CHECK((same.entries - t.entries).cwiseAbs().maxCoeff() <=
        1e-10 * t.entries.cwiseAbs().maxCoeff());
  CHECK(same.f_vanishes_at_zero.has_value());
  CHECK(*same.f_vanishes_at_zero);

  // tridiagonal 0/1 matrix of size n+1: Tr(T^2) = 2n
  int n = 30;
  auto tri = truncate(*tp, tp->toeplitz({1.0, 0.0, 1.0}), double(n));
  auto sq = matrix_function(tri, [](double x) { return x * x; });
  CHECK(std::abs(sq.entries.trace() - cplx(2.0 * n)) < 1e-9 * n);

  // f(0) != 0 is recorded
  auto circ = make_circle();
  auto zero = truncate(*circ, circ->mult({0.0}), 2.0);
  auto ones = matrix_function(zero, [](double) { return 1.0; });
  CHECK(ones.entries.trace() == cplx(5.0));
  CHECK_FALSE(*ones.f_vanishes_at_zero);

  // functional calculus agrees with direct powers
  auto p4 = matrix_function(t, [](double x) { return x * x * x * x; });
  Eigen::MatrixXcd direct = t.entries * t.entries * t.entries * t.entries;
  CHECK(std::abs(p4.entries.trace() - direct.trace()) <=
        1e-9 * std::abs(direct.trace()));

  // non-hermitian input is rejected
  auto shift = truncate(*circ, circ->mult({0.0, 0.0, 1.0}), 5.0);
  CHECK_THROWS_AS(matrix_function(shift, [](double x) { return x; }),
                  std::invalid_argument);
}

TEST_CASE("spectral_mean matches the full functional calculus") {
  auto tp = make_toeplitz();
  auto f = [](double x) { return x * x - 0.5 * x; };

  // small block goes through the dense reduction
  auto small = truncate(*tp, tp->toeplitz({1.0, 0.5, 1.0}), 12.0);
  CHECK(std::abs(spectral_mean(small, f) -
                 trace_mean(matrix_function(small, f))) < 1e-12);

  // banded input large enough to take the banded eigenvalue path
  auto big = truncate(*tp, tp->toeplitz({1.0, 0.0, 1.0}), 400.0);
  // Tr(T^2) = 2n for the 0/1 tridiagonal of size n+1, and Tr(T) = 0
  double exact = 2.0 * 400.0 / 401.0;
  CHECK(std::abs(spectral_mean(big, f) - cplx(exact)) < 1e-10);

  auto circ = make_circle();
  auto shift = truncate(*circ, circ->mult({0.0, 0.0, 1.0}), 5.0);
  CHECK_THROWS_AS(spectral_mean(shift, [](double x) { return x; }),
                  std::invalid_argument);

  TruncatedMatrix empty;
  empty.entries.resize(0, 0);
  CHECK_THROWS_AS(spectral_mean(empty, f), std::invalid_argument);
}

TEST_CASE("heat_trace: theta asymptotics, splits, resource guard") {
  auto m = make_circle();
  double t = 1e-4;
  cplx full = heat_trace(*m, m->identity(), t, true);
  CHECK(std::abs(full.real() / std::sqrt(M_PI / t) - 1.0) < 0.005);
  CHECK(full.imag() == 0.0);

  cplx none = heat_trace(*m, m->mult({0.0}), t, true);
  CHECK(none == cplx(0.0));

  cplx pos = heat_trace(*m, m->proj_pos(), 0.01, false);
  cplx unit = heat_trace(*m, m->identity(), 0.01, false);
  CHECK(std::abs(pos.real() / unit.real() - 0.5) < 1e-2);

  CHECK_THROWS_AS(heat_trace(*m, m->identity(), 0.0, true), std::invalid_argument);
  auto torus = make_nc_torus(2, theta2(0.7));
  CHECK_THROWS_AS(heat_trace(*torus, torus->identity(), 1e-6, true),
                  ResourceLimitError);
}

TEST_CASE("time_average: kernel structure and limits") {
  auto m = make_circle();
  auto diag = m->sign_symbol(2.0, -1.0, 0.5);
  auto base = truncate(*m, diag, 6.0);
  auto avg = time_average(*m, diag, 3.7, 6.0);
  CHECK(avg.entries == base.entries);  // diagonal operators are fixed points

  auto shift = m->mult({0.0, 0.0, 1.0});
  double T = 2.5;
  auto at = time_average(*m, shift, T, 6.0);
  double want = std::abs(2.0 * std::sin(T / 2.0) / T);
  auto raw = truncate(*m, shift, 6.0);
  for (Eigen::Index j = 0; j < at.size(); ++j)
    for (Eigen::Index k = 0; k < at.size(); ++k) {
      if (raw.entries(j, k) == cplx(0.0)) continue;
      CHECK(std::abs(std::abs(at.entries(j, k)) - want) < 1e-13);
    }

  // T -> 0 recovers the truncation
  auto tiny = time_average(*m, shift, 1e-6, 6.0);
  CHECK((tiny.entries - raw.entries).cwiseAbs().maxCoeff() < 1e-6);

  // contraction in Hilbert-Schmidt norm
  auto torus = make_nc_torus(2, theta2(0.7));
  auto a = torus->u({1, 1});
  auto tr_raw = truncate(*torus, a, 5.0);
  auto tr_avg = time_average(*torus, a, 8.0, 5.0);
  CHECK(tr_avg.entries.norm() <= tr_raw.entries.norm() + 1e-12);

  CHECK_THROWS_AS(time_average(*m, shift, -1.0, 6.0), std::invalid_argument);
}

TEST_CASE("hs_norm_offdiag: escaping mass at the boundary") {
  auto m = make_circle();
  // e^{i theta} pushes exactly one mode (n = 50) across the cutoff
  CHECK(hs_norm_offdiag(*m, m->mult({0.0, 0.0, 1.0}), 50.0) ==
        doctest::Approx(1.0));
  CHECK(hs_norm_offdiag(*m, m->proj_pos(), 50.0) == 0.0);

  auto tp = make_toeplitz();
  CHECK(hs_norm_offdiag(*tp, tp->toeplitz({1.0, 0.0, 1.0}), 17.0) ==
        doctest::Approx(1.0));

  MatrixOracle unbanded;
  unbanded.entry = [](const Mode&, const Mode&) -> cplx { return 1.0; };
  CHECK_THROWS_AS(hs_norm_offdiag(*m, unbanded, 10.0), UnsupportedOperatorError);
}

TEST_CASE("banded cross trace equals the multiplicativity defect") {
  auto m = make_nc_torus(2, theta2(0.7));
  auto a = m->u({1, 0});
  auto b = m->u({-1, 0});
  double lam = 6.0;
  double reach = std::max(*a.band, *b.band);

  auto big = m->modes_up_to(lam + reach);
  Eigen::MatrixXcd A = materialize(a, big);
  Eigen::MatrixXcd B = materialize(b, big);
  auto n0 = Eigen::Index(m->count_up_to(lam));

  cplx direct = 0.0;
  for (Eigen::Index j = 0; j < n0; ++j)
    for (Eigen::Index k = n0; k < A.cols(); ++k) direct += A(j, k) * B(k, j);

  cplx fast = banded_cross_trace(*m, a, b, lam);
  CHECK(std::abs(fast - direct) < 1e-10);

  // Tr(P A (1-P) B P) = Tr((AB)_P) - Tr(A_P B_P)
  cplx whole = (A * B).topLeftCorner(n0, n0).trace();
  cplx split = (A.topLeftCorner(n0, n0) * B.topLeftCorner(n0, n0)).trace();
  CHECK(std::abs(fast - (whole - split)) < 1e-10);
}

TEST_CASE("dump and load round-trip") {
  auto m = make_circle();
  auto t = truncate(*m, m->mult({cplx(0, 0.5), 1.0, cplx(0, -0.5)}), 4.0,
                    "mult(0.5i,1,-0.5i)");
  std::string path = "trunc_roundtrip.bin";
  dump_matrix(t, path);
  auto back = load_matrix(path);
  CHECK(back.cutoff == t.cutoff);
  CHECK(back.source == t.source);
  CHECK(back.size() == t.size());
  CHECK(back.entries == t.entries);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_matrix("does_not_exist.bin"), std::invalid_argument);
}
