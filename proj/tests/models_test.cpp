#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "spectrunc/models.hpp"

#include <atomic>
#include <cmath>
#include <complex>
#include <set>
#include <thread>

#include "spectrunc/linalg.hpp"

using namespace spectrunc;
using namespace spectrunc::models;

namespace {

Eigen::MatrixXd theta2(double t) {
  Eigen::MatrixXd th(2, 2);
  th << 0.0, t, -t, 0.0;
  return th;
}

const Eigen::MatrixXcd kSigma1 =
    (Eigen::MatrixXcd(2, 2) << 0, 1, 1, 0).finished();

}  // namespace

TEST_CASE("circle mode table: order, counting, windows") {
  auto m = make_circle();
  CHECK(m->name() == "circle");
  CHECK(m->dimension() == 1);

  CHECK(m->count_up_to(5.5) == 11);
  CHECK(m->counting(5.5) == doctest::Approx(11.0));
  CHECK(m->count_up_to(0.0) == 1);
  CHECK(m->count_up_to(-1.0) == 0);

  // flattened order 0, -1, 1, -2, 2, ...
  CHECK(m->mode(0).lab(0) == 0);
  CHECK(m->mode(1).lab(0) == -1);
  CHECK(m->mode(2).lab(0) == 1);
  CHECK(m->mode(3).lab(0) == -2);
  CHECK(m->mode(4).lab(0) == 2);
  CHECK(m->mode(4).lambda == 2.0);
  CHECK(m->mode(4).index == 4);

  auto w = m->index_window(2.0, 3.0);
  CHECK(w.first == 3);   // first |n| = 2 mode
  CHECK(w.second == 7);  // past the |n| = 3 pair

  auto dist = m->distinct_eigenvalues(4.2);
  CHECK(dist == std::vector<double>{0.0, 1.0, 2.0, 3.0, 4.0});
  CHECK(m->snap_cutoff(4.2) == 4.0);
  CHECK_THROWS_AS(m->snap_cutoff(-0.5), std::invalid_argument);
}

TEST_CASE("counting matches enumeration on a cutoff grid") {
  auto circle = make_circle();
  auto toep = make_toeplitz();
  auto torus = make_nc_torus(2, theta2(0.7));
  auto ac = make_almost_commutative(
      (Eigen::MatrixXcd(2, 2) << 1, 0, 0, -1).finished());
  for (double lam : {0.0, 1.0, 2.5, 7.0, 13.3, 25.0}) {
    for (const std::shared_ptr<SpectralModel>& m :
         std::initializer_list<std::shared_ptr<SpectralModel>>{circle, toep,
                                                               torus, ac}) {
      CAPTURE(m->name());
      CAPTURE(lam);
      CHECK(m->counting(lam) == doctest::Approx(double(m->count_up_to(lam))));
    }
  }
}

TEST_CASE("mode table prefix is stable under growth") {
  auto m = make_nc_torus(2, theta2(0.3));
  auto small = m->modes_up_to(10.0);
  m->count_up_to(60.0);  // force regrowth
  auto again = m->modes_up_to(10.0);
  REQUIRE(small.size() == again.size());
  for (std::size_t i = 0; i < small.size(); ++i) {
    CHECK(small[i].lambda == again[i].lambda);
    CHECK(small[i].index == again[i].index);
    for (int j = 0; j < small[i].label_size; ++j)
      CHECK(small[i].label[j] == again[i].label[j]);
  }
}

TEST_CASE("stream_modes agrees with the table as a set") {
  auto m = make_nc_torus(2, theta2(0.3));
  std::multiset<double> streamed;
  std::size_t count = 0;
  m->stream_modes(8.0, [&](const Mode& mo) {
    streamed.insert(mo.lambda);
    CHECK(mo.index == count);
    ++count;
  });
  auto table = m->modes_up_to(8.0);
  REQUIRE(table.size() == count);
  std::multiset<double> tabled;
  for (const auto& mo : table) tabled.insert(mo.lambda);
  CHECK(streamed == tabled);
}

TEST_CASE("torus counting oracle values") {
  auto m = make_nc_torus(2, theta2(0.7));
  CHECK(m->spinor_dim() == 2);
  CHECK(m->counting(10.0) == doctest::Approx(2.0 * 317.0));  // 2 * gauss(10)
  CHECK(m->counting(25.0) == doctest::Approx(3922.0));
  CHECK(m->counting(50.0) == doctest::Approx(15690.0));
  CHECK(m->counting(100.0) == doctest::Approx(62834.0));
  CHECK(m->counting(200.0) == doctest::Approx(251258.0));
}

TEST_CASE("circle mult generator entries and band") {
  auto m = make_circle();
  auto a = m->mult({1.0, 0.0, 1.0});  // 2 cos(theta)
  CHECK(a.hermitian);
  REQUIRE(a.band.has_value());
  CHECK(*a.band == 1.0);
  auto modes = m->modes_up_to(3.0);
  Eigen::MatrixXcd mat = materialize(a, modes);
  // nonzeros exactly where labels differ by +-1
  for (Eigen::Index j = 0; j < mat.rows(); ++j)
    for (Eigen::Index k = 0; k < mat.cols(); ++k) {
      int dn = modes[std::size_t(j)].lab(0) - modes[std::size_t(k)].lab(0);
      cplx expect = (dn == 1 || dn == -1) ? 1.0 : 0.0;
      CHECK(mat(j, k) == expect);
    }

  auto e = m->mult({0.0, 0.0, 1.0});  // e^{i theta}: raises n by one
  CHECK_FALSE(e.hermitian);
  Eigen::MatrixXcd emat = materialize(e, modes);
  for (Eigen::Index j = 0; j < emat.rows(); ++j)
    for (Eigen::Index k = 0; k < emat.cols(); ++k) {
      int dn = modes[std::size_t(j)].lab(0) - modes[std::size_t(k)].lab(0);
      CHECK(emat(j, k) == (dn == 1 ? cplx(1.0) : cplx(0.0)));
    }

  CHECK_THROWS_AS(m->mult({1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(m->mult({}), std::invalid_argument);
}

TEST_CASE("circle diagonal symbols") {
  auto m = make_circle();
  auto modes = m->modes_up_to(2.0);
  auto p = materialize(m->proj_pos(), modes);
  // order 0,-1,1,-2,2 -> diag 1,0,1,0,1
  Eigen::VectorXcd want(5);
  want << 1, 0, 1, 0, 1;
  CHECK(p.diagonal() == want);
  CHECK((p - p * p).cwiseAbs().maxCoeff() == 0.0);

  auto s = materialize(m->sign_symbol(-2.0, 0.5, 3.0), modes);
  Eigen::VectorXcd sw(5);
  sw << 0.5, -2, 3, -2, 3;
  CHECK(s.diagonal() == sw);

  auto dp = m->d_power(-2.0);
  auto dmat = materialize(dp, modes);
  CHECK(dmat(0, 0) == cplx(1.0));
  CHECK(std::abs(dmat(3, 3) - cplx(0.2)) < 1e-15);  // (1+4)^{-1}
}

TEST_CASE("toeplitz generator entries") {
  auto m = make_toeplitz();
  CHECK(m->count_up_to(10.0) == 11);
  CHECK(m->mode(3).lab(0) == 3);

  auto a = m->toeplitz({1.0, 0.5, 1.0});
  auto modes = m->modes_up_to(4.0);
  Eigen::MatrixXcd mat = materialize(a, modes);
  CHECK(mat(0, 0) == cplx(0.5));
  CHECK(mat(1, 0) == cplx(1.0));
  CHECK(mat(0, 1) == cplx(1.0));
  CHECK(mat(0, 2) == cplx(0.0));

  Eigen::MatrixXcd blk(2, 2);
  blk << 1, cplx(0, 1), cplx(0, -1), 2;
  auto f = m->finite_rank(blk);
  CHECK(f.hermitian);
  Eigen::MatrixXcd fm = materialize(f, modes);
  CHECK(fm(0, 1) == cplx(0, 1));
  CHECK(fm(2, 2) == cplx(0.0));
  CHECK(fm.block(0, 0, 2, 2) == blk);
}

TEST_CASE("torus u algebra: phases, adjacency, relations") {
  double t = 0.7;
  auto m = make_nc_torus(2, theta2(t));
  auto modes = m->modes_up_to(6.0);

  auto u10 = m->u({1, 0});
  auto u01 = m->u({0, 1});
  REQUIRE(u10.band.has_value());
  CHECK(*u10.band == 1.0);
  CHECK_FALSE(u10.hermitian);

  Eigen::MatrixXcd U1 = materialize(u10, modes);
  Eigen::MatrixXcd U2 = materialize(u01, modes);

  // unitarity on the interior: columns with target inside the cutoff have
  // exactly one modulus-one entry
  for (Eigen::Index c = 0; c < U1.cols(); ++c) {
    double colnorm = U1.col(c).norm();
    CHECK((std::abs(colnorm - 1.0) < 1e-14 || colnorm == 0.0));
  }

  // phase convention: <k+m| u(m) |k> = exp((i/2) <m, theta k>)
  for (Eigen::Index j = 0; j < U1.rows(); ++j)
    for (Eigen::Index k = 0; k < U1.cols(); ++k) {
      if (U1(j, k) == cplx(0.0)) continue;
      const Mode& src = modes[std::size_t(k)];
      double phase = 0.5 * (1.0 * t * src.label[1]);  // m=(1,0): theta_12 k_2
      CHECK(std::abs(U1(j, k) - std::polar(1.0, phase)) < 1e-14);
    }

  // u_n u_m = exp((i/2) <n, theta m>) u_{n+m}, checked entrywise away from
  // the cutoff boundary
  Eigen::MatrixXcd lhs = U1 * U2;
  Eigen::MatrixXcd rhs = materialize(m->u({1, 1}), modes);
  cplx rel = std::polar(1.0, 0.5 * t);  // <(1,0), theta (0,1)> = theta_12
  auto inner = m->index_window(0.0, 4.0);
  for (std::size_t j = inner.first; j < inner.second; ++j)
    for (std::size_t k = inner.first; k < inner.second; ++k) {
      CHECK(std::abs(lhs(Eigen::Index(j), Eigen::Index(k)) -
                     rel * rhs(Eigen::Index(j), Eigen::Index(k))) < 1e-14);
    }

  // adjoint pattern equals u(-m)
  Eigen::MatrixXcd uminus = materialize(m->u({-1, 0}), modes);
  CHECK((U1.adjoint() - uminus).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("torus angular symbol") {
  auto m = make_nc_torus(2, theta2(0.7));
  // g(k) = (k1/|k|)^2 - (k2/|k|)^2 + 0.25
  std::vector<NcTorusModel::AngularTerm> terms(3);
  terms[0].coeff = 1.0;
  terms[0].expo = {2, 0};
  terms[1].coeff = -1.0;
  terms[1].expo = {0, 2};
  terms[2].coeff = 0.25;
  auto g = m->angular(terms);
  CHECK(g.hermitian);
  auto modes = m->modes_up_to(2.0);
  Eigen::MatrixXcd gm = materialize(g, modes);
  CHECK((gm - Eigen::MatrixXcd(gm.diagonal().asDiagonal())).cwiseAbs().maxCoeff() ==
        0.0);
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const Mode& mo = modes[i];
    double want = 0.25;
    if (mo.lambda > 0.0) {
      double x1 = mo.label[0] / mo.lambda, x2 = mo.label[1] / mo.lambda;
      want = x1 * x1 - x2 * x2 + 0.25;
    } else {
      want = 0.0;  // configured value at k = 0 defaults to 0
    }
    CHECK(std::abs(gm(Eigen::Index(i), Eigen::Index(i)) - want) < 1e-15);
  }

  auto mz = make_nc_torus(2, theta2(0.7), cplx(0.25));
  auto gz = materialize(mz->angular(terms), mz->modes_up_to(0.0));
  CHECK(gz(0, 0) == cplx(0.25));
  CHECK(gz(1, 1) == cplx(0.25));
}

TEST_CASE("almost-commutative spectrum matches the closed form") {
  Eigen::MatrixXcd df(2, 2);
  df << 1, 0, 0, -1;
  auto m = make_almost_commutative(df);
  CHECK(m->internal_dim() == 2);
  CHECK(m->block_dim() == 4);
  CHECK(m->internal_spectrum()(0) == doctest::Approx(-1.0));
  CHECK(m->internal_spectrum()(1) == doctest::Approx(1.0));

  // every eigenvalue is sqrt(|k|^2 + 1), each momentum contributing 4 modes
  auto modes = m->modes_up_to(10.0);
  for (const auto& mo : modes) {
    double r2 = double(mo.label[0]) * mo.label[0] +
                double(mo.label[1]) * mo.label[1];
    CHECK(std::abs(mo.lambda - std::sqrt(r2 + 1.0)) < 1e-10);
  }

  // closed-form counting: 4 * gauss(sqrt(lambda^2 - 1))
  CHECK(m->counting(10.0) == doctest::Approx(1220.0));
  CHECK(m->counting(20.0) == doctest::Approx(4980.0));
  CHECK(m->counting(40.0) == doctest::Approx(20052.0));
  CHECK(double(m->count_up_to(10.0)) == m->counting(10.0));

  // numeric block diagonalization agrees with the closed form
  const auto& b = m->block(3, 4);
  for (Eigen::Index i = 0; i < b.evals.size(); ++i)
    CHECK(std::abs(std::abs(b.evals(i)) - std::sqrt(26.0)) < 1e-12);
}

TEST_CASE("almost-commutative internal generator") {
  Eigen::MatrixXcd df(2, 2);
  df << 1, 0, 0, -1;
  auto m = make_almost_commutative(df);
  auto a = m->internal(kSigma1);
  CHECK(a.hermitian);
  REQUIRE(a.band.has_value());
  CHECK(*a.band == 2.0);

  auto modes = m->modes_up_to(6.0);
  Eigen::MatrixXcd mat = materialize(a, modes);
  CHECK((mat - mat.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
  // operator norm of a compression of 1 x sigma1 is at most 1
  CHECK(linalg::operator_norm(mat) <= 1.0 + 1e-10);
  // same-momentum off-diagonal structure: entries between different momenta
  // vanish
  for (std::size_t j = 0; j < modes.size(); ++j)
    for (std::size_t k = 0; k < modes.size(); ++k) {
      if (modes[j].label[0] != modes[k].label[0] ||
          modes[j].label[1] != modes[k].label[1])
        CHECK(mat(Eigen::Index(j), Eigen::Index(k)) == cplx(0.0));
    }

  // base translation u(1,0) x 1 has unimodular singular-vector overlaps
  auto u = m->u(1, 0);
  Eigen::MatrixXcd um = materialize(u, modes);
  auto win = m->index_window(0.0, 4.0);
  Eigen::Index n0 = Eigen::Index(win.second);
  Eigen::MatrixXcd uu = (um.adjoint() * um).topLeftCorner(n0, n0);
  // interior columns are unit vectors (compression loses only boundary mass)
  CHECK(std::abs(uu(0, 0).real() - 1.0) < 1e-12);
}

TEST_CASE("commutator norms: bounded symbols") {
  auto circle = make_circle();
  // [|D|, e^{i theta}] has norm exactly 1 (shift changes |n| by at most 1)
  double c1 = commutator_norm_check(*circle, circle->mult({0.0, 0.0, 1.0}), 40.0);
  CHECK(c1 == doctest::Approx(1.0).epsilon(1e-10));
  // diagonal symbols commute
  CHECK(commutator_norm_check(*circle, circle->proj_pos(), 40.0) < 1e-14);

  auto torus = make_nc_torus(2, theta2(0.7));
  double cu = commutator_norm_check(*torus, torus->u({1, 0}), 12.0);
  CHECK(cu <= 1.0 + 1e-10);
  double cu2 = commutator_norm_check(*torus, torus->u({3, 4}), 12.0);
  CHECK(cu2 <= 5.0 + 1e-10);
  CHECK(cu2 > 1.0);  // the bound |m| is attained in order of magnitude

  CHECK_THROWS_AS(commutator_norm_check(*torus, torus->u({1, 0}), 500.0),
                  ResourceLimitError);
}

TEST_CASE("unknown generators and bad arguments are rejected") {
  auto m = make_circle();
  CHECK_THROWS_AS(m->generator("nope", {}), std::invalid_argument);
  CHECK_THROWS_AS(m->generator("mult", {}), std::invalid_argument);
  CHECK_THROWS_AS(m->generator("dpow", {cplx(0, 1)}), std::invalid_argument);
  CHECK_THROWS_AS(m->generator("sign_symbol", {1.0}), std::invalid_argument);

  auto t = make_nc_torus(2, theta2(0.5));
  CHECK_THROWS_AS(t->generator("u", {cplx(0.5)}), std::invalid_argument);
  CHECK_THROWS_AS(t->generator("u", {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(t->generator("angular", {1.0, 2.0}), std::invalid_argument);

  Eigen::MatrixXd bad(2, 2);
  bad << 0, 1, 1, 0;  // symmetric, not antisymmetric
  CHECK_THROWS_AS(make_nc_torus(2, bad), std::invalid_argument);

  Eigen::MatrixXcd nh(2, 2);
  nh << 0, 1, 0, 0;
  CHECK_THROWS_AS(make_almost_commutative(nh), std::invalid_argument);

  auto ac = make_almost_commutative(
      (Eigen::MatrixXcd(2, 2) << 1, 0, 0, -1).finished());
  CHECK_THROWS_AS(ac->generator("internal", {1.0, 2.0, 3.0}),
                  std::invalid_argument);

  for (const std::shared_ptr<SpectralModel>& mm :
       std::initializer_list<std::shared_ptr<SpectralModel>>{m, t, ac}) {
    for (const auto& g : mm->generator_names()) CHECK_FALSE(g.empty());
  }
}

TEST_CASE("table access is safe under concurrency") {
  auto m = make_nc_torus(2, theta2(0.4));
  std::vector<std::thread> workers;
  std::atomic<int> failures{0};
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      for (int i = 0; i < 20; ++i) {
        double lam = 2.0 + (w * 20 + i) % 17;
        auto modes = m->modes_up_to(lam);
        if (double(modes.size()) != m->counting(lam)) ++failures;
      }
    });
  }
  for (auto& t : workers) t.join();
  CHECK(failures.load() == 0);
}
