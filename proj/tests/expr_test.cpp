#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "spectrunc/expr.hpp"

#include <cmath>
#include <random>

using namespace spectrunc;
using namespace spectrunc::models;
namespace ex = spectrunc::expr;

namespace {

Eigen::MatrixXd theta2(double t) {
  Eigen::MatrixXd th(2, 2);
  th << 0.0, t, -t, 0.0;
  return th;
}

Eigen::MatrixXcd eval(const MatrixOracle& o, const SpectralModel& m, double lam) {
  return materialize(o, m.modes_up_to(lam));
}

}  // namespace

TEST_CASE("parse and compile: hermitian adjoint pairs on the torus") {
  auto m = make_nc_torus(2, theta2(0.7));
  auto o = ex::compile("u(1,0) + adj(u(1,0))", m);
  CHECK(o.hermitian);
  REQUIRE(o.band.has_value());
  CHECK(*o.band == 1.0);
  auto mat = eval(o, *m, 4.0);
  CHECK((mat - mat.adjoint()).cwiseAbs().maxCoeff() < 1e-14);

  auto prod = ex::compile("adj(u(1,0)) * u(1,0)", m);
  CHECK(prod.hermitian);
  auto pm = eval(prod, *m, 4.0);
  CHECK((pm - Eigen::MatrixXcd::Identity(pm.rows(), pm.cols())).cwiseAbs()
            .maxCoeff() < 1e-14);
}

TEST_CASE("unitarity relation through the parser, with phases") {
  auto m = make_nc_torus(2, theta2(0.7));
  auto left = ex::compile("u(1,0) * u(0,1)", m);
  auto right = ex::compile("u(1,1)", m);
  auto lm = eval(left, *m, 5.0);
  auto rm = eval(right, *m, 5.0);
  cplx rel = std::polar(1.0, 0.5 * 0.7);  // e^{(i/2) <n, theta m>}
  CHECK((lm - rel * rm).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("toeplitz coefficient convention") {
  auto m = make_toeplitz();
  auto o = ex::compile("toeplitz(0,1,1)", m);
  auto mat = eval(o, *m, 5.0);
  for (Eigen::Index j = 0; j < mat.rows(); ++j)
    for (Eigen::Index k = 0; k < mat.cols(); ++k) {
      cplx want = (j == k || j == k + 1) ? 1.0 : 0.0;  // c_0 = c_1 = 1
      CHECK(mat(j, k) == want);
    }
}

TEST_CASE("pow expands Fourier convolutions") {
  auto m = make_circle();
  auto sq = ex::compile("pow(mult(1,0,1), 2)", m);
  auto direct = ex::compile("mult(1,0,2,0,1)", m);
  auto a = eval(sq, *m, 8.0);
  auto b = eval(direct, *m, 8.0);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE(sq.band.has_value());
  CHECK(*sq.band == 2.0);
  CHECK(sq.hermitian);

  auto one = ex::compile("pow(mult(0,0,1), 0)", m);
  auto id = eval(one, *m, 3.0);
  CHECK(id == Eigen::MatrixXcd::Identity(7, 7));
}

TEST_CASE("adjoint conjugate-transposes entries") {
  auto m = make_circle();
  auto adj = ex::compile("adj(mult(0,0,3i))", m);
  auto low = ex::compile("mult(-3i,0,0)", m);
  CHECK((eval(adj, *m, 5.0) - eval(low, *m, 5.0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalars, precedence, and linear combinations") {
  auto m = make_circle();
  auto o = ex::compile("id + 2*proj_pos", m);
  auto mat = eval(o, *m, 2.0);
  // order 0,-1,1,-2,2: proj_pos diag 1,0,1,0,1
  Eigen::VectorXcd want(5);
  want << 3, 1, 3, 1, 3;
  CHECK(Eigen::VectorXcd(mat.diagonal()) == want);

  auto neg = ex::compile("2*id - id", m);
  CHECK(eval(neg, *m, 2.0) == Eigen::MatrixXcd::Identity(5, 5));

  auto im = ex::compile("0.5i*id", m);
  CHECK_FALSE(im.hermitian);
  CHECK(eval(im, *m, 1.0)(0, 0) == cplx(0.0, 0.5));

  auto folded = ex::compile("-2*id", m);
  CHECK(eval(folded, *m, 1.0)(0, 0) == cplx(-2.0));

  auto composite = ex::compile("(1+2i)*id", m);
  CHECK(eval(composite, *m, 1.0)(0, 0) == cplx(1.0, 2.0));
}

TEST_CASE("complex generator arguments parse as single scalars") {
  auto m = make_toeplitz();
  auto o = ex::compile("finite_rank(1, 1+2i, 1-2i, 0)", m);
  auto mat = eval(o, *m, 3.0);
  CHECK(mat(0, 1) == cplx(1.0, 2.0));
  CHECK(mat(1, 0) == cplx(1.0, -2.0));
  CHECK(o.hermitian);
}

TEST_CASE("parse errors carry position and reason") {
  auto m = make_circle();
  CHECK_THROWS_AS(ex::parse("", *m), ex::ParseError);
  CHECK_THROWS_AS(ex::parse("(id", *m), ex::ParseError);
  CHECK_THROWS_AS(ex::parse("id id", *m), ex::ParseError);
  CHECK_THROWS_AS(ex::parse("nope(1)", *m), ex::ParseError);
  CHECK_THROWS_AS(ex::parse("mult(1,1)", *m), ex::ParseError);
  CHECK_THROWS_AS(ex::parse("pow(id, -1)", *m), ex::ParseError);
  CHECK_THROWS_AS(ex::parse("sign_symbol(1,2)", *m), ex::ParseError);
  CHECK_THROWS_AS(ex::parse("id @ id", *m), ex::ParseError);

  try {
    ex::parse("id +\n  @", *m);
    FAIL("expected a parse error");
  } catch (const ex::ParseError& e) {
    CHECK(e.line == 2);
    CHECK(e.column == 3);
  }

  try {
    ex::parse("u(1,0)", *m);  // circle has no u generator
    FAIL("expected a parse error");
  } catch (const ex::ParseError& e) {
    CHECK(std::string(e.what()).find("unknown generator") != std::string::npos);
  }
}

TEST_CASE("torus arity is model-dependent") {
  auto t3 = make_nc_torus(3, Eigen::MatrixXd::Zero(3, 3));
  CHECK_THROWS_AS(ex::parse("u(1,0)", *t3), ex::ParseError);
  CHECK_NOTHROW(ex::parse("u(1,0,2)", *t3));
  CHECK(t3->spinor_dim() == 2);
}

namespace {

ex::ExprPtr random_scalar(std::mt19937& rng) {
  std::uniform_real_distribution<double> val(-4.0, 4.0);
  auto node = std::make_shared<ex::Expr>();
  node->kind = ex::Expr::Kind::Scalar;
  double v = std::round(val(rng) * 64.0) / 64.0;
  node->scalar = (rng() % 2) ? cplx(v) : cplx(0.0, v);
  return node;
}

ex::ExprPtr random_gen(std::mt19937& rng) {
  auto node = std::make_shared<ex::Expr>();
  node->kind = ex::Expr::Kind::Gen;
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  switch (rng() % 4) {
    case 0:
      node->gen = "id";
      break;
    case 1:
      node->gen = "proj_pos";
      break;
    case 2: {
      node->gen = "mult";
      std::size_t m = rng() % 3;
      for (std::size_t i = 0; i < 2 * m + 1; ++i) {
        double re = std::round(val(rng) * 32.0) / 32.0;
        double imv = std::round(val(rng) * 32.0) / 32.0;
        node->args.push_back(cplx(re, imv));
      }
      break;
    }
    default:
      node->gen = "sign_symbol";
      for (int i = 0; i < 3; ++i)
        node->args.push_back(cplx(std::round(val(rng) * 32.0) / 32.0));
  }
  return node;
}

ex::ExprPtr random_expr(std::mt19937& rng, int depth) {
  if (depth <= 0 || rng() % 4 == 0)
    return (rng() % 3 == 0) ? random_scalar(rng) : random_gen(rng);
  auto node = std::make_shared<ex::Expr>();
  switch (rng() % 5) {
    case 0:
      node->kind = ex::Expr::Kind::Add;
      node->a = random_expr(rng, depth - 1);
      node->b = random_expr(rng, depth - 1);
      break;
    case 1:
      node->kind = ex::Expr::Kind::Sub;
      node->a = random_expr(rng, depth - 1);
      node->b = random_expr(rng, depth - 1);
      break;
    case 2:
      node->kind = ex::Expr::Kind::Mul;
      node->a = random_expr(rng, depth - 1);
      node->b = random_expr(rng, depth - 1);
      break;
    case 3:
      node->kind = ex::Expr::Kind::Adj;
      node->a = random_expr(rng, depth - 1);
      break;
    default:
      node->kind = ex::Expr::Kind::Pow;
      node->a = random_expr(rng, depth - 1);
      node->power = int(rng() % 4);
  }
  return node;
}

}  // namespace

TEST_CASE("round-trip: printing reparses to the same canonical form") {
  auto m = make_circle();
  std::mt19937 rng(20260815);
  for (int trial = 0; trial < 200; ++trial) {
    auto e = random_expr(rng, 3);
    std::string once = ex::pretty(*e);
    auto back = ex::parse(once, *m);
    std::string twice = ex::pretty(*back);
    CAPTURE(once);
    CHECK(once == twice);
  }
}
