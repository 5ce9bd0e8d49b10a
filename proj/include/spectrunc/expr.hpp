#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectrunc/common.hpp"
#include "spectrunc/models.hpp"

namespace spectrunc::expr {

// Operator expression AST. Scalars act as multiples of the identity.
// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor ('*' factor)*
//   factor := scalar | name '(' args ')' | name | 'adj(' expr ')'
//           | 'pow(' expr ',' int ')' | '(' expr ')'
//   scalar := signed decimal, optional trailing 'i'
// Generator arguments additionally accept composites like 1+2i.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Scalar, Gen, Add, Sub, Mul, Adj, Pow };
  Kind kind;
  cplx scalar{};                 // Scalar
  std::string gen;               // Gen
  std::vector<cplx> args;        // Gen
  ExprPtr a, b;                  // children (b unused for Adj/Pow)
  int power = 0;                 // Pow
};

struct ParseError : std::invalid_argument {
  ParseError(const std::string& what, int line, int column)
      : std::invalid_argument(what + " (line " + std::to_string(line) +
                              ", column " + std::to_string(column) + ")"),
        line(line),
        column(column) {}
  int line;
  int column;
};

// Parses and validates generator names/arity against the model.
ExprPtr parse(const std::string& src, const models::SpectralModel& model);

// Canonical fully parenthesized form; parse(pretty(e)) prints identically.
std::string pretty(const Expr& e);

// Compiles the AST to an entry oracle. Products contract over structural
// support sets when available, else over eigenvalue windows via the model.
models::MatrixOracle compile(const Expr& e,
                             std::shared_ptr<const models::SpectralModel> model);

// Convenience: parse then compile.
models::MatrixOracle compile(const std::string& src,
                             std::shared_ptr<const models::SpectralModel> model);

}  // namespace spectrunc::expr
