#include "spectrunc/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace spectrunc::expr {

namespace {

using models::MatrixOracle;
using models::Mode;
using models::SpectralModel;

// --------------------------------------------------------------------------
// lexer

struct Token {
  enum class Kind { Number, Ident, Punct, End };
  Kind kind;
  std::string text;
  double value = 0.0;
  bool imaginary = false;  // number carried a trailing 'i'
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return current_; }

  Token take() {
    Token t = current_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, current_.line, current_.column);
  }

 private:
  void advance() {
    while (pos_ < src_.size() &&
           std::isspace(static_cast<unsigned char>(src_[pos_]))) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
    current_.line = line_;
    current_.column = col_;
    if (pos_ >= src_.size()) {
      current_.kind = Token::Kind::End;
      current_.text.clear();
      return;
    }
    char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      lex_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '_'))
        consume();
      current_.kind = Token::Kind::Ident;
      current_.text = src_.substr(start, pos_ - start);
      return;
    }
    if (std::string("()+-*,").find(c) != std::string::npos) {
      current_.kind = Token::Kind::Punct;
      current_.text = std::string(1, c);
      consume();
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
  }

  void lex_number() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
            src_[pos_] == '.'))
      consume();
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t mark = pos_;
      consume();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) consume();
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        while (pos_ < src_.size() &&
               std::isdigit(static_cast<unsigned char>(src_[pos_])))
          consume();
      } else {  // not an exponent after all
        col_ -= int(pos_ - mark);
        pos_ = mark;
      }
    }
    std::string text = src_.substr(start, pos_ - start);
    double v = 0.0;
    auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size())
      throw ParseError("malformed number '" + text + "'", line_, col_);
    current_.kind = Token::Kind::Number;
    current_.text = text;
    current_.value = v;
    current_.imaginary = false;
    if (pos_ < src_.size() && src_[pos_] == 'i') {
      // only a bare 'i' suffix; 'id', 'internal' etc. stay identifiers
      bool next_alnum =
          pos_ + 1 < src_.size() &&
          (std::isalnum(static_cast<unsigned char>(src_[pos_ + 1])) ||
           src_[pos_ + 1] == '_');
      if (!next_alnum) {
        current_.imaginary = true;
        consume();
      }
    }
  }

  void consume() {
    ++pos_;
    ++col_;
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token current_;
};

// --------------------------------------------------------------------------
// parser

class Parser {
 public:
  Parser(const std::string& src, const SpectralModel& model)
      : lex_(src), model_(model) {}

  ExprPtr run() {
    ExprPtr e = parse_expr();
    if (lex_.peek().kind != Token::Kind::End)
      lex_.fail("trailing input after expression");
    return e;
  }

 private:
  bool at_punct(const char* p) const {
    return lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == p;
  }

  void expect_punct(const char* p) {
    if (!at_punct(p)) lex_.fail(std::string("expected '") + p + "'");
    lex_.take();
  }

  ExprPtr parse_expr() {
    ExprPtr left = parse_term();
    while (at_punct("+") || at_punct("-")) {
      bool plus = lex_.take().text == "+";
      ExprPtr right = parse_term();
      auto node = std::make_shared<Expr>();
      node->kind = plus ? Expr::Kind::Add : Expr::Kind::Sub;
      node->a = left;
      node->b = right;
      left = node;
    }
    return left;
  }

  ExprPtr parse_term() {
    ExprPtr left = parse_factor();
    while (at_punct("*")) {
      lex_.take();
      ExprPtr right = parse_factor();
      auto node = std::make_shared<Expr>();
      node->kind = Expr::Kind::Mul;
      node->a = left;
      node->b = right;
      left = node;
    }
    return left;
  }

  ExprPtr parse_factor() {
    const Token& t = lex_.peek();
    if (t.kind == Token::Kind::Number ||
        (t.kind == Token::Kind::Punct && t.text == "-")) {
      return make_scalar(parse_signed_number());
    }
    if (t.kind == Token::Kind::Punct && t.text == "(") {
      lex_.take();
      ExprPtr inner = parse_expr();
      expect_punct(")");
      return inner;
    }
    if (t.kind == Token::Kind::Ident) {
      Token name = lex_.take();
      if (name.text == "adj") return parse_adj();
      if (name.text == "pow") return parse_pow();
      return parse_generator(name);
    }
    lex_.fail("expected a scalar, generator, or parenthesized expression");
  }

  ExprPtr parse_adj() {
    expect_punct("(");
    ExprPtr inner = parse_expr();
    expect_punct(")");
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Adj;
    node->a = inner;
    return node;
  }

  ExprPtr parse_pow() {
    expect_punct("(");
    ExprPtr inner = parse_expr();
    expect_punct(",");
    cplx p = parse_signed_number();
    if (p.imag() != 0.0 || p.real() != std::floor(p.real()) || p.real() < 0.0)
      lex_.fail("pow exponent must be a nonnegative integer");
    expect_punct(")");
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Pow;
    node->a = inner;
    node->power = int(p.real());
    return node;
  }

  ExprPtr parse_generator(const Token& name) {
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Gen;
    node->gen = name.text;
    if (at_punct("(")) {
      lex_.take();
      if (!at_punct(")")) {
        node->args.push_back(parse_scalar_arg());
        while (at_punct(",")) {
          lex_.take();
          node->args.push_back(parse_scalar_arg());
        }
      }
      expect_punct(")");
    }
    try {
      model_.generator(node->gen, node->args);  // validates name and arity
    } catch (const std::invalid_argument& err) {
      throw ParseError(err.what(), name.line, name.column);
    }
    return node;
  }

  // one signed number with optional 'i'
  cplx parse_signed_number() {
    double sign = 1.0;
    if (at_punct("-")) {
      lex_.take();
      sign = -1.0;
    } else if (at_punct("+")) {
      lex_.take();
    }
    if (lex_.peek().kind != Token::Kind::Number) lex_.fail("expected a number");
    Token num = lex_.take();
    return num.imaginary ? cplx(0.0, sign * num.value) : cplx(sign * num.value);
  }

  // argument scalar: a, bi, or a+bi / a-bi composites
  cplx parse_scalar_arg() {
    cplx first = parse_signed_number();
    if ((at_punct("+") || at_punct("-")) && first.imag() == 0.0) {
      bool plus = lex_.take().text == "+";
      if (lex_.peek().kind != Token::Kind::Number || !lex_.peek().imaginary)
        lex_.fail("expected an imaginary part after sign");
      Token im = lex_.take();
      return cplx(first.real(), plus ? im.value : -im.value);
    }
    return first;
  }

  static ExprPtr make_scalar(cplx v) {
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Scalar;
    node->scalar = v;
    return node;
  }

  Lexer lex_;
  const SpectralModel& model_;
};

// --------------------------------------------------------------------------
// printing

std::string print_scalar(cplx v) {
  if (v.imag() == 0.0) return format_double(v.real());
  if (v.real() == 0.0) return format_double(v.imag()) + "i";
  std::string out = format_double(v.real());
  if (v.imag() >= 0.0) out += "+" + format_double(v.imag()) + "i";
  else out += "-" + format_double(-v.imag()) + "i";
  return out;
}

// --------------------------------------------------------------------------
// compilation

std::vector<Mode> dedupe(std::vector<Mode> modes) {
  std::sort(modes.begin(), modes.end(),
            [](const Mode& a, const Mode& b) { return models::label_less(a, b); });
  modes.erase(std::unique(modes.begin(), modes.end(),
                          [](const Mode& a, const Mode& b) {
                            return models::same_label(a, b);
                          }),
              modes.end());
  return modes;
}

MatrixOracle compile_scalar(cplx c) {
  MatrixOracle o;
  o.entry = [c](const Mode& j, const Mode& k) -> cplx {
    return models::same_label(j, k) ? c : 0.0;
  };
  o.band = 0.0;
  o.hermitian = c.imag() == 0.0;
  o.col_support = [](const Mode& k) { return std::vector<Mode>{k}; };
  o.row_support = o.col_support;
  return o;
}

MatrixOracle compile_linear(const MatrixOracle& a, const MatrixOracle& b,
                            double sign, bool adj_pair) {
  MatrixOracle o;
  o.entry = [ea = a.entry, eb = b.entry, sign](const Mode& j,
                                               const Mode& k) -> cplx {
    return ea(j, k) + sign * eb(j, k);
  };
  if (a.band && b.band) o.band = std::max(*a.band, *b.band);
  o.hermitian = (a.hermitian && b.hermitian) || adj_pair;
  if (a.col_support && b.col_support)
    o.col_support = [ca = a.col_support, cb = b.col_support](const Mode& k) {
      auto out = ca(k);
      auto more = cb(k);
      out.insert(out.end(), more.begin(), more.end());
      return dedupe(std::move(out));
    };
  if (a.row_support && b.row_support)
    o.row_support = [ra = a.row_support, rb = b.row_support](const Mode& j) {
      auto out = ra(j);
      auto more = rb(j);
      out.insert(out.end(), more.begin(), more.end());
      return dedupe(std::move(out));
    };
  return o;
}

MatrixOracle compile_mul(const MatrixOracle& a, const MatrixOracle& b,
                         std::shared_ptr<const SpectralModel> model,
                         bool adj_pair) {
  MatrixOracle o;
  if (b.col_support) {
    o.entry = [ea = a.entry, eb = b.entry, cb = b.col_support](
                  const Mode& j, const Mode& k) -> cplx {
      cplx acc = 0.0;
      for (const Mode& p : cb(k)) {
        cplx bv = eb(p, k);
        if (bv == cplx(0.0)) continue;
        acc += ea(j, p) * bv;
      }
      return acc;
    };
  } else if (a.row_support) {
    o.entry = [ea = a.entry, eb = b.entry, ra = a.row_support](
                  const Mode& j, const Mode& k) -> cplx {
      cplx acc = 0.0;
      for (const Mode& p : ra(j)) {
        cplx av = ea(j, p);
        if (av == cplx(0.0)) continue;
        acc += av * eb(p, k);
      }
      return acc;
    };
  } else if (a.band || b.band) {
    // contract over an eigenvalue window around whichever side is banded
    o.entry = [ea = a.entry, eb = b.entry, ba = a.band, bb = b.band,
               model](const Mode& j, const Mode& k) -> cplx {
      double lo = 0.0, hi = -1.0;
      if (ba) {
        lo = j.lambda - *ba;
        hi = j.lambda + *ba;
      }
      if (bb) {
        double lo2 = k.lambda - *bb, hi2 = k.lambda + *bb;
        if (ba) {
          lo = std::max(lo, lo2);
          hi = std::min(hi, hi2);
        } else {
          lo = lo2;
          hi = hi2;
        }
      }
      auto window = model->index_window(std::max(0.0, lo), hi);
      cplx acc = 0.0;
      for (std::size_t p = window.first; p < window.second; ++p) {
        Mode mp = model->mode(p);
        cplx bv = eb(mp, k);
        if (bv == cplx(0.0)) continue;
        acc += ea(j, mp) * bv;
      }
      return acc;
    };
  } else {
    throw UnsupportedOperatorError(
        "compile: product of two operators without band or support structure");
  }
  if (a.band && b.band) o.band = *a.band + *b.band;
  o.hermitian = adj_pair;
  if (a.col_support && b.col_support)
    o.col_support = [ca = a.col_support, cb = b.col_support](const Mode& k) {
      std::vector<Mode> out;
      for (const Mode& p : cb(k)) {
        auto up = ca(p);
        out.insert(out.end(), up.begin(), up.end());
      }
      return dedupe(std::move(out));
    };
  if (a.row_support && b.row_support)
    o.row_support = [ra = a.row_support, rb = b.row_support](const Mode& j) {
      std::vector<Mode> out;
      for (const Mode& p : ra(j)) {
        auto down = rb(p);
        out.insert(out.end(), down.begin(), down.end());
      }
      return dedupe(std::move(out));
    };
  return o;
}

MatrixOracle compile_adj(const MatrixOracle& a) {
  MatrixOracle o;
  o.entry = [ea = a.entry](const Mode& j, const Mode& k) -> cplx {
    return std::conj(ea(k, j));
  };
  o.band = a.band;
  o.hermitian = a.hermitian;
  o.col_support = a.row_support;
  o.row_support = a.col_support;
  return o;
}

bool prints_equal(const ExprPtr& x, const ExprPtr& y) {
  return x && y && pretty(*x) == pretty(*y);
}

}  // namespace

ExprPtr parse(const std::string& src, const SpectralModel& model) {
  if (src.empty()) throw ParseError("empty expression", 1, 1);
  return Parser(src, model).run();
}

std::string pretty(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Scalar:
      return print_scalar(e.scalar);
    case Expr::Kind::Gen: {
      if (e.args.empty()) return e.gen;
      std::string out = e.gen + "(";
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        out += print_scalar(e.args[i]);
      }
      return out + ")";
    }
    case Expr::Kind::Add:
      return "(" + pretty(*e.a) + " + " + pretty(*e.b) + ")";
    case Expr::Kind::Sub:
      return "(" + pretty(*e.a) + " - " + pretty(*e.b) + ")";
    case Expr::Kind::Mul:
      return "(" + pretty(*e.a) + " * " + pretty(*e.b) + ")";
    case Expr::Kind::Adj:
      return "adj(" + pretty(*e.a) + ")";
    case Expr::Kind::Pow:
      return "pow(" + pretty(*e.a) + ", " + std::to_string(e.power) + ")";
  }
  throw std::logic_error("pretty: unreachable");
}

models::MatrixOracle compile(const Expr& e,
                             std::shared_ptr<const SpectralModel> model) {
  switch (e.kind) {
    case Expr::Kind::Scalar:
      return compile_scalar(e.scalar);
    case Expr::Kind::Gen:
      return model->generator(e.gen, e.args);
    case Expr::Kind::Add:
    case Expr::Kind::Sub: {
      // X + adj(X) (and X - adj(X) times i, left to callers) stay hermitian;
      // detect the exact adjoint-pair shape structurally
      bool adj_pair = e.kind == Expr::Kind::Add &&
                      ((e.b->kind == Expr::Kind::Adj && prints_equal(e.a, e.b->a)) ||
                       (e.a->kind == Expr::Kind::Adj && prints_equal(e.b, e.a->a)));
      return compile_linear(compile(*e.a, model), compile(*e.b, model),
                            e.kind == Expr::Kind::Add ? 1.0 : -1.0, adj_pair);
    }
    case Expr::Kind::Mul: {
      bool adj_pair =
          (e.a->kind == Expr::Kind::Adj && prints_equal(e.a->a, e.b)) ||
          (e.b->kind == Expr::Kind::Adj && prints_equal(e.a, e.b->a));
      return compile_mul(compile(*e.a, model), compile(*e.b, model), model,
                         adj_pair);
    }
    case Expr::Kind::Adj:
      return compile_adj(compile(*e.a, model));
    case Expr::Kind::Pow: {
      if (e.power == 0) return compile_scalar(1.0);
      MatrixOracle base = compile(*e.a, model);
      MatrixOracle acc = base;
      for (int i = 1; i < e.power; ++i) acc = compile_mul(acc, base, model, false);
      // even powers of hermitian operators stay hermitian; so do all powers
      acc.hermitian = base.hermitian;
      return acc;
    }
  }
  throw std::logic_error("compile: unreachable");
}

models::MatrixOracle compile(const std::string& src,
                             std::shared_ptr<const SpectralModel> model) {
  return compile(*parse(src, *model), model);
}

}  // namespace spectrunc::expr
