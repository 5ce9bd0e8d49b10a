#include "spectrunc/models.hpp"

#include <algorithm>
#include <cmath>

#include "spectrunc/linalg.hpp"

namespace spectrunc::models {

bool same_label(const Mode& a, const Mode& b) {
  if (a.label_size != b.label_size) return false;
  for (int i = 0; i < a.label_size; ++i)
    if (a.label[i] != b.label[i]) return false;
  return true;
}

bool label_less(const Mode& a, const Mode& b) {
  int n = std::min(a.label_size, b.label_size);
  for (int i = 0; i < n; ++i) {
    if (a.label[i] != b.label[i]) return a.label[i] < b.label[i];
  }
  return a.label_size < b.label_size;
}

namespace {

bool mode_less(const Mode& a, const Mode& b) {
  if (a.lambda != b.lambda) return a.lambda < b.lambda;
  return label_less(a, b);
}

long long isqrt_floor(double v) {
  if (v < 0.0) return -1;  // empty range marker
  long long r = static_cast<long long>(std::sqrt(v));
  while (r > 0 && double(r) * double(r) > v) --r;
  while (double(r + 1) * double(r + 1) <= v) ++r;
  return r;
}

// integer points of Z^dims with |x|^2 <= rem
double lattice_ball_count(double rem, int dims) {
  if (rem < 0.0) return 0.0;
  long long top = isqrt_floor(rem);
  if (dims == 1) return double(2 * top + 1);
  double total = 0.0;
  for (long long x = -top; x <= top; ++x)
    total += lattice_ball_count(rem - double(x) * double(x), dims - 1);
  return total;
}

void lattice_ball_visit(double rem, int dims, std::vector<int>& prefix,
                        const std::function<void(const std::vector<int>&)>& fn) {
  if (rem < 0.0) return;
  long long top = isqrt_floor(rem);
  if (dims == 0) {
    fn(prefix);
    return;
  }
  for (long long x = -top; x <= top; ++x) {
    prefix.push_back(int(x));
    lattice_ball_visit(rem - double(x) * double(x), dims - 1, prefix, fn);
    prefix.pop_back();
  }
}

void check_arity(const std::string& gen, const std::vector<cplx>& args,
                 std::size_t n) {
  if (args.size() != n)
    throw std::invalid_argument("generator " + gen + ": expected " +
                                std::to_string(n) + " arguments, got " +
                                std::to_string(args.size()));
}

int int_arg(const std::string& gen, cplx v) {
  if (v.imag() != 0.0 || v.real() != std::floor(v.real()))
    throw std::invalid_argument("generator " + gen + ": argument must be an integer");
  return int(v.real());
}

Eigen::MatrixXcd square_matrix_from_args(const std::string& gen,
                                         const std::vector<cplx>& args) {
  auto m = static_cast<Eigen::Index>(std::llround(std::sqrt(double(args.size()))));
  if (m < 1 || std::size_t(m * m) != args.size())
    throw std::invalid_argument("generator " + gen +
                                ": argument list must be a square matrix, row-major");
  Eigen::MatrixXcd a(m, m);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < m; ++c) a(r, c) = args[std::size_t(r * m + c)];
  return a;
}

bool coeffs_hermitian(const std::vector<cplx>& c) {
  std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i)
    if (c[i] != std::conj(c[n - 1 - i])) return false;
  return true;
}

constexpr double kEvalSlack = 1e-9;  // guards fp jitter at inclusion boundaries

void self_support(MatrixOracle& o) {
  o.col_support = [](const Mode& k) { return std::vector<Mode>{k}; };
  o.row_support = o.col_support;
}

Mode line_mode(int n) {
  Mode m;
  m.label[0] = n;
  m.label_size = 1;
  m.lambda = double(std::abs(n));
  return m;
}

std::vector<int> coeff_offsets(const std::vector<cplx>& coeffs) {
  int m = int(coeffs.size() / 2);
  std::vector<int> offs;
  for (int dn = -m; dn <= m; ++dn)
    if (coeffs[std::size_t(m + dn)] != 0.0) offs.push_back(dn);
  return offs;
}

}  // namespace

// ---------------------------------------------------------------------------
// base table machinery

void SpectralModel::ensure_covered(double lambda) const {
  if (lambda <= covered_) return;
  double target = std::max(lambda, covered_ <= 0.0 ? 4.0 : 2.0 * covered_);
  std::vector<Mode> fresh;
  generate(target, fresh);
  std::sort(fresh.begin(), fresh.end(), mode_less);
  table_ = std::move(fresh);
  table_lambdas_.resize(table_.size());
  for (std::size_t i = 0; i < table_.size(); ++i) {
    table_[i].index = i;
    table_lambdas_[i] = table_[i].lambda;
  }
  covered_ = target;
}

void SpectralModel::ensure_count(std::size_t count) const {
  while (table_.size() < count) {
    double next = covered_ <= 0.0 ? 4.0 : 2.0 * covered_;
    ensure_covered(next);
  }
}

std::size_t SpectralModel::count_up_to(double lambda) const {
  std::lock_guard<std::mutex> lk(table_mutex_);
  if (lambda < 0.0) return 0;
  ensure_covered(lambda);
  return std::size_t(std::upper_bound(table_lambdas_.begin(), table_lambdas_.end(),
                                      lambda) -
                     table_lambdas_.begin());
}

Mode SpectralModel::mode(std::size_t index) const {
  std::lock_guard<std::mutex> lk(table_mutex_);
  ensure_count(index + 1);
  return table_[index];
}

std::vector<Mode> SpectralModel::modes_up_to(double lambda) const {
  std::lock_guard<std::mutex> lk(table_mutex_);
  if (lambda < 0.0) return {};
  ensure_covered(lambda);
  auto it = std::upper_bound(table_lambdas_.begin(), table_lambdas_.end(), lambda);
  return std::vector<Mode>(table_.begin(),
                           table_.begin() + (it - table_lambdas_.begin()));
}

std::vector<Mode> SpectralModel::modes_prefix(std::size_t count) const {
  std::lock_guard<std::mutex> lk(table_mutex_);
  ensure_count(count);
  return std::vector<Mode>(table_.begin(), table_.begin() + count);
}

std::pair<std::size_t, std::size_t> SpectralModel::index_window(double lo,
                                                                double hi) const {
  std::lock_guard<std::mutex> lk(table_mutex_);
  if (hi < 0.0 || hi < lo) return {0, 0};
  ensure_covered(hi);
  auto first = std::lower_bound(table_lambdas_.begin(), table_lambdas_.end(), lo);
  auto last = std::upper_bound(table_lambdas_.begin(), table_lambdas_.end(), hi);
  return {std::size_t(first - table_lambdas_.begin()),
          std::size_t(last - table_lambdas_.begin())};
}

double SpectralModel::counting(double lambda) const {
  return double(count_up_to(lambda));
}

std::vector<double> SpectralModel::distinct_eigenvalues(double lambda) const {
  std::lock_guard<std::mutex> lk(table_mutex_);
  std::vector<double> out;
  if (lambda < 0.0) return out;
  ensure_covered(lambda);
  for (double v : table_lambdas_) {
    if (v > lambda) break;
    if (out.empty() || v > out.back() + 1e-9 * (1.0 + out.back())) out.push_back(v);
  }
  return out;
}

double SpectralModel::snap_cutoff(double lambda) const {
  auto r = distinct_eigenvalues(lambda);
  if (r.empty())
    throw std::invalid_argument(name_ + ": no eigenvalue at or below cutoff " +
                                format_double(lambda));
  return r.back();
}

void SpectralModel::unknown_generator(const std::string& gen) const {
  throw std::invalid_argument("unknown generator '" + gen + "' for model " + name_);
}

MatrixOracle SpectralModel::identity() const {
  MatrixOracle o;
  o.entry = [](const Mode& j, const Mode& k) -> cplx {
    return same_label(j, k) ? 1.0 : 0.0;
  };
  o.band = 0.0;
  o.hermitian = true;
  self_support(o);
  return o;
}

MatrixOracle SpectralModel::d_power(double p) const {
  MatrixOracle o;
  o.entry = [p](const Mode& j, const Mode& k) -> cplx {
    if (!same_label(j, k)) return 0.0;
    return std::pow(1.0 + j.lambda * j.lambda, 0.5 * p);
  };
  o.band = 0.0;
  o.hermitian = true;
  self_support(o);
  return o;
}

// ---------------------------------------------------------------------------
// circle

void CircleModel::generate(double lambda_max, std::vector<Mode>& out) const {
  long long top = isqrt_floor(lambda_max * lambda_max);
  if (lambda_max < 0.0) return;
  for (long long n = -top; n <= top; ++n) {
    Mode m;
    m.label[0] = int(n);
    m.label_size = 1;
    m.lambda = double(std::llabs(n));
    out.push_back(m);
  }
}

double CircleModel::counting(double lambda) const {
  if (lambda < 0.0) return 0.0;
  return 2.0 * std::floor(lambda) + 1.0;
}

void CircleModel::stream_modes(double lambda_max,
                               const std::function<void(const Mode&)>& fn) const {
  if (lambda_max < 0.0) return;
  long long top = isqrt_floor(lambda_max * lambda_max);
  std::size_t pos = 0;
  for (long long n = -top; n <= top; ++n) {
    Mode m;
    m.label[0] = int(n);
    m.label_size = 1;
    m.lambda = double(std::llabs(n));
    m.index = pos++;
    fn(m);
  }
}

MatrixOracle CircleModel::mult(const std::vector<cplx>& coeffs) const {
  if (coeffs.empty() || coeffs.size() % 2 == 0)
    throw std::invalid_argument(
        "mult: coefficient list must be odd-length c_{-m}..c_m");
  int m = int(coeffs.size() / 2);
  MatrixOracle o;
  o.entry = [coeffs, m](const Mode& j, const Mode& k) -> cplx {
    int dn = j.lab(0) - k.lab(0);
    if (dn < -m || dn > m) return 0.0;
    return coeffs[std::size_t(m + dn)];
  };
  o.band = double(m);
  o.hermitian = coeffs_hermitian(coeffs);
  auto offs = coeff_offsets(coeffs);
  o.col_support = [offs](const Mode& k) {
    std::vector<Mode> out;
    for (int dn : offs) out.push_back(line_mode(k.lab(0) + dn));
    return out;
  };
  o.row_support = [offs](const Mode& j) {
    std::vector<Mode> out;
    for (int dn : offs) out.push_back(line_mode(j.lab(0) - dn));
    return out;
  };
  return o;
}

MatrixOracle CircleModel::sign_symbol(cplx g_minus, cplx g_zero, cplx g_plus) const {
  MatrixOracle o;
  o.entry = [=](const Mode& j, const Mode& k) -> cplx {
    if (!same_label(j, k)) return 0.0;
    int n = j.lab(0);
    return n > 0 ? g_plus : (n < 0 ? g_minus : g_zero);
  };
  o.band = 0.0;
  o.hermitian = g_minus.imag() == 0.0 && g_zero.imag() == 0.0 && g_plus.imag() == 0.0;
  self_support(o);
  return o;
}

MatrixOracle CircleModel::proj_pos() const {
  MatrixOracle o;
  o.entry = [](const Mode& j, const Mode& k) -> cplx {
    if (!same_label(j, k)) return 0.0;
    return j.lab(0) >= 0 ? 1.0 : 0.0;
  };
  o.band = 0.0;
  o.hermitian = true;
  self_support(o);
  return o;
}

MatrixOracle CircleModel::generator(const std::string& gen,
                                    const std::vector<cplx>& args) const {
  if (gen == "mult") return mult(args);
  if (gen == "proj_pos") {
    check_arity(gen, args, 0);
    return proj_pos();
  }
  if (gen == "sign_symbol") {
    check_arity(gen, args, 3);
    return sign_symbol(args[0], args[1], args[2]);
  }
  if (gen == "id") {
    check_arity(gen, args, 0);
    return identity();
  }
  if (gen == "dpow") {
    check_arity(gen, args, 1);
    if (args[0].imag() != 0.0)
      throw std::invalid_argument("dpow: exponent must be real");
    return d_power(args[0].real());
  }
  unknown_generator(gen);
}

std::vector<std::string> CircleModel::generator_names() const {
  return {"mult", "proj_pos", "sign_symbol", "id", "dpow"};
}

// ---------------------------------------------------------------------------
// Toeplitz

void ToeplitzModel::generate(double lambda_max, std::vector<Mode>& out) const {
  if (lambda_max < 0.0) return;
  long long top = isqrt_floor(lambda_max * lambda_max);
  for (long long j = 0; j <= top; ++j) {
    Mode m;
    m.label[0] = int(j);
    m.label_size = 1;
    m.lambda = double(j);
    out.push_back(m);
  }
}

double ToeplitzModel::counting(double lambda) const {
  if (lambda < 0.0) return 0.0;
  return std::floor(lambda) + 1.0;
}

void ToeplitzModel::stream_modes(double lambda_max,
                                 const std::function<void(const Mode&)>& fn) const {
  if (lambda_max < 0.0) return;
  long long top = isqrt_floor(lambda_max * lambda_max);
  for (long long j = 0; j <= top; ++j) {
    Mode m;
    m.label[0] = int(j);
    m.label_size = 1;
    m.lambda = double(j);
    m.index = std::size_t(j);
    fn(m);
  }
}

MatrixOracle ToeplitzModel::toeplitz(const std::vector<cplx>& coeffs) const {
  if (coeffs.empty() || coeffs.size() % 2 == 0)
    throw std::invalid_argument(
        "toeplitz: coefficient list must be odd-length c_{-m}..c_m");
  int m = int(coeffs.size() / 2);
  MatrixOracle o;
  o.entry = [coeffs, m](const Mode& j, const Mode& k) -> cplx {
    int dn = j.lab(0) - k.lab(0);
    if (dn < -m || dn > m) return 0.0;
    return coeffs[std::size_t(m + dn)];
  };
  o.band = double(m);
  o.hermitian = coeffs_hermitian(coeffs);
  auto offs = coeff_offsets(coeffs);
  o.col_support = [offs](const Mode& k) {
    std::vector<Mode> out;
    for (int dn : offs)
      if (k.lab(0) + dn >= 0) out.push_back(line_mode(k.lab(0) + dn));
    return out;
  };
  o.row_support = [offs](const Mode& j) {
    std::vector<Mode> out;
    for (int dn : offs)
      if (j.lab(0) - dn >= 0) out.push_back(line_mode(j.lab(0) - dn));
    return out;
  };
  return o;
}

MatrixOracle ToeplitzModel::finite_rank(const Eigen::MatrixXcd& block) const {
  if (block.rows() != block.cols())
    throw std::invalid_argument("finite_rank: block must be square");
  int m = int(block.rows());
  MatrixOracle o;
  Eigen::MatrixXcd b = block;
  o.entry = [b, m](const Mode& j, const Mode& k) -> cplx {
    if (j.lab(0) >= m || k.lab(0) >= m) return 0.0;
    return b(j.lab(0), k.lab(0));
  };
  o.band = m > 0 ? double(m - 1) : 0.0;
  o.hermitian =
      (block - block.adjoint()).cwiseAbs().maxCoeff() <=
      1e-14 * std::max(1.0, block.cwiseAbs().maxCoeff());
  auto corner = [m](const Mode& other) {
    std::vector<Mode> out;
    if (other.lab(0) < m)
      for (int n = 0; n < m; ++n) out.push_back(line_mode(n));
    return out;
  };
  o.col_support = corner;
  o.row_support = corner;
  return o;
}

MatrixOracle ToeplitzModel::generator(const std::string& gen,
                                      const std::vector<cplx>& args) const {
  if (gen == "toeplitz") return toeplitz(args);
  if (gen == "finite_rank") return finite_rank(square_matrix_from_args(gen, args));
  if (gen == "id") {
    check_arity(gen, args, 0);
    return identity();
  }
  if (gen == "dpow") {
    check_arity(gen, args, 1);
    if (args[0].imag() != 0.0)
      throw std::invalid_argument("dpow: exponent must be real");
    return d_power(args[0].real());
  }
  unknown_generator(gen);
}

std::vector<std::string> ToeplitzModel::generator_names() const {
  return {"toeplitz", "finite_rank", "id", "dpow"};
}

// ---------------------------------------------------------------------------
// noncommutative torus

NcTorusModel::NcTorusModel(int d, Eigen::MatrixXd theta, cplx angular_at_zero)
    : SpectralModel("nc_torus", d),
      theta_(std::move(theta)),
      spinor_dim_(1 << (d / 2)),
      angular_at_zero_(angular_at_zero) {
  if (d < 2) throw std::invalid_argument("nc_torus: need dimension >= 2");
  if (d + 1 > Mode::kMaxLabel)
    throw std::invalid_argument("nc_torus: dimension too large for mode labels");
  if (theta_.rows() != d || theta_.cols() != d)
    throw std::invalid_argument("nc_torus: theta must be d x d");
  if ((theta_ + theta_.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("nc_torus: theta must be antisymmetric");
}

void NcTorusModel::generate(double lambda_max, std::vector<Mode>& out) const {
  if (lambda_max < 0.0) return;
  int d = dimension();
  std::vector<int> prefix;
  lattice_ball_visit(lambda_max * lambda_max, d, prefix,
                     [&](const std::vector<int>& k) {
                       double r2 = 0.0;
                       for (int v : k) r2 += double(v) * double(v);
                       double lam = std::sqrt(r2);
                       for (int s = 0; s < spinor_dim_; ++s) {
                         Mode m;
                         for (int i = 0; i < d; ++i) m.label[i] = k[std::size_t(i)];
                         m.label[d] = s;
                         m.label_size = d + 1;
                         m.lambda = lam;
                         out.push_back(m);
                       }
                     });
}

double NcTorusModel::counting(double lambda) const {
  if (lambda < 0.0) return 0.0;
  return double(spinor_dim_) * lattice_ball_count(lambda * lambda, dimension());
}

void NcTorusModel::stream_modes(double lambda_max,
                                const std::function<void(const Mode&)>& fn) const {
  if (lambda_max < 0.0) return;
  int d = dimension();
  std::size_t pos = 0;
  std::vector<int> prefix;
  lattice_ball_visit(lambda_max * lambda_max, d, prefix,
                     [&](const std::vector<int>& k) {
                       double r2 = 0.0;
                       for (int v : k) r2 += double(v) * double(v);
                       double lam = std::sqrt(r2);
                       for (int s = 0; s < spinor_dim_; ++s) {
                         Mode m;
                         for (int i = 0; i < d; ++i) m.label[i] = k[std::size_t(i)];
                         m.label[d] = s;
                         m.label_size = d + 1;
                         m.lambda = lam;
                         m.index = pos++;
                         fn(m);
                       }
                     });
}

MatrixOracle NcTorusModel::u(const std::vector<int>& m) const {
  int d = dimension();
  if (int(m.size()) != d)
    throw std::invalid_argument("u: expected " + std::to_string(d) + " indices");
  // phase exponent (1/2) <m, theta k> with k the source label
  Eigen::VectorXd mtheta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd mv(d);
  for (int i = 0; i < d; ++i) mv(i) = double(m[std::size_t(i)]);
  mtheta = theta_.transpose() * mv;  // (theta^T m)_j = sum_i m_i theta_ij
  double band = mv.norm();
  bool is_zero = band == 0.0;
  std::vector<int> mcopy = m;
  MatrixOracle o;
  o.entry = [d, mcopy, mtheta](const Mode& j, const Mode& k) -> cplx {
    if (j.label[d] != k.label[d]) return 0.0;  // spinor index
    for (int i = 0; i < d; ++i)
      if (j.label[i] != k.label[i] + mcopy[std::size_t(i)]) return 0.0;
    double phase = 0.0;
    for (int i = 0; i < d; ++i) phase += mtheta(i) * double(k.label[i]);
    return std::polar(1.0, 0.5 * phase);
  };
  o.band = band;
  o.hermitian = is_zero;
  auto shifted = [d](const Mode& base, const std::vector<int>& off, int sign) {
    Mode out = base;
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) {
      out.label[i] = base.label[i] + sign * off[std::size_t(i)];
      r2 += double(out.label[i]) * double(out.label[i]);
    }
    out.lambda = std::sqrt(r2);
    return std::vector<Mode>{out};
  };
  o.col_support = [shifted, mcopy](const Mode& k) { return shifted(k, mcopy, 1); };
  o.row_support = [shifted, mcopy](const Mode& j) { return shifted(j, mcopy, -1); };
  return o;
}

MatrixOracle NcTorusModel::angular(const std::vector<AngularTerm>& terms) const {
  int d = dimension();
  cplx g0 = angular_at_zero_;
  bool herm = g0.imag() == 0.0;
  for (const auto& t : terms) herm = herm && t.coeff.imag() == 0.0;
  MatrixOracle o;
  o.entry = [d, terms, g0](const Mode& j, const Mode& k) -> cplx {
    if (!same_label(j, k)) return 0.0;
    if (j.lambda == 0.0) return g0;
    cplx v = 0.0;
    for (const auto& t : terms) {
      cplx mono = t.coeff;
      for (int i = 0; i < d; ++i) {
        double x = double(j.label[i]) / j.lambda;
        for (int e = 0; e < t.expo[std::size_t(i)]; ++e) mono *= x;
      }
      v += mono;
    }
    return v;
  };
  o.band = 0.0;
  o.hermitian = herm;
  self_support(o);
  return o;
}

MatrixOracle NcTorusModel::generator(const std::string& gen,
                                     const std::vector<cplx>& args) const {
  int d = dimension();
  if (gen == "u") {
    check_arity(gen, args, std::size_t(d));
    std::vector<int> m(args.size());
    for (int i = 0; i < d; ++i) m[std::size_t(i)] = int_arg(gen, args[std::size_t(i)]);
    return u(m);
  }
  if (gen == "angular") {
    if (args.empty() || args.size() % std::size_t(d + 1) != 0)
      throw std::invalid_argument(
          "angular: arguments must be groups of (coefficient, " +
          std::to_string(d) + " exponents)");
    std::vector<AngularTerm> terms;
    for (std::size_t i = 0; i < args.size(); i += std::size_t(d + 1)) {
      AngularTerm t;
      t.coeff = args[i];
      for (int e = 0; e < d; ++e) {
        int ex = int_arg(gen, args[i + 1 + std::size_t(e)]);
        if (ex < 0) throw std::invalid_argument("angular: exponents must be >= 0");
        t.expo[std::size_t(e)] = ex;
      }
      terms.push_back(t);
    }
    return angular(terms);
  }
  if (gen == "id") {
    check_arity(gen, args, 0);
    return identity();
  }
  if (gen == "dpow") {
    check_arity(gen, args, 1);
    if (args[0].imag() != 0.0)
      throw std::invalid_argument("dpow: exponent must be real");
    return d_power(args[0].real());
  }
  unknown_generator(gen);
}

std::vector<std::string> NcTorusModel::generator_names() const {
  return {"u", "angular", "id", "dpow"};
}

// ---------------------------------------------------------------------------
// almost-commutative product

namespace {
const Eigen::Matrix2cd& pauli(int i) {
  static const Eigen::Matrix2cd s1 = (Eigen::Matrix2cd() << 0, 1, 1, 0).finished();
  static const Eigen::Matrix2cd s2 =
      (Eigen::Matrix2cd() << 0, cplx(0, -1), cplx(0, 1), 0).finished();
  static const Eigen::Matrix2cd s3 = (Eigen::Matrix2cd() << 1, 0, 0, -1).finished();
  return i == 1 ? s1 : (i == 2 ? s2 : s3);
}

Eigen::MatrixXcd kron2(const Eigen::Matrix2cd& a, const Eigen::MatrixXcd& b) {
  Eigen::Index m = b.rows();
  Eigen::MatrixXcd out(2 * m, 2 * m);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) out.block(r * m, c * m, m, m) = a(r, c) * b;
  return out;
}
}  // namespace

AlmostCommutativeModel::AlmostCommutativeModel(Eigen::MatrixXcd d_f)
    : SpectralModel("almost_commutative", 2), d_f_(std::move(d_f)) {
  if (d_f_.rows() != d_f_.cols() || d_f_.rows() < 1)
    throw std::invalid_argument("almost_commutative: D_F must be square");
  if ((d_f_ - d_f_.adjoint()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, d_f_.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("almost_commutative: D_F must be hermitian");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(d_f_);
  d_f_spectrum_ = es.eigenvalues();
  // quantize d_i^2 so closed-form mode eigenvalues are bitwise reproducible
  d_f_qmag_.resize(d_f_spectrum_.size());
  for (Eigen::Index i = 0; i < d_f_spectrum_.size(); ++i) {
    double q = d_f_spectrum_(i) * d_f_spectrum_(i);
    d_f_qmag_(i) = std::sqrt(std::round(q * 1e12) / 1e12);
    d_f_max_ = std::max(d_f_max_, d_f_qmag_(i));
  }
}

const AlmostCommutativeModel::Block& AlmostCommutativeModel::block(int k1,
                                                                   int k2) const {
  std::lock_guard<std::mutex> lk(block_mutex_);
  auto key = std::make_pair(k1, k2);
  auto it = block_cache_.find(key);
  if (it != block_cache_.end()) return *it->second;
  int m = internal_dim();
  Eigen::MatrixXcd b = double(k1) * kron2(pauli(1), Eigen::MatrixXcd::Identity(m, m)) +
                       double(k2) * kron2(pauli(2), Eigen::MatrixXcd::Identity(m, m)) +
                       kron2(pauli(3), d_f_);
  auto blk = std::make_unique<Block>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(b);
  blk->evals = es.eigenvalues();
  blk->vectors = es.eigenvectors();
  auto* ptr = blk.get();
  block_cache_.emplace(key, std::move(blk));
  return *ptr;
}

namespace {
// closed-form |eigenvalue| list of one momentum block, ascending by the
// signed spectrum {-sqrt(r2+q_i)} U {+sqrt(r2+q_i)}
std::vector<double> block_lambdas(double r2, const Eigen::VectorXd& dmag) {
  std::vector<double> signed_vals;
  for (Eigen::Index i = 0; i < dmag.size(); ++i) {
    double w = std::sqrt(r2 + dmag(i) * dmag(i));
    signed_vals.push_back(-w);
    signed_vals.push_back(w);
  }
  std::sort(signed_vals.begin(), signed_vals.end());
  for (double& v : signed_vals) v = std::abs(v);
  return signed_vals;
}
}  // namespace

void AlmostCommutativeModel::generate(double lambda_max,
                                      std::vector<Mode>& out) const {
  if (lambda_max < 0.0) return;
  double budget = lambda_max * lambda_max + kEvalSlack;
  long long top = isqrt_floor(budget);
  for (long long k1 = -top; k1 <= top; ++k1) {
    double rem = budget - double(k1) * double(k1);
    long long top2 = isqrt_floor(rem);
    for (long long k2 = -top2; k2 <= top2; ++k2) {
      double r2 = double(k1) * double(k1) + double(k2) * double(k2);
      auto lams = block_lambdas(r2, d_f_qmag_);
      for (std::size_t b = 0; b < lams.size(); ++b) {
        if (lams[b] * lams[b] > budget) continue;
        Mode m;
        m.label[0] = int(k1);
        m.label[1] = int(k2);
        m.label[2] = int(b);
        m.label_size = 3;
        m.lambda = lams[b];
        out.push_back(m);
      }
    }
  }
}

double AlmostCommutativeModel::counting(double lambda) const {
  if (lambda < 0.0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < d_f_spectrum_.size(); ++i) {
    double rem = lambda * lambda - d_f_qmag_(i) * d_f_qmag_(i) + kEvalSlack;
    total += 2.0 * lattice_ball_count(rem, 2);
  }
  return total;
}

void AlmostCommutativeModel::stream_modes(
    double lambda_max, const std::function<void(const Mode&)>& fn) const {
  if (lambda_max < 0.0) return;
  double budget = lambda_max * lambda_max + kEvalSlack;
  long long top = isqrt_floor(budget);
  std::size_t pos = 0;
  for (long long k1 = -top; k1 <= top; ++k1) {
    double rem = budget - double(k1) * double(k1);
    long long top2 = isqrt_floor(rem);
    for (long long k2 = -top2; k2 <= top2; ++k2) {
      double r2 = double(k1) * double(k1) + double(k2) * double(k2);
      auto lams = block_lambdas(r2, d_f_qmag_);
      for (std::size_t b = 0; b < lams.size(); ++b) {
        if (lams[b] * lams[b] > budget) continue;
        Mode m;
        m.label[0] = int(k1);
        m.label[1] = int(k2);
        m.label[2] = int(b);
        m.label_size = 3;
        m.lambda = lams[b];
        m.index = pos++;
        fn(m);
      }
    }
  }
}

MatrixOracle AlmostCommutativeModel::internal(const Eigen::MatrixXcd& a_f) const {
  int m = internal_dim();
  if (a_f.rows() != m || a_f.cols() != m)
    throw std::invalid_argument("internal: a_F must match the internal dimension");
  auto self =
      std::static_pointer_cast<const AlmostCommutativeModel>(shared_from_this());
  Eigen::MatrixXcd lifted =
      kron2(Eigen::Matrix2cd::Identity(), a_f);  // 1_spinor x a_F
  MatrixOracle o;
  o.entry = [self, lifted](const Mode& j, const Mode& k) -> cplx {
    if (j.label[0] != k.label[0] || j.label[1] != k.label[1]) return 0.0;
    const Block& b = self->block(j.label[0], j.label[1]);
    return b.vectors.col(j.label[2]).dot(lifted * b.vectors.col(k.label[2]));
  };
  o.band = 2.0 * d_f_max_;
  o.hermitian = (a_f - a_f.adjoint()).cwiseAbs().maxCoeff() <=
                1e-12 * std::max(1.0, a_f.cwiseAbs().maxCoeff());
  auto whole_block = [self](const Mode& other) {
    return self->momentum_modes(other.label[0], other.label[1]);
  };
  o.col_support = whole_block;
  o.row_support = whole_block;
  return o;
}

std::vector<Mode> AlmostCommutativeModel::momentum_modes(int k1, int k2) const {
  double r2 = double(k1) * double(k1) + double(k2) * double(k2);
  auto lams = block_lambdas(r2, d_f_qmag_);
  std::vector<Mode> out;
  out.reserve(lams.size());
  for (std::size_t b = 0; b < lams.size(); ++b) {
    Mode m;
    m.label[0] = k1;
    m.label[1] = k2;
    m.label[2] = int(b);
    m.label_size = 3;
    m.lambda = lams[b];
    out.push_back(m);
  }
  return out;
}

MatrixOracle AlmostCommutativeModel::u(int m1, int m2) const {
  std::map<std::array<int, 2>, cplx> coeffs;
  coeffs[{m1, m2}] = 1.0;
  return mult_generator(coeffs);
}

MatrixOracle AlmostCommutativeModel::mult_generator(
    const std::map<std::array<int, 2>, cplx>& coeffs) const {
  auto self =
      std::static_pointer_cast<const AlmostCommutativeModel>(shared_from_this());
  double mmax = 0.0;
  bool herm = true;
  for (const auto& [mm, c] : coeffs) {
    mmax = std::max(mmax, std::hypot(double(mm[0]), double(mm[1])));
    auto it = coeffs.find({-mm[0], -mm[1]});
    herm = herm && it != coeffs.end() && it->second == std::conj(c);
  }
  MatrixOracle o;
  o.entry = [self, coeffs](const Mode& j, const Mode& k) -> cplx {
    auto it = coeffs.find({j.label[0] - k.label[0], j.label[1] - k.label[1]});
    if (it == coeffs.end()) return 0.0;
    const Block& bj = self->block(j.label[0], j.label[1]);
    const Block& bk = self->block(k.label[0], k.label[1]);
    cplx overlap = bj.vectors.col(j.label[2]).dot(bk.vectors.col(k.label[2]));
    return it->second * overlap;
  };
  o.band = mmax + 2.0 * d_f_max_;
  o.hermitian = herm;
  o.col_support = [self, coeffs](const Mode& k) {
    std::vector<Mode> out;
    for (const auto& [mm, c] : coeffs) {
      if (c == cplx(0.0)) continue;
      auto blockmodes = self->momentum_modes(k.label[0] + mm[0], k.label[1] + mm[1]);
      out.insert(out.end(), blockmodes.begin(), blockmodes.end());
    }
    return out;
  };
  o.row_support = [self, coeffs](const Mode& j) {
    std::vector<Mode> out;
    for (const auto& [mm, c] : coeffs) {
      if (c == cplx(0.0)) continue;
      auto blockmodes = self->momentum_modes(j.label[0] - mm[0], j.label[1] - mm[1]);
      out.insert(out.end(), blockmodes.begin(), blockmodes.end());
    }
    return out;
  };
  return o;
}

MatrixOracle AlmostCommutativeModel::generator(const std::string& gen,
                                               const std::vector<cplx>& args) const {
  if (gen == "internal") return internal(square_matrix_from_args(gen, args));
  if (gen == "u") {
    check_arity(gen, args, 2);
    return u(int_arg(gen, args[0]), int_arg(gen, args[1]));
  }
  if (gen == "id") {
    check_arity(gen, args, 0);
    return identity();
  }
  if (gen == "dpow") {
    check_arity(gen, args, 1);
    if (args[0].imag() != 0.0)
      throw std::invalid_argument("dpow: exponent must be real");
    return d_power(args[0].real());
  }
  unknown_generator(gen);
}

std::vector<std::string> AlmostCommutativeModel::generator_names() const {
  return {"internal", "u", "id", "dpow"};
}

// ---------------------------------------------------------------------------

std::shared_ptr<CircleModel> make_circle() { return std::make_shared<CircleModel>(); }

std::shared_ptr<ToeplitzModel> make_toeplitz() {
  return std::make_shared<ToeplitzModel>();
}

std::shared_ptr<NcTorusModel> make_nc_torus(int d, const Eigen::MatrixXd& theta,
                                            cplx angular_at_zero) {
  return std::make_shared<NcTorusModel>(d, theta, angular_at_zero);
}

std::shared_ptr<AlmostCommutativeModel> make_almost_commutative(
    const Eigen::MatrixXcd& d_f) {
  return std::make_shared<AlmostCommutativeModel>(d_f);
}

Eigen::MatrixXcd materialize(const MatrixOracle& a, const std::vector<Mode>& modes) {
  auto n = static_cast<Eigen::Index>(modes.size());
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
  if (a.band) {
    // modes arrive sorted by eigenvalue; only |lambda_j - lambda_k| <= band
    double band = *a.band;
    std::size_t lo = 0, hi = 0;
    for (std::size_t j = 0; j < modes.size(); ++j) {
      while (lo < modes.size() && modes[lo].lambda < modes[j].lambda - band) ++lo;
      if (hi < lo) hi = lo;
      while (hi < modes.size() && modes[hi].lambda <= modes[j].lambda + band) ++hi;
      for (std::size_t k = lo; k < hi; ++k)
        out(Eigen::Index(j), Eigen::Index(k)) = a.entry(modes[j], modes[k]);
    }
  } else {
    for (std::size_t j = 0; j < modes.size(); ++j)
      for (std::size_t k = 0; k < modes.size(); ++k)
        out(Eigen::Index(j), Eigen::Index(k)) = a.entry(modes[j], modes[k]);
  }
  return out;
}

double commutator_norm_check(const SpectralModel& model, const MatrixOracle& a,
                             double lambda, std::size_t max_modes) {
  if (model.counting(lambda) > double(max_modes))
    throw ResourceLimitError(
        "commutator_norm_check: truncation at " + format_double(lambda) +
        " exceeds the cap of " + std::to_string(max_modes) + " modes");
  auto modes = model.modes_up_to(lambda);
  if (modes.empty()) return 0.0;
  MatrixOracle comm;
  comm.entry = [&a](const Mode& j, const Mode& k) -> cplx {
    return (j.lambda - k.lambda) * a.entry(j, k);
  };
  comm.band = a.band;
  Eigen::MatrixXcd c = materialize(comm, modes);
  return linalg::operator_norm(c);
}

}  // namespace spectrunc::models
