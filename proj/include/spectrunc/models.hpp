#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spectrunc/common.hpp"

namespace spectrunc::models {

// One basis vector of the eigenbasis lattice: a model-specific integer label
// plus its position in the flattened ordering, which sorts by
// (eigenvalue of |D|, lexicographic label).
struct Mode {
  static constexpr int kMaxLabel = 6;

  std::array<int, kMaxLabel> label{};
  int label_size = 0;
  std::size_t index = 0;
  double lambda = 0.0;

  int lab(int i) const { return label[i]; }
};

// Entry access for an operator expressed in the flattened basis. Entries may
// depend on labels and eigenvalues only, never on flattened indices.
// band, when set, bounds |lambda_j - lambda_k| beyond which entries are 0.
// The support callbacks, when set, list the modes (with exact eigenvalues)
// where a column/row can be nonzero; products contract over them instead of
// scanning whole eigenvalue shells.
struct MatrixOracle {
  std::function<cplx(const Mode&, const Mode&)> entry;
  std::optional<double> band;
  bool hermitian = false;
  std::function<std::vector<Mode>(const Mode&)> col_support;  // j : entry(j,k) != 0
  std::function<std::vector<Mode>(const Mode&)> row_support;  // k : entry(j,k) != 0
};

bool same_label(const Mode& a, const Mode& b);
bool label_less(const Mode& a, const Mode& b);

class SpectralModel : public std::enable_shared_from_this<SpectralModel> {
 public:
  virtual ~SpectralModel() = default;

  const std::string& name() const { return name_; }
  int dimension() const { return dim_; }

  // Flattened ordering access. The table grows on demand and is memoized;
  // safe to call from several threads.
  std::size_t count_up_to(double lambda) const;  // N(lambda) by enumeration
  Mode mode(std::size_t index) const;
  std::vector<Mode> modes_up_to(double lambda) const;
  std::vector<Mode> modes_prefix(std::size_t count) const;
  // index range [first, last) of modes with eigenvalue in [lo, hi]
  std::pair<std::size_t, std::size_t> index_window(double lo, double hi) const;

  // Closed-form N(lambda) where the model has one; must agree with
  // count_up_to. Default falls back to enumeration.
  virtual double counting(double lambda) const;

  // Distinct eigenvalues r_0 < r_1 < ... <= lambda.
  std::vector<double> distinct_eigenvalues(double lambda) const;
  // Largest distinct eigenvalue <= lambda (truncation cutoffs snap here).
  double snap_cutoff(double lambda) const;

  // Enumerates all modes with eigenvalue <= lambda_max in a deterministic
  // model-specific order (not the flattened order), without materializing
  // the table. Mode.index carries the running stream position.
  virtual void stream_modes(double lambda_max,
                            const std::function<void(const Mode&)>& fn) const = 0;

  // Named generator factory; the expression layer resolves calls through it.
  virtual MatrixOracle generator(const std::string& gen,
                                 const std::vector<cplx>& args) const = 0;
  virtual std::vector<std::string> generator_names() const = 0;

  MatrixOracle identity() const;
  MatrixOracle d_power(double p) const;  // diagonal <lambda>^p = (1+lambda^2)^{p/2}

 protected:
  SpectralModel(std::string name, int dim) : name_(std::move(name)), dim_(dim) {}

  // All modes with eigenvalue <= lambda_max, any order; sorted by the base.
  virtual void generate(double lambda_max, std::vector<Mode>& out) const = 0;

  [[noreturn]] void unknown_generator(const std::string& gen) const;

 private:
  void ensure_covered(double lambda) const;
  void ensure_count(std::size_t count) const;

  std::string name_;
  int dim_;

  mutable std::mutex table_mutex_;
  mutable std::vector<Mode> table_;
  mutable std::vector<double> table_lambdas_;
  mutable double covered_ = -1.0;
};

// lambda = |n|, modes n in Z ordered 0, -1, 1, -2, 2, ...
class CircleModel : public SpectralModel {
 public:
  CircleModel() : SpectralModel("circle", 1) {}
  double counting(double lambda) const override;
  void stream_modes(double lambda_max,
                    const std::function<void(const Mode&)>& fn) const override;
  MatrixOracle generator(const std::string& gen,
                         const std::vector<cplx>& args) const override;
  std::vector<std::string> generator_names() const override;

  // f given by Fourier coefficients c_{-m}..c_m (odd-length list)
  MatrixOracle mult(const std::vector<cplx>& coeffs) const;
  MatrixOracle sign_symbol(cplx g_minus, cplx g_zero, cplx g_plus) const;
  MatrixOracle proj_pos() const;

 protected:
  void generate(double lambda_max, std::vector<Mode>& out) const override;
};

// lambda = j, modes j in N; compressions of symbols on the half-line
class ToeplitzModel : public SpectralModel {
 public:
  ToeplitzModel() : SpectralModel("toeplitz", 1) {}
  double counting(double lambda) const override;
  void stream_modes(double lambda_max,
                    const std::function<void(const Mode&)>& fn) const override;
  MatrixOracle generator(const std::string& gen,
                         const std::vector<cplx>& args) const override;
  std::vector<std::string> generator_names() const override;

  MatrixOracle toeplitz(const std::vector<cplx>& coeffs) const;
  MatrixOracle finite_rank(const Eigen::MatrixXcd& block) const;

 protected:
  void generate(double lambda_max, std::vector<Mode>& out) const override;
};

// lambda = |k|, modes (k, s) in Z^d x spinor, multiplicity 2^{floor(d/2)};
// theta is the real antisymmetric deformation matrix
class NcTorusModel : public SpectralModel {
 public:
  NcTorusModel(int d, Eigen::MatrixXd theta, cplx angular_at_zero = 0.0);
  double counting(double lambda) const override;
  void stream_modes(double lambda_max,
                    const std::function<void(const Mode&)>& fn) const override;
  MatrixOracle generator(const std::string& gen,
                         const std::vector<cplx>& args) const override;
  std::vector<std::string> generator_names() const override;

  const Eigen::MatrixXd& theta() const { return theta_; }
  int spinor_dim() const { return spinor_dim_; }

  MatrixOracle u(const std::vector<int>& m) const;
  // polynomial in the direction k/|k|: list of (coefficient, exponents e_1..e_d)
  struct AngularTerm {
    cplx coeff;
    std::array<int, Mode::kMaxLabel> expo{};
  };
  MatrixOracle angular(const std::vector<AngularTerm>& terms) const;

 protected:
  void generate(double lambda_max, std::vector<Mode>& out) const override;

 private:
  Eigen::MatrixXd theta_;
  int spinor_dim_;
  cplx angular_at_zero_;
};

// Product geometry: flat d=2 torus base with an internal hermitian Dirac D_F.
// Momentum blocks B_k = k1 s1 x 1 + k2 s2 x 1 + s3 x D_F are diagonalized
// numerically; mode labels are (k1, k2, block eigenindex).
class AlmostCommutativeModel : public SpectralModel {
 public:
  explicit AlmostCommutativeModel(Eigen::MatrixXcd d_f);
  double counting(double lambda) const override;
  void stream_modes(double lambda_max,
                    const std::function<void(const Mode&)>& fn) const override;
  MatrixOracle generator(const std::string& gen,
                         const std::vector<cplx>& args) const override;
  std::vector<std::string> generator_names() const override;

  int internal_dim() const { return int(d_f_.rows()); }
  int block_dim() const { return 2 * internal_dim(); }
  const Eigen::VectorXd& internal_spectrum() const { return d_f_spectrum_; }

  MatrixOracle internal(const Eigen::MatrixXcd& a_f) const;  // 1 x a_F
  MatrixOracle u(int m1, int m2) const;                      // u_m x 1
  // base multiplication operator f x 1 from Fourier coefficients on Z^2
  MatrixOracle mult_generator(const std::map<std::array<int, 2>, cplx>& coeffs) const;

  struct Block {
    Eigen::VectorXd evals;  // ascending
    Eigen::MatrixXcd vectors;
  };
  const Block& block(int k1, int k2) const;
  // the 2m modes of one momentum block, eigenvalues from the closed form
  std::vector<Mode> momentum_modes(int k1, int k2) const;

 protected:
  void generate(double lambda_max, std::vector<Mode>& out) const override;

 private:
  Eigen::MatrixXcd d_f_;
  Eigen::VectorXd d_f_spectrum_;
  Eigen::VectorXd d_f_qmag_;  // |d_i| on a quantized grid, for closed forms
  double d_f_max_ = 0.0;
  mutable std::mutex block_mutex_;
  mutable std::map<std::pair<int, int>, std::unique_ptr<Block>> block_cache_;
};

std::shared_ptr<CircleModel> make_circle();
std::shared_ptr<ToeplitzModel> make_toeplitz();
std::shared_ptr<NcTorusModel> make_nc_torus(int d, const Eigen::MatrixXd& theta,
                                            cplx angular_at_zero = 0.0);
std::shared_ptr<AlmostCommutativeModel> make_almost_commutative(
    const Eigen::MatrixXcd& d_f);

// Dense fill of oracle entries over a mode list. Band skipping assumes the
// list is sorted by eigenvalue (as modes_up_to / modes_prefix return it).
Eigen::MatrixXcd materialize(const MatrixOracle& a, const std::vector<Mode>& modes);

// Operator norm of P_lambda [|D|, A] P_lambda; the commutator scales entries
// by eigenvalue differences. max_modes guards the dense materialization.
double commutator_norm_check(const SpectralModel& model, const MatrixOracle& a,
                             double lambda, std::size_t max_modes = 4096);

}  // namespace spectrunc::models
