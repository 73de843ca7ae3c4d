#ifndef STRATFACT_NUMERICS_HPP
#define STRATFACT_NUMERICS_HPP

#include <cstdint>
#include <string_view>
#include <vector>

#include "stratfact/errors.hpp"

namespace stratfact {

using Vector = std::vector<double>;

// Dense row-major matrix. Everything in this library is small (dimensions
// bounded by covariate count and 2^K), so no fancy storage.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }
  const std::vector<double>& data() const { return a_; }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

// Symmetric matrix with full storage; symmetry is maintained by the
// mutators, so reads never need to pick a triangle.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(int dim) : dim_(dim), a_(static_cast<size_t>(dim) * dim, 0.0) {}

  int dim() const { return dim_; }
  double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * dim_ + j]; }
  void set(int i, int j, double v) {
    a_[static_cast<size_t>(i) * dim_ + j] = v;
    a_[static_cast<size_t>(j) * dim_ + i] = v;
  }
  void add(int i, int j, double v) {
    a_[static_cast<size_t>(i) * dim_ + j] += v;
    if (i != j) a_[static_cast<size_t>(j) * dim_ + i] += v;
  }
  void scale(double c) {
    for (double& x : a_) x *= c;
  }
  Matrix to_matrix() const;
  static SymMatrix identity(int dim);

 private:
  int dim_ = 0;
  std::vector<double> a_;
};

double dot(const Vector& a, const Vector& b);

// Lower-triangular Cholesky factor of a positive definite matrix.
// A pivot <= 1e-12 * max(diag(A)) is treated as singular and raises
// SingularityError carrying the 1-based pivot index.
Matrix cholesky_factor(const SymMatrix& a);

// Like cholesky_factor but accepts positive semi-definite input: zero
// pivots produce a zero column. Indefinite input raises SingularityError.
Matrix cholesky_factor_psd(const SymMatrix& a);

// Solves A X = B for symmetric positive definite A.
Matrix solve_spd(const SymMatrix& a, const Matrix& b);
Vector solve_spd(const SymMatrix& a, const Vector& b);

// x' A^{-1} x via the Cholesky factor of A.
double inverse_quadratic_form(const SymMatrix& a, const Vector& x);

double log_gamma_fn(double x);
// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double reg_gamma_p(double a, double x);

double normal_cdf(double x);
double normal_pdf(double x);
// Inverse standard normal CDF; absolute error below 1e-8 (rational
// approximation refined by Newton steps on the internal CDF).
double normal_quantile(double prob);

double chi2_cdf(int df, double x);
// Chi-square quantile by bisection plus Newton polish; abs error < 1e-8.
double chi2_quantile(int df, double prob);

// 64-bit mixing and hashing used to derive independent seed streams.
uint64_t mix64(uint64_t z);
uint64_t hash64(uint64_t a, uint64_t b);
uint64_t fnv1a64(std::string_view s);

// xoshiro256++ generator seeded through splitmix64 expansion. Normal
// deviates use the Box-Muller transform (pairs cached), so the stream of
// outputs is fixed for a given seed across platforms and builds.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform on [0, 1), 53-bit resolution.
  double next_double();
  // Uniform on (0, 1]; safe as a log() argument.
  double next_double_open();
  double uniform(double lo, double hi);
  // Unbiased integer in [0, n) by bitmask rejection.
  uint64_t below(uint64_t n);
  double next_normal();

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// n i.i.d. rows from N(mean, cov); cov must be positive semi-definite.
Matrix sample_mvn(const Vector& mean, const SymMatrix& cov, int n, uint64_t seed);

}  // namespace stratfact

#endif  // STRATFACT_NUMERICS_HPP
