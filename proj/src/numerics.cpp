#include "stratfact/numerics.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace stratfact {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kPivotRelTol = 1e-12;
}  // namespace

Matrix SymMatrix::to_matrix() const {
  Matrix m(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) m(i, j) = (*this)(i, j);
  return m;
}

SymMatrix SymMatrix::identity(int dim) {
  SymMatrix s(dim);
  for (int i = 0; i < dim; ++i) s.set(i, i, 1.0);
  return s;
}

double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

namespace {

double max_diagonal(const SymMatrix& a) {
  double m = 0.0;
  for (int i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(a(i, i)));
  return m;
}

// Shared Cholesky loop. In strict mode any pivot at or below the tolerance
// is an error; in PSD mode a tiny pivot collapses to a zero column and only
// a genuinely negative pivot (or an inconsistent off-diagonal) is an error.
Matrix cholesky_impl(const SymMatrix& a, bool strict) {
  const int d = a.dim();
  Matrix l(d, d);
  const double tol = kPivotRelTol * std::max(max_diagonal(a), 1e-300);
  for (int j = 0; j < d; ++j) {
    double s = a(j, j);
    for (int k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (strict) {
      if (s <= tol)
        throw SingularityError("matrix is not positive definite at pivot " + std::to_string(j + 1), j + 1);
      l(j, j) = std::sqrt(s);
    } else {
      if (s < -tol)
        throw SingularityError("matrix is not positive semi-definite at pivot " + std::to_string(j + 1), j + 1);
      l(j, j) = s > tol ? std::sqrt(s) : 0.0;
    }
    for (int i = j + 1; i < d; ++i) {
      double t = a(i, j);
      for (int k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      if (l(j, j) > 0.0) {
        l(i, j) = t / l(j, j);
      } else {
        if (std::abs(t) > std::sqrt(tol) * std::max(1.0, max_diagonal(a)))
          throw SingularityError("matrix is not positive semi-definite at pivot " + std::to_string(j + 1), j + 1);
        l(i, j) = 0.0;
      }
    }
  }
  return l;
}

}  // namespace

Matrix cholesky_factor(const SymMatrix& a) { return cholesky_impl(a, true); }
Matrix cholesky_factor_psd(const SymMatrix& a) { return cholesky_impl(a, false); }

Matrix solve_spd(const SymMatrix& a, const Matrix& b) {
  const int d = a.dim();
  Matrix l = cholesky_factor(a);
  Matrix x = b;
  // forward substitution L y = b, then back substitution L' x = y
  for (int c = 0; c < b.cols(); ++c) {
    for (int i = 0; i < d; ++i) {
      double s = x(i, c);
      for (int k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (int i = d - 1; i >= 0; --i) {
      double s = x(i, c);
      for (int k = i + 1; k < d; ++k) s -= l(k, i) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

Vector solve_spd(const SymMatrix& a, const Vector& b) {
  Matrix col(a.dim(), 1);
  for (int i = 0; i < a.dim(); ++i) col(i, 0) = b[i];
  Matrix x = solve_spd(a, col);
  Vector out(a.dim());
  for (int i = 0; i < a.dim(); ++i) out[i] = x(i, 0);
  return out;
}

double inverse_quadratic_form(const SymMatrix& a, const Vector& x) {
  const int d = a.dim();
  Matrix l = cholesky_factor(a);
  // solve L y = x; the form equals |y|^2
  Vector y(d);
  for (int i = 0; i < d; ++i) {
    double s = x[i];
    for (int k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  double q = 0.0;
  for (double v : y) q += v * v;
  return q;
}

// ---------------------------------------------------------------------------
// Special functions. Implemented here (Lanczos + series/continued fraction)
// so quantiles do not depend on platform libm behavior.

double log_gamma_fn(double x) {
  static const double g[9] = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    // reflection formula
    return std::log(kPi / std::sin(kPi * x)) - log_gamma_fn(1.0 - x);
  }
  x -= 1.0;
  double acc = g[0];
  for (int i = 1; i < 9; ++i) acc += g[i] / (x + i);
  const double t = x + 7.5;
  return 0.5 * std::log(2.0 * kPi) + (x + 0.5) * std::log(t) - t + std::log(acc);
}

namespace {

// Lower series representation, converges fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - log_gamma_fn(a));
}

// Upper continued fraction (modified Lentz), for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - log_gamma_fn(a));
}

}  // namespace

double reg_gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw ValidationError("reg_gamma_p requires a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

namespace {

double erfc_internal(double z) {
  if (z < 0.0) return 2.0 - erfc_internal(-z);
  if (z == 0.0) return 1.0;
  // erfc(z) = Q(1/2, z^2) for z >= 0
  return 1.0 - reg_gamma_p(0.5, z * z);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * erfc_internal(-x / std::sqrt(2.0)); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("normal_quantile requires prob in (0,1)");
  // Acklam's rational approximation as the starting point.
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (prob < plow) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - plow) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Newton refinement against the internal CDF.
  for (int it = 0; it < 2; ++it) {
    const double err = normal_cdf(x) - prob;
    const double dens = normal_pdf(x);
    if (dens <= 0.0) break;
    x -= err / dens;
  }
  return x;
}

double chi2_cdf(int df, double x) {
  if (df < 1) throw ValidationError("chi2_cdf requires df >= 1");
  if (x <= 0.0) return 0.0;
  return reg_gamma_p(0.5 * df, 0.5 * x);
}

double chi2_quantile(int df, double prob) {
  if (df < 1) throw ValidationError("chi2_quantile requires df >= 1");
  if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("chi2_quantile requires prob in (0,1)");
  // bracket, bisect, then Newton with the chi-square density
  double lo = 0.0;
  double hi = df + 10.0 * std::sqrt(2.0 * df) + 10.0;
  while (chi2_cdf(df, hi) < prob) hi *= 2.0;
  for (int it = 0; it < 120; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(df, mid) < prob)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
  }
  double x = 0.5 * (lo + hi);
  const double a = 0.5 * df;
  for (int it = 0; it < 3; ++it) {
    const double dens = std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - log_gamma_fn(a));
    if (!(dens > 0.0)) break;
    x -= (chi2_cdf(df, x) - prob) / dens;
    if (x <= lo || x >= hi) x = 0.5 * (lo + hi);  // keep inside the bracket
  }
  return x;
}

// ---------------------------------------------------------------------------
// Random numbers.

uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

uint64_t hash64(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {
inline uint64_t rotl64(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t z = seed;
  for (auto& s : s_) {
    z += 0x9E3779B97F4A7C15ull;
    uint64_t t = z;
    t = (t ^ (t >> 30)) * 0xBF58476D1CE4E5B9ull;
    t = (t ^ (t >> 27)) * 0x94D049BB133111EBull;
    s = t ^ (t >> 31);
  }
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl64(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl64(s_[3], 45);
  return result;
}

double Rng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::next_double_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

uint64_t Rng::below(uint64_t n) {
  if (n <= 1) return 0;
  const uint64_t mask = ~0ull >> std::countl_zero(n - 1);
  for (;;) {
    const uint64_t v = next_u64() & mask;
    if (v < n) return v;
  }
}

double Rng::next_normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = next_double_open();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * kPi * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

Matrix sample_mvn(const Vector& mean, const SymMatrix& cov, int n, uint64_t seed) {
  const int d = cov.dim();
  if (static_cast<int>(mean.size()) != d) throw ValidationError("sample_mvn: mean/cov dimension mismatch");
  Matrix l = cholesky_factor_psd(cov);
  Matrix out(n, d);
  Rng rng(seed);
  Vector z(d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) z[j] = rng.next_normal();
    for (int j = 0; j < d; ++j) {
      double s = mean[j];
      for (int k = 0; k <= j; ++k) s += l(j, k) * z[k];
      out(i, j) = s;
    }
  }
  return out;
}

}  // namespace stratfact
