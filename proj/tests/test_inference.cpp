#include <doctest.h>

#include <cmath>

#include "stratfact/inference.hpp"

using namespace stratfact;

namespace {

CellVariances one_stratum_cells(double s1, double s2) {
  CellVariances c;
  c.stratum_ids = {"1"};
  c.pi = {1.0};
  c.e = {{0.5, 0.5}};
  c.s2 = {{s1, s2}};
  c.count = {{2, 2}};
  return c;
}

EffectEstimate fake_estimate(int k, Vector tau, SymMatrix vcov) {
  FactorialDesign d = build_design(k);
  EffectEstimate est;
  est.method = Method::unadj;
  est.k = k;
  est.f = d.f();
  est.n = 100;
  est.m = 1;
  est.effect_labels = d.effect_labels();
  est.tau_hat = std::move(tau);
  est.vcov = std::move(vcov);
  return est;
}

}  // namespace

TEST_CASE("variance estimate: classical two-sample case") {
  FactorialDesign d = build_design(1);
  VarianceEstimate v = neyman_variance(one_stratum_cells(2.0, 0.0), d, "y");
  CHECK(v.vhat(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
  // with n = 4 this matches s1^2/n1 + s2^2/n2 = 1
  CHECK(v.vhat(0, 0) / 4.0 == doctest::Approx(2.0 / 2 + 0.0 / 2).epsilon(1e-14));
}

TEST_CASE("variance estimate: zero cell variances give the zero matrix") {
  FactorialDesign d = build_design(1);
  VarianceEstimate v = neyman_variance(one_stratum_cells(0.0, 0.0), d, "y");
  CHECK(v.vhat(0, 0) == 0.0);
}

TEST_CASE("variance estimate: equal cells reduce to a scaled identity") {
  FactorialDesign d = build_design(2);
  const double sigma2 = 1.7;
  CellVariances c;
  c.stratum_ids = {"1"};
  c.pi = {1.0};
  c.e = {{0.25, 0.25, 0.25, 0.25}};
  c.s2 = {{sigma2, sigma2, sigma2, sigma2}};
  c.count = {{3, 3, 3, 3}};
  VarianceEstimate v = neyman_variance(c, d, "y");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(v.vhat(i, j) == doctest::Approx(i == j ? 4.0 * sigma2 : 0.0).epsilon(1e-13));
}

TEST_CASE("variance estimate names the undersized cell") {
  FactorialDesign d = build_design(1);
  CellVariances c = one_stratum_cells(1.0, 1.0);
  c.count[0][1] = 1;
  CHECK_THROWS_WITH_AS(neyman_variance(c, d, "y"), doctest::Contains("arm 2"), ValidationError);
}

TEST_CASE("wald intervals around the point estimate") {
  SymMatrix v(1);
  v.set(0, 0, 1.0);
  EffectEstimate est = fake_estimate(1, {3.0}, v);
  ConfidenceIntervals ci = wald_intervals(est, 0.05);
  CHECK(ci.intervals[0].lo == doctest::Approx(3.0 - 1.959963984540054).epsilon(1e-9));
  CHECK(ci.intervals[0].hi == doctest::Approx(3.0 + 1.959963984540054).epsilon(1e-9));

  SymMatrix zero(1);
  EffectEstimate flat = fake_estimate(1, {3.0}, zero);
  ConfidenceIntervals degenerate = wald_intervals(flat, 0.05);
  CHECK(degenerate.intervals[0].lo == 3.0);
  CHECK(degenerate.intervals[0].hi == 3.0);
}

TEST_CASE("wald region: center membership, boundary convention and area") {
  SymMatrix v(2);
  v.set(0, 0, 0.01);
  v.set(1, 1, 0.01);
  EffectEstimate est = fake_estimate(1, {0.5, -0.25}, v);
  est.f = 2;
  est.effect_labels = {"1", "2"};
  WaldRegion region = wald_region(est, 0.05);
  CHECK(region.contains({0.5, -0.25}));
  REQUIRE(region.area);
  CHECK(*region.area == doctest::Approx(0.18822741005438126).epsilon(1e-7));

  // a point placed exactly on the boundary is inside (<=): with an identity
  // precision matrix the quadratic form is exact in floating point
  WaldRegion exact;
  exact.center = {0.0, 0.0};
  exact.precision = SymMatrix::identity(2);
  exact.threshold = 4.0;
  CHECK(exact.quadratic_form({2.0, 0.0}) == 4.0);
  CHECK(exact.contains({2.0, 0.0}));
  CHECK_FALSE(exact.contains({2.0 + 1e-9, 0.0}));
}

TEST_CASE("wald region refuses a singular variance but intervals still work") {
  SymMatrix v(2);
  v.set(0, 0, 1.0);  // second effect has zero estimated variance
  EffectEstimate est = fake_estimate(1, {1.0, 2.0}, v);
  est.f = 2;
  est.effect_labels = {"1", "2"};
  CHECK_NOTHROW(wald_intervals(est, 0.05));
  CHECK_THROWS_AS(wald_region(est, 0.05), SingularityError);
}

TEST_CASE("region membership is invariant under joint affine rescaling") {
  Rng rng(71);
  SymMatrix v(2);
  v.set(0, 0, 2.0);
  v.set(0, 1, 0.5);
  v.set(1, 1, 1.0);
  EffectEstimate est = fake_estimate(1, {1.0, -2.0}, v);
  est.f = 2;
  est.effect_labels = {"1", "2"};
  WaldRegion region = wald_region(est, 0.10);

  const double a = 3.5, b = -1.25;
  SymMatrix vs(2);
  for (int i = 0; i < 2; ++i)
    for (int j = i; j < 2; ++j) vs.set(i, j, a * a * v(i, j));
  EffectEstimate scaled = fake_estimate(1, {a * 1.0 + b, a * -2.0 + b}, vs);
  scaled.f = 2;
  scaled.effect_labels = {"1", "2"};
  WaldRegion region_s = wald_region(scaled, 0.10);

  for (int trial = 0; trial < 200; ++trial) {
    Vector mu{rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0)};
    Vector mu_s{a * mu[0] + b, a * mu[1] + b};
    CHECK(region.contains(mu) == region_s.contains(mu_s));
  }
}

TEST_CASE("subset region picks the main-effect block") {
  SymMatrix v(3);
  v.set(0, 0, 0.04);
  v.set(1, 1, 0.09);
  v.set(2, 2, 100.0);
  v.set(0, 1, 0.01);
  EffectEstimate est = fake_estimate(2, {1.0, 2.0, 3.0}, v);
  WaldRegion region = wald_region_subset(est, {0, 1}, 0.05);
  CHECK(region.center == Vector{1.0, 2.0});
  REQUIRE(region.area);
  const double det = 0.04 * 0.09 - 0.01 * 0.01;
  CHECK(*region.area ==
        doctest::Approx(3.14159265358979323846 * chi2_quantile(2, 0.95) * std::sqrt(det))
            .epsilon(1e-10));
}

TEST_CASE("stratum-adjustment variance gain is PSD with nonnegative diagonal") {
  // random filled dataset
  FactorialDesign d = build_design(2);
  Rng rng(73);
  std::vector<std::string> st;
  std::vector<int> arm;
  Vector y;
  const int cell = 6, m = 2, p = 2;
  Matrix x(m * 4 * cell, p);
  int row = 0;
  for (int s = 0; s < m; ++s)
    for (int a = 0; a < 4; ++a)
      for (int u = 0; u < cell; ++u, ++row) {
        st.push_back(std::to_string(s + 1));
        arm.push_back(a + 1);
        for (int j = 0; j < p; ++j) x(row, j) = rng.uniform(-1.0, 1.0);
        y.push_back(x(row, 0) - 0.5 * x(row, 1) + 0.1 * a + 0.2 * rng.next_normal());
      }
  StratumSummaries summ = summarize(make_dataset(d, st, arm, y, x));
  SymMatrix gain = inter_variance_gain(summ, d, fit_beta_stratum(summ));
  for (int f = 0; f < 3; ++f) CHECK(gain(f, f) >= 0.0);
  CHECK_NOTHROW(cholesky_factor_psd(gain));
}
