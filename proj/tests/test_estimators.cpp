#include <doctest.h>

#include <cmath>

#include "stratfact/estimators.hpp"
#include "stratfact/inference.hpp"

using namespace stratfact;

namespace {

// Filled 2^k dataset with random covariates and outcomes; every cell gets
// `cell_size` units.
ObservedDataset random_dataset(uint64_t seed, int k, int m, int p, int cell_size) {
  FactorialDesign d = build_design(k);
  Rng rng(seed);
  std::vector<std::string> st;
  std::vector<int> arm;
  Vector y;
  const int n = m * d.q() * cell_size;
  Matrix x(n, p);
  int row = 0;
  for (int s = 0; s < m; ++s)
    for (int a = 0; a < d.q(); ++a)
      for (int u = 0; u < cell_size; ++u, ++row) {
        st.push_back(std::to_string(s + 1));
        arm.push_back(a + 1);
        double mean = 0.3 * a - 0.2 * s;
        for (int j = 0; j < p; ++j) {
          x(row, j) = rng.uniform(-1.0, 1.0);
          mean += (0.5 + 0.25 * j) * x(row, j);
        }
        y.push_back(mean + 0.3 * rng.next_normal());
      }
  return make_dataset(d, st, arm, y, x);
}

ObservedDataset two_arm_means(double y11, double y12, double y21, double y22) {
  FactorialDesign d = build_design(1);
  Matrix x(4, 0);
  return make_dataset(d, {"1", "1", "1", "1"}, {1, 1, 2, 2}, {y11, y12, y21, y22}, x);
}

}  // namespace

TEST_CASE("unadjusted estimate: difference of means") {
  FactorialDesign d = build_design(1);
  StratumSummaries s = summarize(two_arm_means(3, 5, 1, 1));
  EffectEstimate est = estimate_unadjusted(s, d);
  CHECK(est.tau_hat[0] == doctest::Approx(3.0).epsilon(1e-14));
  REQUIRE(est.vcov);
  // s2 = (2, 0), e = 1/2 each: variance of tau_hat is 1 at n = 4
  CHECK((*est.vcov)(0, 0) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("unadjusted estimate: pi-weighted stratum effects") {
  FactorialDesign d = build_design(1);
  Matrix x(8, 0);
  // stratum a: effect 3; stratum b: effect 1; equal sizes
  ObservedDataset data = make_dataset(d, {"a", "a", "a", "a", "b", "b", "b", "b"},
                                      {1, 1, 2, 2, 1, 1, 2, 2},
                                      {4, 4, 1, 1, 2, 2, 1, 1}, x);
  EffectEstimate est = estimate_unadjusted(summarize(data), d);
  CHECK(est.tau_hat[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("unadjusted estimate: K=2 contrast of arm means") {
  FactorialDesign d = build_design(2);
  Matrix x(8, 0);
  std::vector<std::string> st(8, "1");
  // arms 1..4 with means 1,2,3,4
  ObservedDataset data = make_dataset(d, st, {1, 1, 2, 2, 3, 3, 4, 4},
                                      {1, 1, 2, 2, 3, 3, 4, 4}, x);
  EffectEstimate est = estimate_unadjusted(summarize(data), d);
  CHECK(est.tau_hat[0] == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(est.tau_hat[1] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(est.tau_hat[2] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("unadjusted estimate drops the variance when a cell is a singleton") {
  FactorialDesign d = build_design(1);
  Matrix x(3, 0);
  ObservedDataset data = make_dataset(d, {"1", "1", "1"}, {1, 1, 2}, {3, 5, 2}, x);
  EffectEstimate est = estimate_unadjusted(summarize(data), d);
  CHECK(est.tau_hat[0] == doctest::Approx(2.0));
  CHECK_FALSE(est.vcov);
}

TEST_CASE("pooled slope: two points give the exact slope") {
  FactorialDesign d = build_design(1);
  Matrix x(4, 1);
  x(0, 0) = -1.0;
  x(1, 0) = 1.0;
  x(2, 0) = -2.0;
  x(3, 0) = 2.0;
  ObservedDataset data = make_dataset(d, {"1", "1", "1", "1"}, {1, 1, 2, 2}, {1, 3, 0, 4}, x);
  AdjustmentCoefficients beta = fit_beta_pooled(summarize(data));
  CHECK(beta.per_arm[0][0] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(beta.per_arm[1][0] == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("pooled slope reduces to per-arm least squares for one stratum") {
  ObservedDataset data = random_dataset(11, 1, 1, 1, 6);
  StratumSummaries s = summarize(data);
  AdjustmentCoefficients beta = fit_beta_pooled(s);
  for (int a = 0; a < 2; ++a) {
    const double slope = s.cell[0][a].xy_cov[0] / s.cell[0][a].xx_cov(0, 0);
    CHECK(beta.per_arm[a][0] == doctest::Approx(slope).epsilon(1e-12));
  }
}

TEST_CASE("pooled slope: a shared propensity factor cancels") {
  FactorialDesign d = build_design(1);
  Rng rng(5);
  std::vector<std::string> st;
  std::vector<int> arm;
  Vector y;
  // both strata have e = (1/3, 2/3)
  const int sizes[2][2] = {{2, 4}, {3, 6}};
  int n = 15;
  Matrix x(n, 1);
  int row = 0;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int u = 0; u < sizes[s][a]; ++u, ++row) {
        st.push_back(std::to_string(s + 1));
        arm.push_back(a + 1);
        x(row, 0) = rng.uniform(-1.0, 1.0);
        y.push_back(1.5 * x(row, 0) + rng.next_normal());
      }
  StratumSummaries summ = summarize(make_dataset(d, st, arm, y, x));
  AdjustmentCoefficients beta = fit_beta_pooled(summ);
  for (int a = 0; a < 2; ++a) {
    double gram = 0.0, rhs = 0.0;
    for (int m = 0; m < 2; ++m) {
      gram += summ.pi[m] * summ.cell[m][a].xx_cov(0, 0);
      rhs += summ.pi[m] * summ.cell[m][a].xy_cov[0];
    }
    CHECK(beta.per_arm[a][0] == doctest::Approx(rhs / gram).epsilon(1e-12));
  }
}

TEST_CASE("pooled fit flags a constant covariate as singular") {
  FactorialDesign d = build_design(1);
  Matrix x(6, 1);
  for (int i = 0; i < 6; ++i) x(i, 0) = 1.0;
  ObservedDataset data =
      make_dataset(d, {"1", "1", "1", "1", "1", "1"}, {1, 1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6}, x);
  CHECK_THROWS_AS(fit_beta_pooled(summarize(data)), SingularityError);
}

TEST_CASE("zero covariates leave the adjusted estimates at the unadjusted value") {
  FactorialDesign d = build_design(1);
  Matrix x(6, 1);  // identically zero covariate
  ObservedDataset data =
      make_dataset(d, {"1", "1", "1", "1", "1", "1"}, {1, 1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 7}, x);
  StratumSummaries s = summarize(data);
  const Vector tau0 = estimate_unadjusted(s, d).tau_hat;

  AdjustmentCoefficients beta;
  beta.kind = AdjustmentCoefficients::Kind::pooled;
  beta.per_arm = {Vector{2.5}, Vector{-1.0}};
  CHECK(estimate_adjusted(s, d, beta).tau_hat[0] == doctest::Approx(tau0[0]).epsilon(1e-14));

  AdjustmentCoefficients gamma;
  gamma.kind = AdjustmentCoefficients::Kind::conditional;
  gamma.shared = Vector{3.0};
  CHECK(estimate_cond(s, d, gamma).tau_hat[0] == doctest::Approx(tau0[0]).epsilon(1e-14));

  AdjustmentCoefficients betas;
  betas.kind = AdjustmentCoefficients::Kind::stratum;
  betas.per_cell = {{Vector{1.0}, Vector{-4.0}}};
  CHECK(estimate_inter(s, d, betas).tau_hat[0] == doctest::Approx(tau0[0]).epsilon(1e-14));
}

TEST_CASE("zero coefficients leave the adjusted estimate at the unadjusted value") {
  ObservedDataset data = random_dataset(17, 2, 2, 2, 5);
  StratumSummaries s = summarize(data);
  FactorialDesign d = build_design(2);
  AdjustmentCoefficients beta;
  beta.kind = AdjustmentCoefficients::Kind::pooled;
  beta.per_arm.assign(4, Vector(2, 0.0));
  const Vector tau0 = estimate_unadjusted(s, d).tau_hat;
  const Vector tau1 = estimate_adjusted(s, d, beta).tau_hat;
  for (int f = 0; f < 3; ++f) CHECK(tau1[f] == doctest::Approx(tau0[f]).epsilon(1e-14));
}

TEST_CASE("perfectly balanced covariate means disable the correction") {
  FactorialDesign d = build_design(1);
  Matrix x(8, 1);
  // both arms see covariate values {-1, -0.5, 0.5, 1}
  const double xv[8] = {-1, -0.5, 0.5, 1, -1, -0.5, 0.5, 1};
  std::vector<int> arm{1, 1, 1, 1, 2, 2, 2, 2};
  Vector y{1, 2, 3, 4, 2, 3, 5, 8};
  for (int i = 0; i < 8; ++i) x(i, 0) = xv[i];
  ObservedDataset data = make_dataset(d, std::vector<std::string>(8, "1"), arm, y, x);
  StratumSummaries s = summarize(data);
  const Vector tau0 = estimate_unadjusted(s, d).tau_hat;
  const Vector tau1 = estimate_adjusted(s, d, fit_beta_pooled(s)).tau_hat;
  CHECK(tau1[0] == doctest::Approx(tau0[0]).epsilon(1e-13));
}

TEST_CASE("conditional coefficient: hand-computed value") {
  // single stratum, x = {-1,1,-2,2}, arm1 (x,y) = (-1,1),(1,3), arm2 = (-2,0),(2,4)
  FactorialDesign d = build_design(1);
  Matrix x(4, 1);
  const double xv[4] = {-1, 1, -2, 2};
  for (int i = 0; i < 4; ++i) x(i, 0) = xv[i];
  ObservedDataset data =
      make_dataset(d, {"1", "1", "1", "1"}, {1, 1, 2, 2}, {1, 3, 0, 4}, x);
  AdjustmentCoefficients gamma = fit_gamma(summarize(data));
  CHECK(gamma.shared[0] == doctest::Approx(1.5).epsilon(1e-13));
}

TEST_CASE("conditional coefficient is zero for constant outcomes") {
  FactorialDesign d = build_design(1);
  Matrix x(6, 1);
  for (int i = 0; i < 6; ++i) x(i, 0) = i - 2.5;
  ObservedDataset data =
      make_dataset(d, {"1", "1", "1", "1", "1", "1"}, {1, 1, 1, 2, 2, 2},
                   {7, 7, 7, 7, 7, 7}, x);
  AdjustmentCoefficients gamma = fit_gamma(summarize(data));
  CHECK(gamma.shared[0] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("conditional estimate subtracts the shared-coefficient imbalance") {
  // engineered imbalance: arm1 x = {0.1, 0.3}, arm2 x = {-0.1, -0.3}
  FactorialDesign d = build_design(1);
  Matrix x(4, 1);
  x(0, 0) = 0.1;
  x(1, 0) = 0.3;
  x(2, 0) = -0.1;
  x(3, 0) = -0.3;
  ObservedDataset data = make_dataset(d, {"1", "1", "1", "1"}, {1, 1, 2, 2}, {1, 2, 3, 4}, x);
  StratumSummaries s = summarize(data);
  AdjustmentCoefficients gamma;
  gamma.kind = AdjustmentCoefficients::Kind::conditional;
  gamma.shared = Vector{1.5};
  const double tau0 = estimate_unadjusted(s, d).tau_hat[0];
  const double tau1 = estimate_cond(s, d, gamma).tau_hat[0];
  CHECK(tau1 - tau0 == doctest::Approx(-0.6).epsilon(1e-13));
}

TEST_CASE("conditional estimate matches the two-arm regression form") {
  ObservedDataset data = random_dataset(23, 1, 1, 1, 8);
  StratumSummaries s = summarize(data);
  FactorialDesign d = build_design(1);
  AdjustmentCoefficients gamma = fit_gamma(s);
  const double tau0 = estimate_unadjusted(s, d).tau_hat[0];
  const double tau1 = estimate_cond(s, d, gamma).tau_hat[0];
  const double imbalance = s.strat_x_mean[0][0] - s.strat_x_mean[1][0];
  CHECK(tau1 == doctest::Approx(tau0 - imbalance * gamma.shared[0]).epsilon(1e-12));
}

TEST_CASE("stratum-specific slopes: exact line and no pooling") {
  FactorialDesign d = build_design(1);
  Matrix x(12, 1);
  std::vector<std::string> st;
  std::vector<int> arm;
  Vector y;
  int row = 0;
  // stratum 1 has slope 1, stratum 2 slope -1, both arms
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int u = 0; u < 3; ++u, ++row) {
        st.push_back(std::to_string(s + 1));
        arm.push_back(a + 1);
        x(row, 0) = u;
        y.push_back((s == 0 ? 1.0 : -1.0) * u + 10.0 * a);
      }
  AdjustmentCoefficients betas = fit_beta_stratum(summarize(make_dataset(d, st, arm, y, x)));
  for (int a = 0; a < 2; ++a) {
    CHECK(betas.per_cell[0][a][0] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(betas.per_cell[1][a][0] == doctest::Approx(-1.0).epsilon(1e-13));
  }
}

TEST_CASE("stratum-specific fit refuses small cells with a method-named reason") {
  ObservedDataset data = random_dataset(31, 2, 2, 3, 3);  // cells of 3 < p+2 = 5
  CHECK_THROWS_WITH_AS(fit_beta_stratum(summarize(data)),
                       doctest::Contains("inter requires n_[m]q >= p+2"), ValidationError);
}

TEST_CASE("single stratum: stratum-specific and pooled adjustments coincide") {
  ObservedDataset data = random_dataset(37, 2, 1, 2, 7);
  StratumSummaries s = summarize(data);
  FactorialDesign d = build_design(2);
  const Vector tau_adj = estimate_adjusted(s, d, fit_beta_pooled(s)).tau_hat;
  const Vector tau_inter = estimate_inter(s, d, fit_beta_stratum(s)).tau_hat;
  for (int f = 0; f < 3; ++f)
    CHECK(tau_inter[f] == doctest::Approx(tau_adj[f]).epsilon(1e-11));
}

TEST_CASE("noiseless linear outcomes are recovered exactly by stratum adjustment") {
  FactorialDesign d = build_design(2);
  Rng rng(41);
  const Vector slope{1.25, -0.75};
  const double arm_shift[4] = {0.0, 1.0, 2.0, 5.0};
  std::vector<std::string> st;
  std::vector<int> arm;
  Vector y;
  const int cell = 5, m = 2;
  Matrix x(m * 4 * cell, 2);
  int row = 0;
  for (int s = 0; s < m; ++s)
    for (int a = 0; a < 4; ++a)
      for (int u = 0; u < cell; ++u, ++row) {
        st.push_back(std::to_string(s + 1));
        arm.push_back(a + 1);
        x(row, 0) = rng.uniform(-1.0, 1.0);
        x(row, 1) = rng.uniform(-1.0, 1.0);
        y.push_back(slope[0] * x(row, 0) + slope[1] * x(row, 1) + arm_shift[a]);
      }
  StratumSummaries s = summarize(make_dataset(d, st, arm, y, x));
  EffectEstimate est = estimate_inter(s, d, fit_beta_stratum(s));
  // true effects are the contrasts of the arm shifts
  Vector expect(3, 0.0);
  for (int f = 0; f < 3; ++f) {
    for (int a = 0; a < 4; ++a) expect[f] += 0.5 * d.sign(f, a) * arm_shift[a];
    CHECK(est.tau_hat[f] == doctest::Approx(expect[f]).epsilon(1e-10));
  }
  // residuals vanish and so does the attached variance (up to rounding)
  REQUIRE(est.vcov);
  for (int f = 0; f < 3; ++f) CHECK(std::abs((*est.vcov)(f, f)) <= 1e-14);
}

TEST_CASE("residuals: zero coefficients give centered outcomes, cells average to zero") {
  ObservedDataset data = random_dataset(43, 2, 2, 2, 6);
  StratumSummaries s = summarize(data);
  AdjustmentCoefficients zero;
  zero.kind = AdjustmentCoefficients::Kind::conditional;
  zero.shared = Vector(2, 0.0);
  ResidualMatrix r = compute_residuals(data, s, zero, ResidualKind::eta);
  for (int i = 0; i < data.n(); ++i) {
    const CellSummary& c = s.cell[data.stratum_of[i]][data.arm_of[i] - 1];
    CHECK(r.value[i] == doctest::Approx(data.y[i] - c.y_mean).epsilon(1e-14));
  }

  for (ResidualKind kind : {ResidualKind::epsilon, ResidualKind::eta, ResidualKind::mu}) {
    AdjustmentCoefficients coeffs = kind == ResidualKind::epsilon ? fit_beta_pooled(s)
                                    : kind == ResidualKind::eta   ? fit_gamma(s)
                                                                  : fit_beta_stratum(s);
    ResidualMatrix rr = compute_residuals(data, s, coeffs, kind);
    std::vector<std::vector<double>> cell_sum(s.m, std::vector<double>(s.q, 0.0));
    for (int i = 0; i < data.n(); ++i)
      cell_sum[data.stratum_of[i]][data.arm_of[i] - 1] += rr.value[i];
    for (int m = 0; m < s.m; ++m)
      for (int a = 0; a < s.q; ++a)
        CHECK(std::abs(cell_sum[m][a] / s.cell[m][a].count) <= 1e-12);
  }
}

TEST_CASE("attached variances equal the variance of the unit residuals") {
  ObservedDataset data = random_dataset(47, 2, 2, 2, 6);
  StratumSummaries s = summarize(data);
  FactorialDesign d = build_design(2);
  AdjustmentCoefficients beta = fit_beta_pooled(s);
  EffectEstimate est = estimate_adjusted(s, d, beta);
  ResidualMatrix r = compute_residuals(data, s, beta, ResidualKind::epsilon);
  for (int m = 0; m < s.m; ++m)
    for (int a = 0; a < s.q; ++a) {
      double mean = 0.0;
      int cnt = 0;
      for (int i = 0; i < data.n(); ++i)
        if (data.stratum_of[i] == m && data.arm_of[i] - 1 == a) {
          mean += r.value[i];
          ++cnt;
        }
      mean /= cnt;
      double var = 0.0;
      for (int i = 0; i < data.n(); ++i)
        if (data.stratum_of[i] == m && data.arm_of[i] - 1 == a)
          var += (r.value[i] - mean) * (r.value[i] - mean);
      var /= cnt - 1;
      CHECK(est.residual_cell_var[m][a] == doctest::Approx(var).epsilon(1e-11));
    }
}

TEST_CASE("exact-interpolation cells produce zero residuals") {
  FactorialDesign d = build_design(1);
  Matrix x(8, 1);
  std::vector<std::string> st(8, "1");
  std::vector<int> arm{1, 1, 1, 1, 2, 2, 2, 2};
  Vector y;
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i % 4;
    y.push_back((i < 4 ? 2.0 : -3.0) * x(i, 0) + (i < 4 ? 0.0 : 10.0));
  }
  ObservedDataset data = make_dataset(d, st, arm, y, x);
  StratumSummaries s = summarize(data);
  ResidualMatrix r = compute_residuals(data, s, fit_beta_stratum(s), ResidualKind::mu);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(r.value[i]) <= 1e-12);
}

TEST_CASE("covariate translation by stratum constants leaves adjusted estimates unchanged") {
  ObservedDataset data = random_dataset(53, 2, 3, 2, 6);
  FactorialDesign d = build_design(2);
  StratumSummaries s0 = summarize(data);

  ObservedDataset shifted = data;
  Matrix xs = data.x;
  const double shift[3][2] = {{5.0, -2.0}, {-7.5, 3.25}, {100.0, 0.125}};
  for (int i = 0; i < data.n(); ++i)
    for (int j = 0; j < 2; ++j) xs(i, j) += shift[data.stratum_of[i]][j];
  shifted.x = xs;
  StratumSummaries s1 = summarize(shifted);

  const Vector adj0 = estimate_adjusted(s0, d, fit_beta_pooled(s0)).tau_hat;
  const Vector adj1 = estimate_adjusted(s1, d, fit_beta_pooled(s1)).tau_hat;
  const Vector cond0 = estimate_cond(s0, d, fit_gamma(s0)).tau_hat;
  const Vector cond1 = estimate_cond(s1, d, fit_gamma(s1)).tau_hat;
  const Vector int0 = estimate_inter(s0, d, fit_beta_stratum(s0)).tau_hat;
  const Vector int1 = estimate_inter(s1, d, fit_beta_stratum(s1)).tau_hat;
  for (int f = 0; f < 3; ++f) {
    CHECK(std::abs(adj0[f] - adj1[f]) <= 1e-10);
    CHECK(std::abs(cond0[f] - cond1[f]) <= 1e-10);
    CHECK(std::abs(int0[f] - int1[f]) <= 1e-10);
  }
}

TEST_CASE("outcome rescaling maps estimates and variances equivariantly") {
  ObservedDataset data = random_dataset(59, 2, 2, 2, 6);
  FactorialDesign d = build_design(2);
  const double a = -2.5, b = 7.0;
  ObservedDataset scaled = data;
  for (auto& v : scaled.y) v = a * v + b;
  StratumSummaries s0 = summarize(data);
  StratumSummaries s1 = summarize(scaled);
  for (Method method : {Method::unadj, Method::adj, Method::cond, Method::inter}) {
    EffectEstimate e0 = estimate(s0, d, method);
    EffectEstimate e1 = estimate(s1, d, method);
    for (int f = 0; f < 3; ++f) {
      CHECK(e1.tau_hat[f] == doctest::Approx(a * e0.tau_hat[f]).epsilon(1e-10));
      CHECK((*e1.vcov)(f, f) == doctest::Approx(a * a * (*e0.vcov)(f, f)).epsilon(1e-10));
    }
  }
}

TEST_CASE("every estimator is the contrast matrix applied to adjusted arm means") {
  ObservedDataset data = random_dataset(61, 2, 2, 2, 6);
  FactorialDesign d = build_design(2);
  StratumSummaries s = summarize(data);
  AdjustmentCoefficients beta = fit_beta_pooled(s);
  EffectEstimate est = estimate_adjusted(s, d, beta);
  Vector arm_value(4);
  for (int a = 0; a < 4; ++a) {
    double corr = 0.0;
    for (int j = 0; j < 2; ++j)
      corr += (s.strat_x_mean[a][j] - s.x_bar[j]) * beta.per_arm[a][j];
    arm_value[a] = s.strat_y_mean[a] - corr;
  }
  for (int f = 0; f < 3; ++f) {
    double acc = 0.0;
    for (int a = 0; a < 4; ++a) acc += 0.5 * d.sign(f, a) * arm_value[a];
    CHECK(est.tau_hat[f] == doctest::Approx(acc).epsilon(1e-13));
  }
}

TEST_CASE("the conditional coefficient does not depend on the effect row") {
  // the fit never touches the contrast signs: two designs with the same
  // cells give identical vectors
  ObservedDataset data2 = random_dataset(67, 2, 2, 2, 6);
  StratumSummaries s = summarize(data2);
  AdjustmentCoefficients g1 = fit_gamma(s);
  AdjustmentCoefficients g2 = fit_gamma(s);
  CHECK(g1.shared == g2.shared);
}
