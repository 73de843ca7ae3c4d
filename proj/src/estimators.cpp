#include "stratfact/estimators.hpp"

#include <cmath>

#include "stratfact/inference.hpp"

namespace stratfact {

std::string method_name(Method m) {
  switch (m) {
    case Method::unadj: return "unadj";
    case Method::adj: return "adj";
    case Method::cond: return "cond";
    case Method::inter: return "inter";
  }
  return "unadj";
}

std::optional<Method> method_from_name(const std::string& name) {
  if (name == "unadj") return Method::unadj;
  if (name == "adj") return Method::adj;
  if (name == "cond") return Method::cond;
  if (name == "inter") return Method::inter;
  return std::nullopt;
}

const Vector& AdjustmentCoefficients::at(int stratum, int arm) const {
  switch (kind) {
    case Kind::pooled: return per_arm[arm];
    case Kind::conditional: return shared;
    case Kind::stratum: return per_cell[stratum][arm];
  }
  return shared;
}

namespace {

double pow2(int e) { return std::ldexp(1.0, e); }

// tau = 2^{-(K-1)} sum_q d_q * arm_value(q)
Vector contrast(const FactorialDesign& design, const Vector& arm_value) {
  const double scale = pow2(-(design.k() - 1));
  Vector tau(design.f(), 0.0);
  for (int f = 0; f < design.f(); ++f) {
    double s = 0.0;
    for (int a = 0; a < design.q(); ++a) s += design.sign(f, a) * arm_value[a];
    tau[f] = scale * s;
  }
  return tau;
}

void require_cell_var(const StratumSummaries& summ, const char* what, int min_count,
                      bool p_plus_two = false) {
  for (int m = 0; m < summ.m; ++m)
    for (int a = 0; a < summ.q; ++a)
      if (summ.cell[m][a].count < min_count)
        throw ValidationError(
            std::string(what) + " requires n_[m]q >= " +
            (p_plus_two ? "p+2" : std::to_string(min_count)) + "; stratum '" +
            summ.stratum_ids[m] + "', arm " + std::to_string(a + 1) + " has " +
            std::to_string(summ.cell[m][a].count) +
            (p_plus_two ? " (p = " + std::to_string(summ.p) + ")" : ""));
}

// Sample variance of y - x'c within a cell, from the cell moments:
//   s2_y - 2 c's_xy + c' s_xx c.
// Equals the centered residual sum of squares over (count-1) exactly, so it
// is clamped at zero against rounding.
double residual_cell_variance(const CellSummary& cell, const Vector& c) {
  double v = cell.y_var;
  for (size_t j = 0; j < c.size(); ++j) v -= 2.0 * c[j] * cell.xy_cov[j];
  for (size_t j = 0; j < c.size(); ++j)
    for (size_t l = 0; l < c.size(); ++l) v += c[j] * cell.xx_cov(j, l) * c[l];
  return v > 0.0 ? v : 0.0;
}

std::vector<std::vector<double>> residual_variances(const StratumSummaries& summ,
                                                    const AdjustmentCoefficients& coeffs) {
  std::vector<std::vector<double>> s2(summ.m, std::vector<double>(summ.q, 0.0));
  for (int m = 0; m < summ.m; ++m)
    for (int a = 0; a < summ.q; ++a)
      s2[m][a] = residual_cell_variance(summ.cell[m][a], coeffs.at(m, a));
  return s2;
}

void attach_variance(EffectEstimate& est, const StratumSummaries& summ,
                     const FactorialDesign& design,
                     const std::vector<std::vector<double>>& s2, const std::string& source) {
  CellVariances cells;
  cells.stratum_ids = summ.stratum_ids;
  cells.pi = summ.pi;
  cells.e = summ.e;
  cells.s2 = s2;
  cells.count.assign(summ.m, std::vector<int>(summ.q, 0));
  for (int m = 0; m < summ.m; ++m)
    for (int a = 0; a < summ.q; ++a) cells.count[m][a] = summ.cell[m][a].count;
  VarianceEstimate v = neyman_variance(cells, design, source);
  v.vhat.scale(1.0 / summ.n);
  est.vcov = std::move(v.vhat);
  est.residual_cell_var = s2;
}

EffectEstimate base_estimate(const StratumSummaries& summ, const FactorialDesign& design,
                             Method method) {
  EffectEstimate est;
  est.method = method;
  est.k = design.k();
  est.f = design.f();
  est.n = summ.n;
  est.m = summ.m;
  est.effect_labels = design.effect_labels();
  return est;
}

}  // namespace

EffectEstimate estimate_unadjusted(const StratumSummaries& summ, const FactorialDesign& design) {
  EffectEstimate est = base_estimate(summ, design, Method::unadj);
  est.tau_hat = contrast(design, summ.strat_y_mean);
  if (summ.all_cells_have_var()) {
    std::vector<std::vector<double>> s2(summ.m, std::vector<double>(summ.q, 0.0));
    for (int m = 0; m < summ.m; ++m)
      for (int a = 0; a < summ.q; ++a) s2[m][a] = summ.cell[m][a].y_var;
    attach_variance(est, summ, design, s2, "y");
  }
  return est;
}

AdjustmentCoefficients fit_beta_pooled(const StratumSummaries& summ) {
  require_cell_var(summ, "adj", 2);
  AdjustmentCoefficients out;
  out.kind = AdjustmentCoefficients::Kind::pooled;
  out.per_arm.assign(summ.q, Vector(summ.p, 0.0));
  if (summ.p == 0) return out;
  for (int a = 0; a < summ.q; ++a) {
    SymMatrix gram(summ.p);
    Vector rhs(summ.p, 0.0);
    for (int m = 0; m < summ.m; ++m) {
      const double e = summ.e[m][a];
      const double w = summ.pi[m] * (1.0 - e) / e;  // zero when e == 1
      const CellSummary& c = summ.cell[m][a];
      for (int j = 0; j < summ.p; ++j) {
        rhs[j] += w * c.xy_cov[j];
        for (int l = j; l < summ.p; ++l) gram.add(j, l, w * c.xx_cov(j, l));
      }
    }
    try {
      out.per_arm[a] = solve_spd(gram, rhs);
    } catch (const SingularityError& err) {
      throw SingularityError("pooled adjustment, arm " + std::to_string(a + 1) +
                                 ": singular covariate gram matrix at pivot " +
                                 std::to_string(err.pivot()),
                             err.pivot());
    }
  }
  return out;
}

EffectEstimate estimate_adjusted(const StratumSummaries& summ, const FactorialDesign& design,
                                 const AdjustmentCoefficients& beta) {
  require_cell_var(summ, "adj", 2);
  EffectEstimate est = base_estimate(summ, design, Method::adj);
  Vector adjusted(summ.q);
  for (int a = 0; a < summ.q; ++a) {
    double corr = 0.0;
    for (int j = 0; j < summ.p; ++j)
      corr += (summ.strat_x_mean[a][j] - summ.x_bar[j]) * beta.per_arm[a][j];
    adjusted[a] = summ.strat_y_mean[a] - corr;
  }
  est.tau_hat = contrast(design, adjusted);
  attach_variance(est, summ, design, residual_variances(summ, beta), "epsilon");
  return est;
}

AdjustmentCoefficients fit_gamma(const StratumSummaries& summ) {
  require_cell_var(summ, "cond", 2);
  AdjustmentCoefficients out;
  out.kind = AdjustmentCoefficients::Kind::conditional;
  out.shared.assign(summ.p, 0.0);
  if (summ.p == 0) return out;
  SymMatrix gram(summ.p);
  Vector rhs(summ.p, 0.0);
  for (int m = 0; m < summ.m; ++m) {
    double inv_e_sum = 0.0;
    for (int a = 0; a < summ.q; ++a) {
      const double w = summ.pi[m] / summ.e[m][a];
      inv_e_sum += w;
      for (int j = 0; j < summ.p; ++j) rhs[j] += w * summ.cell[m][a].xy_cov[j];
    }
    // the covariate part uses the whole-stratum covariance for every arm
    for (int j = 0; j < summ.p; ++j)
      for (int l = j; l < summ.p; ++l) gram.add(j, l, inv_e_sum * summ.stratum_xx_cov[m](j, l));
  }
  try {
    out.shared = solve_spd(gram, rhs);
  } catch (const SingularityError& err) {
    throw SingularityError("conditional adjustment: singular covariate gram matrix at pivot " +
                               std::to_string(err.pivot()),
                           err.pivot());
  }
  return out;
}

EffectEstimate estimate_cond(const StratumSummaries& summ, const FactorialDesign& design,
                             const AdjustmentCoefficients& gamma) {
  require_cell_var(summ, "cond", 2);
  EffectEstimate est = base_estimate(summ, design, Method::cond);
  Vector adjusted(summ.q);
  for (int a = 0; a < summ.q; ++a) {
    double corr = 0.0;
    for (int j = 0; j < summ.p; ++j)
      corr += (summ.strat_x_mean[a][j] - summ.x_bar[j]) * gamma.shared[j];
    adjusted[a] = summ.strat_y_mean[a] - corr;
  }
  est.tau_hat = contrast(design, adjusted);
  attach_variance(est, summ, design, residual_variances(summ, gamma), "eta");
  return est;
}

AdjustmentCoefficients fit_beta_stratum(const StratumSummaries& summ) {
  require_cell_var(summ, "inter", summ.p + 2, true);
  AdjustmentCoefficients out;
  out.kind = AdjustmentCoefficients::Kind::stratum;
  out.per_cell.assign(summ.m, std::vector<Vector>(summ.q, Vector(summ.p, 0.0)));
  if (summ.p == 0) return out;
  for (int m = 0; m < summ.m; ++m)
    for (int a = 0; a < summ.q; ++a) {
      const CellSummary& c = summ.cell[m][a];
      try {
        out.per_cell[m][a] = solve_spd(c.xx_cov, c.xy_cov);
      } catch (const SingularityError& err) {
        throw SingularityError("stratum-specific adjustment, stratum '" + summ.stratum_ids[m] +
                                   "', arm " + std::to_string(a + 1) +
                                   ": singular covariate gram matrix at pivot " +
                                   std::to_string(err.pivot()),
                               err.pivot());
      }
    }
  return out;
}

EffectEstimate estimate_inter(const StratumSummaries& summ, const FactorialDesign& design,
                              const AdjustmentCoefficients& betas) {
  require_cell_var(summ, "inter", summ.p + 2, true);
  EffectEstimate est = base_estimate(summ, design, Method::inter);
  Vector adjusted(summ.q, 0.0);
  for (int a = 0; a < summ.q; ++a)
    for (int m = 0; m < summ.m; ++m) {
      double corr = 0.0;
      for (int j = 0; j < summ.p; ++j)
        corr += (summ.cell[m][a].x_mean[j] - summ.stratum_x_mean[m][j]) * betas.per_cell[m][a][j];
      adjusted[a] += summ.pi[m] * (summ.cell[m][a].y_mean - corr);
    }
  est.tau_hat = contrast(design, adjusted);
  attach_variance(est, summ, design, residual_variances(summ, betas), "mu");
  // the variance reduction of this method over raw outcomes is a sum of
  // squares term by term; recompute it to keep that guarantee checked
  inter_variance_gain(summ, design, betas);
  return est;
}

ResidualMatrix compute_residuals(const ObservedDataset& data, const StratumSummaries& summ,
                                 const AdjustmentCoefficients& coeffs, ResidualKind kind) {
  const auto expected = kind == ResidualKind::epsilon ? AdjustmentCoefficients::Kind::pooled
                        : kind == ResidualKind::eta   ? AdjustmentCoefficients::Kind::conditional
                                                      : AdjustmentCoefficients::Kind::stratum;
  if (coeffs.kind != expected)
    throw ValidationError("residual kind does not match the coefficient kind");
  ResidualMatrix out;
  out.kind = kind;
  out.value.resize(data.n());
  for (int i = 0; i < data.n(); ++i) {
    const int m = data.stratum_of[i];
    const int a = data.arm_of[i] - 1;
    const CellSummary& c = summ.cell[m][a];
    const Vector& coef = coeffs.at(m, a);
    double r = data.y[i] - c.y_mean;
    for (int j = 0; j < data.p; ++j) r -= (data.x(i, j) - c.x_mean[j]) * coef[j];
    out.value[i] = r;
  }
  return out;
}

EffectEstimate estimate(const StratumSummaries& summ, const FactorialDesign& design,
                        Method method) {
  switch (method) {
    case Method::unadj: return estimate_unadjusted(summ, design);
    case Method::adj: return estimate_adjusted(summ, design, fit_beta_pooled(summ));
    case Method::cond: return estimate_cond(summ, design, fit_gamma(summ));
    case Method::inter: return estimate_inter(summ, design, fit_beta_stratum(summ));
  }
  throw ValidationError("unknown method");
}

}  // namespace stratfact
