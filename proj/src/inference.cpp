#include "stratfact/inference.hpp"

#include <cmath>

namespace stratfact {

VarianceEstimate neyman_variance(const CellVariances& cells, const FactorialDesign& design,
                                 const std::string& source) {
  const int m_count = static_cast<int>(cells.pi.size());
  const int q = design.q();
  const int f_count = design.f();
  for (int m = 0; m < m_count; ++m)
    for (int a = 0; a < q; ++a)
      if (cells.count[m][a] < 2) {
        const std::string id = m < static_cast<int>(cells.stratum_ids.size())
                                   ? cells.stratum_ids[m]
                                   : std::to_string(m + 1);
        throw ValidationError("variance estimation requires n_[m]q >= 2; stratum '" + id +
                              "', arm " + std::to_string(a + 1) + " has " +
                              std::to_string(cells.count[m][a]));
      }

  VarianceEstimate out;
  out.source = source;
  out.vhat = SymMatrix(f_count);
  for (int m = 0; m < m_count; ++m)
    for (int a = 0; a < q; ++a) {
      const double c = cells.pi[m] * cells.s2[m][a] / cells.e[m][a];
      if (c == 0.0) continue;
      for (int fi = 0; fi < f_count; ++fi)
        for (int fj = fi; fj < f_count; ++fj)
          out.vhat.add(fi, fj, c * design.sign(fi, a) * design.sign(fj, a));
    }
  out.vhat.scale(std::ldexp(1.0, -2 * (design.k() - 1)));
  return out;
}

ConfidenceIntervals wald_intervals(const EffectEstimate& est, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0,1)");
  if (!est.vcov)
    throw ValidationError("confidence intervals unavailable: no variance estimate "
                          "(some stratum-arm cell has a single unit)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  ConfidenceIntervals out;
  out.alpha = alpha;
  out.intervals.resize(est.f);
  for (int f = 0; f < est.f; ++f) {
    const double hw = z * std::sqrt(std::max(0.0, (*est.vcov)(f, f)));
    out.intervals[f] = {f + 1, est.effect_labels[f], est.tau_hat[f] - hw, est.tau_hat[f] + hw};
  }
  return out;
}

double WaldRegion::quadratic_form(const Vector& mu) const {
  const int f = static_cast<int>(center.size());
  double q = 0.0;
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < f; ++j) q += (center[i] - mu[i]) * precision(i, j) * (center[j] - mu[j]);
  return q;
}

namespace {

WaldRegion region_from(const Vector& center, const SymMatrix& vcov, double alpha) {
  const int f = static_cast<int>(center.size());
  WaldRegion out;
  out.center = center;
  out.threshold = chi2_quantile(f, 1.0 - alpha);

  Matrix l;
  try {
    l = cholesky_factor(vcov);
  } catch (const SingularityError& err) {
    throw SingularityError(
        "confidence region undefined: variance estimate is singular (rank < " +
            std::to_string(f) + ", pivot " + std::to_string(err.pivot()) + ")",
        err.pivot());
  }
  Matrix inv = solve_spd(vcov, SymMatrix::identity(f).to_matrix());
  out.precision = SymMatrix(f);
  for (int i = 0; i < f; ++i)
    for (int j = i; j < f; ++j) out.precision.set(i, j, 0.5 * (inv(i, j) + inv(j, i)));

  double log_det = 0.0;
  for (int i = 0; i < f; ++i) log_det += 2.0 * std::log(l(i, i));
  // ellipsoid volume: (pi * c)^{f/2} / Gamma(f/2 + 1) * sqrt(det vcov)
  out.log_volume = 0.5 * f * std::log(3.14159265358979323846 * out.threshold) -
                   log_gamma_fn(0.5 * f + 1.0) + 0.5 * log_det;
  if (f == 2) out.area = std::exp(out.log_volume);
  return out;
}

}  // namespace

WaldRegion wald_region(const EffectEstimate& est, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0,1)");
  if (!est.vcov)
    throw ValidationError("confidence region unavailable: no variance estimate "
                          "(some stratum-arm cell has a single unit)");
  return region_from(est.tau_hat, *est.vcov, alpha);
}

WaldRegion wald_region_subset(const EffectEstimate& est, const std::vector<int>& effects,
                              double alpha) {
  if (!est.vcov) throw ValidationError("confidence region unavailable: no variance estimate");
  const int f = static_cast<int>(effects.size());
  Vector center(f);
  SymMatrix vcov(f);
  for (int i = 0; i < f; ++i) {
    center[i] = est.tau_hat[effects[i]];
    for (int j = i; j < f; ++j) vcov.set(i, j, (*est.vcov)(effects[i], effects[j]));
  }
  return region_from(center, vcov, alpha);
}

SymMatrix inter_variance_gain(const StratumSummaries& summ, const FactorialDesign& design,
                              const AdjustmentCoefficients& betas) {
  if (betas.kind != AdjustmentCoefficients::Kind::stratum)
    throw ValidationError("inter_variance_gain expects stratum-specific coefficients");
  const int f_count = design.f();
  SymMatrix gain(f_count);
  for (int m = 0; m < summ.m; ++m) {
    // quadratic form through the factor so each term is a sum of squares
    const Matrix l = cholesky_factor_psd(summ.stratum_xx_cov[m]);
    for (int a = 0; a < summ.q; ++a) {
      const Vector& beta = betas.per_cell[m][a];
      double form = 0.0;
      for (int j = 0; j < summ.p; ++j) {
        double t = 0.0;
        for (int i = j; i < summ.p; ++i) t += l(i, j) * beta[i];
        form += t * t;
      }
      if (form < 0.0)
        throw ValidationError("variance gain term is negative; covariance not PSD");
      const double c = summ.pi[m] * form / summ.e[m][a];
      for (int fi = 0; fi < f_count; ++fi)
        for (int fj = fi; fj < f_count; ++fj)
          gain.add(fi, fj, c * design.sign(fi, a) * design.sign(fj, a));
    }
  }
  gain.scale(std::ldexp(1.0, -2 * (design.k() - 1)));
  return gain;
}

}  // namespace stratfact
