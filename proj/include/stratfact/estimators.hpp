#ifndef STRATFACT_ESTIMATORS_HPP
#define STRATFACT_ESTIMATORS_HPP

#include <optional>
#include <string>
#include <vector>

#include "stratfact/dataset.hpp"
#include "stratfact/design.hpp"

namespace stratfact {

enum class Method { unadj, adj, cond, inter };

std::string method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);

// Linear adjustment vectors. `pooled` carries one vector per arm fitted by
// propensity-weighted least squares across strata; `conditional` a single
// vector shared by every arm and effect; `stratum` one vector per
// stratum-arm cell.
struct AdjustmentCoefficients {
  enum class Kind { pooled, conditional, stratum };
  Kind kind = Kind::pooled;
  std::vector<Vector> per_arm;
  Vector shared;
  std::vector<std::vector<Vector>> per_cell;

  const Vector& at(int stratum, int arm) const;
};

enum class ResidualKind { epsilon, eta, mu };

// Per-unit residual at the unit's own arm, centered at arm-specific
// stratum sample means; cell means of these are zero by construction.
struct ResidualMatrix {
  ResidualKind kind;
  Vector value;
};

struct EffectEstimate {
  Method method = Method::unadj;
  int k = 0, f = 0, n = 0, m = 0;
  std::vector<std::string> effect_labels;
  Vector tau_hat;
  // Covariance estimate of tau_hat (the conservative variance estimate
  // divided by n). Absent when some stratum-arm cell has a single unit.
  std::optional<SymMatrix> vcov;
  // Cell variances of the method's residual source, feeding vcov.
  std::vector<std::vector<double>> residual_cell_var;
};

EffectEstimate estimate_unadjusted(const StratumSummaries& summ, const FactorialDesign& design);

AdjustmentCoefficients fit_beta_pooled(const StratumSummaries& summ);
EffectEstimate estimate_adjusted(const StratumSummaries& summ, const FactorialDesign& design,
                                 const AdjustmentCoefficients& beta);

AdjustmentCoefficients fit_gamma(const StratumSummaries& summ);
EffectEstimate estimate_cond(const StratumSummaries& summ, const FactorialDesign& design,
                             const AdjustmentCoefficients& gamma);

AdjustmentCoefficients fit_beta_stratum(const StratumSummaries& summ);
EffectEstimate estimate_inter(const StratumSummaries& summ, const FactorialDesign& design,
                              const AdjustmentCoefficients& betas);

ResidualMatrix compute_residuals(const ObservedDataset& data, const StratumSummaries& summ,
                                 const AdjustmentCoefficients& coeffs, ResidualKind kind);

// Convenience: fit whatever the method needs and estimate in one step.
EffectEstimate estimate(const StratumSummaries& summ, const FactorialDesign& design, Method method);

}  // namespace stratfact

#endif  // STRATFACT_ESTIMATORS_HPP
