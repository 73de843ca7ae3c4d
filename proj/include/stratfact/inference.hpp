#ifndef STRATFACT_INFERENCE_HPP
#define STRATFACT_INFERENCE_HPP

#include <optional>
#include <string>
#include <vector>

#include "stratfact/estimators.hpp"

namespace stratfact {

// Inputs of the conservative variance estimator: one sample variance per
// stratum-arm cell of some residual source, plus the design weights.
struct CellVariances {
  std::vector<std::string> stratum_ids;
  Vector pi;
  std::vector<Vector> e;
  std::vector<std::vector<double>> s2;
  std::vector<std::vector<int>> count;
};

struct VarianceEstimate {
  SymMatrix vhat;        // F x F, before division by n
  std::string source;    // "y", "epsilon", "eta" or "mu"
};

// Conservative variance estimate
//   Vhat = 4^{-(K-1)} sum_m pi_m sum_q s2_{m,q} / e_{m,q} * d_q d_q'
// Every cell must have at least two units.
VarianceEstimate neyman_variance(const CellVariances& cells, const FactorialDesign& design,
                                 const std::string& source);

struct ConfidenceInterval {
  int effect = 0;  // 1-based
  std::string label;
  double lo = 0.0, hi = 0.0;
};

struct ConfidenceIntervals {
  double alpha = 0.05;
  std::vector<ConfidenceInterval> intervals;
};

// Per-effect normal intervals tau_f +/- z_{1-alpha/2} sqrt(vcov_ff).
ConfidenceIntervals wald_intervals(const EffectEstimate& est, double alpha);

// Ellipsoid { mu : (tau - mu)' P (tau - mu) <= threshold } with
// P = vcov^{-1} and threshold the chi-square quantile. The boundary is
// inside. `area` is only defined for two effects; `log_volume` always is.
struct WaldRegion {
  Vector center;
  SymMatrix precision;
  double threshold = 0.0;
  std::optional<double> area;
  double log_volume = 0.0;

  double quadratic_form(const Vector& mu) const;
  bool contains(const Vector& mu) const { return quadratic_form(mu) <= threshold; }
};

WaldRegion wald_region(const EffectEstimate& est, double alpha);

// Region restricted to a subset of effects (0-based indices), e.g. the
// joint main effects of a 2^2 design.
WaldRegion wald_region_subset(const EffectEstimate& est, const std::vector<int>& effects,
                              double alpha);

// Difference between the variance-estimate limits of the raw outcomes and
// of the stratum-specific residuals,
//   sum_m pi_m sum_q d_q beta' s_{m,XX} beta d_q' / e_{m,q},
// positive semi-definite term by term (each scalar is a sum of squares).
SymMatrix inter_variance_gain(const StratumSummaries& summ, const FactorialDesign& design,
                              const AdjustmentCoefficients& betas);

}  // namespace stratfact

#endif  // STRATFACT_INFERENCE_HPP
