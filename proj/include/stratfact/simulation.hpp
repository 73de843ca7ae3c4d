#ifndef STRATFACT_SIMULATION_HPP
#define STRATFACT_SIMULATION_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stratfact/dataset.hpp"
#include "stratfact/design.hpp"
#include "stratfact/estimators.hpp"

namespace stratfact {

// A fixed finite population: the full table of potential outcomes plus
// covariates. Only the treatment assignment is random afterwards.
struct PotentialPopulation {
  int case_id = 0;  // 0 for hand-built populations
  uint64_t seed = 0;
  int k = 0, q = 0, p = 0;

  std::vector<std::string> stratum_ids;
  std::vector<int> n_m;
  std::vector<std::vector<int>> counts;  // planned n_mq
  std::vector<int> stratum_of;           // per unit, grouped by stratum
  Matrix x;                              // n rows, p columns
  Matrix y;                              // n rows, Q columns (science table)

  Vector pi;
  std::vector<Vector> e;

  Vector tau;    // true effects, length F
  Matrix tau_m;  // per-stratum effects, M x F

  // generating-process metadata (empty for hand-built populations)
  std::vector<Matrix> beta_outcome;  // per stratum set (single entry when shared)
  std::vector<Matrix> beta_exp;
  Vector sigma2;

  int n() const { return y.rows(); }
  int m() const { return static_cast<int>(stratum_ids.size()); }
};

// Builds a population from explicit tables. Units must be grouped by
// stratum in the order of `arm_counts`; stratum ids are "1".."M".
PotentialPopulation make_population(const FactorialDesign& design,
                                    const std::vector<std::vector<int>>& arm_counts, Matrix y,
                                    Matrix x);

// The four canonical 2^2 scenarios. 1: many small strata, equal propensity
// 1/4 (M=20, n_m=12). 2: two large homogeneous strata (n_m=108). 3: like 2
// but with stratum-specific outcome coefficients. 4: ten strata of 40 with
// propensity ladders and a scalar covariate. `strata`/`stratum_size`
// override the defaults where the case allows it.
PotentialPopulation generate_scenario(int case_id, uint64_t seed,
                                      std::optional<int> strata = std::nullopt,
                                      std::optional<int> stratum_size = std::nullopt);

// Builds the observed dataset implied by an assignment of this population.
ObservedDataset observe(const PotentialPopulation& pop, const FactorialDesign& design,
                        const std::vector<int>& arms);

AssignmentPlan plan_from(const PotentialPopulation& pop, uint64_t seed);

enum class Source { y, epsilon, eta, mu };

std::string source_name(Source s);

// Exact finite-population moments computed from the full science table.
struct OracleMoments {
  Source source = Source::y;
  SymMatrix v_tilde;           // F x F
  SymMatrix v_n;               // F x F
  SymMatrix s2_tau_weighted;   // pi-weighted unit-level effect covariance
  std::vector<SymMatrix> s2_tau_m;
  std::vector<SymMatrix> src_cov;  // per stratum, Q x Q covariance of the source

  // population adjustment vectors behind the residual sources
  std::vector<Vector> beta_per_arm;              // epsilon
  Vector gamma;                                  // eta
  std::vector<std::vector<Vector>> beta_per_cell;  // mu
};

OracleMoments oracle_moments(const PotentialPopulation& pop, const FactorialDesign& design,
                             Source source);

// Covariance of the stratified arm-mean vector over the assignment
// distribution: sum_m pi_m^2 [ diag(S_m(q,q)/n_mq) - S_m / n_m ].
SymMatrix stratified_arm_mean_cov(const PotentialPopulation& pop, const OracleMoments& om);

struct ExactMoments {
  Vector mean;
  SymMatrix cov;
  uint64_t assignment_count = 0;
};

// Number of admissible assignments (product of per-stratum multinomials),
// or budget+1 if it exceeds the budget.
uint64_t count_assignments(const PotentialPopulation& pop, uint64_t budget);

// Exact randomization moments of an arbitrary statistic, visiting every
// admissible assignment once. Refuses when the count exceeds the budget.
ExactMoments enumerate_exact_stat(const PotentialPopulation& pop,
                                  const std::function<Vector(const std::vector<int>&)>& stat,
                                  int stat_dim, uint64_t budget = 1000000);

// Exact randomization moments of an effect estimator.
ExactMoments enumerate_exact(const PotentialPopulation& pop, const FactorialDesign& design,
                             Method method, uint64_t budget = 1000000);

// Exact moments of the stratified arm means of the observed outcome.
ExactMoments enumerate_arm_means(const PotentialPopulation& pop, const FactorialDesign& design,
                                 uint64_t budget = 1000000);

struct MethodMetrics {
  Method method = Method::unadj;
  bool applicable = true;
  std::string reason;  // set when not applicable
  Vector bias, sd, rmse, cp, ci_length;
  Vector rmse_ratio, length_ratio;  // vs unadj, when unadj was run
  SymMatrix emp_cov;                // covariance of the draws across replications
  std::optional<double> region_area;  // joint main effects, K = 2 only
  std::optional<double> area_ratio;
};

struct MetricsTable {
  int case_id = 0;
  int reps = 0;
  double alpha = 0.05;
  uint64_t master_seed = 0;
  int k = 0, f = 0, n = 0, m = 0;
  Vector true_tau;
  std::vector<std::string> effect_labels;
  std::vector<MethodMetrics> methods;
};

struct MonteCarloOptions {
  int threads = 0;                // 0: honor STRATFACT_THREADS, else all cores
  std::ostream* draws = nullptr;  // optional per-replication CSV sink
};

// Runs `reps` stratified experiments on the frozen population. Replication
// r uses the derived seed hash64(master_seed, r), so results do not depend
// on the thread count and any single replication can be reproduced.
MetricsTable run_monte_carlo(const PotentialPopulation& pop, const FactorialDesign& design,
                             const std::vector<Method>& methods, int reps, double alpha,
                             uint64_t master_seed, const MonteCarloOptions& options = {});

}  // namespace stratfact

#endif  // STRATFACT_SIMULATION_HPP
