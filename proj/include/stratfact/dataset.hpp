#ifndef STRATFACT_DATASET_HPP
#define STRATFACT_DATASET_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stratfact/design.hpp"
#include "stratfact/numerics.hpp"

namespace stratfact {

// Observed experimental data validated against a design. Strata are indexed
// in a canonical order (numeric when every id parses as an integer, else
// lexicographic) so that weighted reductions are reproducible bit for bit;
// unit rows keep their input order.
struct ObservedDataset {
  int k = 0;
  int q = 0;
  int p = 0;  // covariate dimension

  std::vector<std::string> stratum_ids;     // canonical order
  std::vector<std::string> covariate_names;
  std::vector<int> stratum_of;              // per unit, 0-based stratum index
  std::vector<int> arm_of;                  // per unit, 1-based arm
  Vector y;
  Matrix x;                                 // n rows, p columns

  std::vector<int> n_m;
  std::vector<std::vector<int>> n_mq;
  Vector pi;                                // n_m / n
  std::vector<Vector> e;                    // n_mq / n_m

  int n() const { return static_cast<int>(y.size()); }
  int m() const { return static_cast<int>(stratum_ids.size()); }
};

// Builds the dataset from parallel unit arrays, validating arm range and
// requiring every stratum-arm cell to be non-empty.
ObservedDataset make_dataset(const FactorialDesign& design,
                             std::vector<std::string> stratum_labels,
                             std::vector<int> arms, Vector y, Matrix x,
                             std::vector<std::string> covariate_names = {});

// Column layout of an analysis CSV. Arms are given either as a single
// integer column (1..Q in design order) or as K level columns in {-1,+1}.
struct CsvSchema {
  std::string stratum_col = "stratum";
  std::string arm_col = "arm";
  std::string y_col = "y";
  std::string level_col_prefix = "f";  // f1..fK when no arm column exists
  // Empty means: every remaining column is a covariate.
  std::vector<std::string> covariate_cols;
};

ObservedDataset ingest_csv(std::istream& source, const CsvSchema& schema,
                           const FactorialDesign& design);

// Per stratum-arm cell moments. Sample variances use the n-1 divisor and
// are absent when the cell has fewer than two units.
struct CellSummary {
  int count = 0;
  double y_mean = 0.0;
  Vector x_mean;
  bool has_var = false;
  double y_var = 0.0;
  Vector xy_cov;       // cov(X, Y) within the cell
  SymMatrix xx_cov;    // cov(X) within the cell
};

struct StratumSummaries {
  int m = 0, q = 0, p = 0, n = 0;
  Vector pi;
  std::vector<Vector> e;
  std::vector<std::string> stratum_ids;

  std::vector<std::vector<CellSummary>> cell;  // [stratum][arm]

  std::vector<Vector> stratum_x_mean;   // all units of the stratum
  std::vector<SymMatrix> stratum_xx_cov;
  Vector x_bar;                         // grand covariate mean

  Vector strat_y_mean;                  // pi-weighted arm means of y
  std::vector<Vector> strat_x_mean;     // pi-weighted arm means of X

  bool all_cells_have_var() const;
  // (stratum id, arm) pairs with fewer than two units.
  std::vector<std::pair<std::string, int>> cells_below(int min_count) const;
};

StratumSummaries summarize(const ObservedDataset& data);

}  // namespace stratfact

#endif  // STRATFACT_DATASET_HPP
