#ifndef STRATFACT_REPORT_HPP
#define STRATFACT_REPORT_HPP

#include <nlohmann/json.hpp>

#include "stratfact/inference.hpp"
#include "stratfact/simulation.hpp"

namespace stratfact {

// Result block for one method: point estimates, covariance, intervals and
// region when the variance estimate exists. A singular variance still
// yields intervals; the region is replaced by a diagnostic note.
nlohmann::json method_result_json(const StratumSummaries& summ, const FactorialDesign& design,
                                  Method method, double alpha);

nlohmann::json region_json(const WaldRegion& region);

nlohmann::json metrics_json(const MetricsTable& table);

}  // namespace stratfact

#endif  // STRATFACT_REPORT_HPP
