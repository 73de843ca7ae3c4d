#include "stratfact/report.hpp"

namespace stratfact {

using nlohmann::json;

namespace {

json matrix_json(const SymMatrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.dim(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.dim(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

json region_json(const WaldRegion& region) {
  json out;
  out["threshold"] = region.threshold;
  out["precision"] = matrix_json(region.precision);
  out["log_volume"] = region.log_volume;
  if (region.area) out["area"] = *region.area;
  return out;
}

json method_result_json(const StratumSummaries& summ, const FactorialDesign& design,
                        Method method, double alpha) {
  const EffectEstimate est = estimate(summ, design, method);
  json out;
  out["method"] = method_name(method);
  out["K"] = est.k;
  out["F"] = est.f;
  out["n"] = est.n;
  out["M"] = est.m;
  out["alpha"] = alpha;
  out["tau_hat"] = est.tau_hat;

  json diagnostics;
  json below = json::array();
  for (const auto& [stratum, arm] : summ.cells_below(2))
    below.push_back({{"stratum", stratum}, {"arm", arm}});
  diagnostics["cells_below_min"] = std::move(below);

  if (est.vcov) {
    out["vcov"] = matrix_json(*est.vcov);
    const ConfidenceIntervals ci = wald_intervals(est, alpha);
    json intervals = json::array();
    for (const auto& i : ci.intervals)
      intervals.push_back({{"effect", i.effect}, {"label", i.label}, {"lo", i.lo}, {"hi", i.hi}});
    out["intervals"] = std::move(intervals);
    try {
      out["region"] = region_json(wald_region(est, alpha));
    } catch (const SingularityError& err) {
      out["region"] = nullptr;
      diagnostics["region_unavailable"] = err.what();
    }
  } else {
    out["vcov"] = nullptr;
    out["intervals"] = nullptr;
    out["region"] = nullptr;
    diagnostics["variance_unavailable"] =
        "some stratum-arm cell has a single unit; variance needs n_[m]q >= 2";
  }
  out["diagnostics"] = std::move(diagnostics);
  return out;
}

json metrics_json(const MetricsTable& table) {
  json out;
  out["case"] = table.case_id;
  out["reps"] = table.reps;
  out["alpha"] = table.alpha;
  out["seed"] = table.master_seed;
  out["K"] = table.k;
  out["F"] = table.f;
  out["n"] = table.n;
  out["M"] = table.m;
  out["true_tau"] = table.true_tau;
  out["effect_labels"] = table.effect_labels;

  json methods;
  for (const auto& mm : table.methods) {
    json block;
    block["applicable"] = mm.applicable;
    if (!mm.applicable) {
      block["reason"] = mm.reason;
    } else {
      json effects = json::array();
      const int f = static_cast<int>(mm.bias.size());
      for (int e = 0; e < f; ++e) {
        json row;
        row["effect"] = e + 1;
        row["label"] = table.effect_labels[e];
        row["bias"] = mm.bias[e];
        row["sd"] = mm.sd[e];
        row["rmse"] = mm.rmse[e];
        row["cp"] = mm.cp[e];
        row["ci_length"] = mm.ci_length[e];
        if (!mm.rmse_ratio.empty()) {
          row["rmse_ratio"] = mm.rmse_ratio[e];
          row["length_ratio"] = mm.length_ratio[e];
        }
        effects.push_back(std::move(row));
      }
      block["effects"] = std::move(effects);
      if (mm.region_area) block["region_area"] = *mm.region_area;
      if (mm.area_ratio) block["area_ratio"] = *mm.area_ratio;
    }
    methods[method_name(mm.method)] = std::move(block);
  }
  out["methods"] = std::move(methods);
  return out;
}

}  // namespace stratfact
