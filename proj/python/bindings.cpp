#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stratfact/dataset.hpp"
#include "stratfact/design.hpp"
#include "stratfact/estimators.hpp"
#include "stratfact/report.hpp"
#include "stratfact/simulation.hpp"

namespace py = pybind11;
using namespace stratfact;

namespace {

py::object json_to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null: return py::none();
    case nlohmann::json::value_t::boolean: return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer: return py::int_(j.get<long long>());
    case nlohmann::json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
    case nlohmann::json::value_t::number_float: return py::float_(j.get<double>());
    case nlohmann::json::value_t::string: return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    case nlohmann::json::value_t::object: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it)
        out[py::str(it.key())] = json_to_py(it.value());
      return out;
    }
    default: return py::none();
  }
}

std::vector<Method> to_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& name : names) {
    const auto m = method_from_name(name);
    if (!m) throw ValidationError("unknown method '" + name + "'");
    out.push_back(*m);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_stratfact, m) {
  m.doc() = "randomization-based analysis of stratified 2^K factorial experiments";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<SingularityError>(m, "SingularityError", PyExc_ArithmeticError);

  py::class_<FactorialDesign>(m, "Design")
      .def_property_readonly("k", &FactorialDesign::k)
      .def_property_readonly("q", &FactorialDesign::q)
      .def_property_readonly("f", &FactorialDesign::f)
      .def_property_readonly("effect_labels",
                             [](const FactorialDesign& d) { return d.effect_labels(); })
      .def_property_readonly("g",
                             [](const FactorialDesign& d) {
                               std::vector<std::vector<int>> rows(d.f(),
                                                                  std::vector<int>(d.q()));
                               for (int f = 0; f < d.f(); ++f)
                                 for (int a = 0; a < d.q(); ++a) rows[f][a] = d.sign(f, a);
                               return rows;
                             })
      .def("__repr__", [](const FactorialDesign& d) {
        std::ostringstream s;
        s << "Design(k=" << d.k() << ", q=" << d.q() << ", f=" << d.f() << ")";
        return s.str();
      });

  m.def("build_design", &build_design, py::arg("k"),
        "Contrast structure of a 2^k factorial experiment.");

  m.def(
      "assign",
      [](const std::vector<std::string>& stratum_ids, const std::vector<std::vector<int>>& counts,
         uint64_t seed) {
        if (stratum_ids.size() != counts.size())
          throw ValidationError("stratum_ids and counts must have the same length");
        AssignmentPlan plan;
        plan.seed = seed;
        for (size_t s = 0; s < counts.size(); ++s) {
          int size = 0;
          for (int c : counts[s]) size += c;
          plan.strata.push_back({stratum_ids[s], size, counts[s]});
        }
        return assign_treatments(plan);
      },
      py::arg("stratum_ids"), py::arg("counts"), py::arg("seed"),
      "Stratified random assignment; returns one 1-based arm per unit, "
      "stratum blocks in order.");

  m.def(
      "analyze",
      [](const std::vector<std::string>& stratum, const std::vector<int>& arm,
         const std::vector<double>& y, const std::vector<std::vector<double>>& x, int k,
         const std::vector<std::string>& methods, double alpha) {
        const FactorialDesign design = build_design(k);
        const int n = static_cast<int>(y.size());
        const int p = x.empty() ? 0 : static_cast<int>(x.front().size());
        Matrix xm(n, p);
        if (!x.empty()) {
          if (static_cast<int>(x.size()) != n)
            throw ValidationError("x must have one row per unit");
          for (int i = 0; i < n; ++i) {
            if (static_cast<int>(x[i].size()) != p)
              throw ValidationError("x rows must have equal length");
            for (int j = 0; j < p; ++j) xm(i, j) = x[i][j];
          }
        }
        const ObservedDataset data = make_dataset(design, stratum, arm, y, std::move(xm));
        const StratumSummaries summ = summarize(data);
        nlohmann::json results;
        for (Method method : to_methods(methods))
          results[method_name(method)] = method_result_json(summ, design, method, alpha);
        return json_to_py(results);
      },
      py::arg("stratum"), py::arg("arm"), py::arg("y"),
      py::arg("x") = std::vector<std::vector<double>>{}, py::arg("k") = 1,
      py::arg("methods") = std::vector<std::string>{"unadj"}, py::arg("alpha") = 0.05,
      "Estimate factorial effects from observed units; returns one result "
      "dict per requested method.");

  m.def(
      "simulate",
      [](int case_id, int reps, uint64_t seed, std::optional<int> m_override,
         std::optional<int> nm_override, double alpha, int threads) {
        const FactorialDesign design = build_design(2);
        const PotentialPopulation pop = generate_scenario(case_id, seed, m_override, nm_override);
        MonteCarloOptions options;
        options.threads = threads;
        const MetricsTable table =
            run_monte_carlo(pop, design,
                            {Method::unadj, Method::adj, Method::cond, Method::inter}, reps,
                            alpha, seed, options);
        return json_to_py(metrics_json(table));
      },
      py::arg("case_id"), py::arg("reps"), py::arg("seed"), py::arg("m") = std::nullopt,
      py::arg("nm") = std::nullopt, py::arg("alpha") = 0.05, py::arg("threads") = 0,
      "Replication study on a generated scenario; returns the metrics table "
      "as a dict.");

  m.def("chi2_quantile", &chi2_quantile, py::arg("df"), py::arg("prob"));
  m.def("normal_quantile", &normal_quantile, py::arg("prob"));
}
