// Command-line front end: stratified assignment, analysis of observed
// experiments, and the replication study, all with JSON/CSV artifacts.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stratfact/dataset.hpp"
#include "stratfact/design.hpp"
#include "stratfact/estimators.hpp"
#include "stratfact/inference.hpp"
#include "stratfact/report.hpp"
#include "stratfact/simulation.hpp"

namespace {

using nlohmann::json;
using namespace stratfact;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open input file '" + path + "'");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output file '" + path + "'");
  return out;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out = open_output(path);
  out << j.dump(2) << "\n";
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    size_t b = 0;
    while (b < field.size() && field[b] == ' ') ++b;
    out.push_back(field.substr(b));
  }
  return out;
}

AssignmentPlan read_plan(const std::string& path, uint64_t seed) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("strata csv: missing header");
  const auto header = split_fields(line);
  if (header.size() < 4 || header[0] != "stratum_id" || header[1] != "n")
    throw ValidationError("strata csv: expected header stratum_id,n,n_arm1..n_armQ");
  const int q = static_cast<int>(header.size()) - 2;
  for (int a = 0; a < q; ++a)
    if (header[a + 2] != "n_arm" + std::to_string(a + 1))
      throw ValidationError("strata csv: expected column n_arm" + std::to_string(a + 1) +
                            ", got '" + header[a + 2] + "'");
  AssignmentPlan plan;
  plan.seed = seed;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ValidationError("strata csv row " + std::to_string(row) + ": wrong field count");
    StratumPlan s;
    s.id = fields[0];
    try {
      s.size = std::stoi(fields[1]);
      for (int a = 0; a < q; ++a) s.arm_counts.push_back(std::stoi(fields[a + 2]));
    } catch (...) {
      throw ValidationError("strata csv row " + std::to_string(row) + ": non-numeric count");
    }
    plan.strata.push_back(std::move(s));
  }
  validate_plan(plan);
  return plan;
}

int run_assign(const std::string& strata_path, uint64_t seed, const std::string& out_path) {
  const AssignmentPlan plan = read_plan(strata_path, seed);
  const std::vector<int> arms = assign_treatments(plan);
  std::ofstream out = open_output(out_path);
  out << "unit_id,stratum_id,arm\n";
  size_t unit = 0;
  for (const auto& s : plan.strata)
    for (int i = 0; i < s.size; ++i, ++unit)
      out << unit + 1 << "," << s.id << "," << arms[unit] << "\n";
  return 0;
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> methods;
  for (const auto& name : names) {
    const auto m = method_from_name(name);
    if (!m)
      throw ValidationError("unknown method '" + name + "' (expected unadj, adj, cond or inter)");
    methods.push_back(*m);
  }
  if (methods.empty()) methods.push_back(Method::unadj);
  return methods;
}

int run_analyze(const std::string& data_path, int k, const std::vector<std::string>& method_names,
                double alpha, const std::string& out_path) {
  const FactorialDesign design = build_design(k);
  std::ifstream in = open_input(data_path);
  const ObservedDataset data = ingest_csv(in, CsvSchema{}, design);
  const StratumSummaries summ = summarize(data);
  const std::vector<Method> methods = parse_methods(method_names);

  json results;
  for (Method m : methods) results[method_name(m)] = method_result_json(summ, design, m, alpha);

  json out;
  out["config"] = {{"command", "analyze"}, {"data", data_path},   {"k", k},
                   {"methods", method_names}, {"alpha", alpha},   {"out", out_path}};
  out["results"] = std::move(results);
  write_json(out_path, out);
  return 0;
}

int run_region(const std::string& data_path, int k, const std::string& method_name_arg,
               double alpha, const std::string& out_path, const std::string& point_arg) {
  const FactorialDesign design = build_design(k);
  std::ifstream in = open_input(data_path);
  const ObservedDataset data = ingest_csv(in, CsvSchema{}, design);
  const StratumSummaries summ = summarize(data);
  const auto method = method_from_name(method_name_arg);
  if (!method) throw ValidationError("unknown method '" + method_name_arg + "'");

  const EffectEstimate est = estimate(summ, design, *method);
  const WaldRegion region = wald_region(est, alpha);

  json out;
  out["config"] = {{"command", "region"}, {"data", data_path},  {"k", k},
                   {"method", method_name_arg}, {"alpha", alpha}, {"out", out_path}};
  out["method"] = method_name_arg;
  out["tau_hat"] = est.tau_hat;
  out["region"] = region_json(region);
  if (!point_arg.empty()) {
    Vector point;
    std::stringstream ss(point_arg);
    std::string field;
    while (std::getline(ss, field, ',')) point.push_back(std::stod(field));
    if (static_cast<int>(point.size()) != est.f)
      throw ValidationError("--point needs " + std::to_string(est.f) + " comma-separated values");
    out["point"] = {{"values", point},
                    {"quadratic_form", region.quadratic_form(point)},
                    {"inside", region.contains(point)}};
  }
  write_json(out_path, out);
  return 0;
}

int run_simulate(int case_id, int reps, uint64_t seed, std::optional<int> m,
                 std::optional<int> nm, double alpha, const std::string& out_path,
                 const std::string& draws_path) {
  const FactorialDesign design = build_design(2);
  const PotentialPopulation pop = generate_scenario(case_id, seed, m, nm);
  const std::vector<Method> methods = {Method::unadj, Method::adj, Method::cond, Method::inter};

  MonteCarloOptions options;
  std::ofstream draws;
  if (!draws_path.empty()) {
    draws = open_output(draws_path);
    options.draws = &draws;
  }
  const MetricsTable table = run_monte_carlo(pop, design, methods, reps, alpha, seed, options);

  json out;
  out["config"] = {{"command", "simulate"},
                   {"case", case_id},
                   {"reps", reps},
                   {"seed", seed},
                   {"m", m ? json(*m) : json(nullptr)},
                   {"nm", nm ? json(*nm) : json(nullptr)},
                   {"alpha", alpha},
                   {"out", out_path},
                   {"emit_draws", draws_path.empty() ? json(nullptr) : json(draws_path)}};
  out["metrics"] = metrics_json(table);
  write_json(out_path, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"randomization-based design and analysis of stratified 2^K factorial experiments"};
  app.require_subcommand(1);

  auto* assign = app.add_subcommand("assign", "draw a stratified random assignment");
  std::string strata_path, out_path;
  uint64_t seed = 0;
  assign->add_option("--strata", strata_path, "strata csv (stratum_id,n,n_arm1..n_armQ)")
      ->required();
  assign->add_option("--seed", seed, "random seed")->required();
  assign->add_option("--out", out_path, "output csv (unit_id,stratum_id,arm)")->required();

  auto* analyze = app.add_subcommand("analyze", "estimate factorial effects from observed data");
  std::string data_path, analyze_out;
  int k = 1;
  double alpha = 0.05;
  std::vector<std::string> method_names;
  analyze->add_option("--data", data_path, "data csv (stratum,arm,y,covariates...)")->required();
  analyze->add_option("--k", k, "number of factors")->required();
  analyze->add_option("--method", method_names, "methods: unadj, adj, cond, inter")
      ->delimiter(',');
  analyze->add_option("--alpha", alpha, "level for intervals/regions (default 0.05)");
  analyze->add_option("--out", analyze_out, "output json")->required();

  auto* region = app.add_subcommand("region", "joint confidence region for the effects");
  std::string region_data, region_out, region_method = "unadj", point_arg;
  int region_k = 1;
  double region_alpha = 0.05;
  region->add_option("--data", region_data, "data csv")->required();
  region->add_option("--k", region_k, "number of factors")->required();
  region->add_option("--method", region_method, "method: unadj, adj, cond, inter");
  region->add_option("--alpha", region_alpha, "level (default 0.05)");
  region->add_option("--point", point_arg, "comma-separated effect vector to test");
  region->add_option("--out", region_out, "output json")->required();

  auto* simulate = app.add_subcommand("simulate", "replication study on a generated population");
  int case_id = 1, reps = 10000;
  uint64_t sim_seed = 0;
  int m_opt = -1, nm_opt = -1;
  double sim_alpha = 0.05;
  std::string sim_out, draws_path;
  simulate->add_option("--case", case_id, "scenario case, 1..4")->required();
  simulate->add_option("--reps", reps, "replication count");
  simulate->add_option("--seed", sim_seed, "master seed")->required();
  simulate->add_option("--m", m_opt, "override the number of strata");
  simulate->add_option("--nm", nm_opt, "override the stratum size");
  simulate->add_option("--alpha", sim_alpha, "level (default 0.05)");
  simulate->add_option("--out", sim_out, "output json")->required();
  simulate->add_option("--emit-draws", draws_path, "per-replication estimates csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << nlohmann::json{{"error", {{"type", "validation"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 2;
  }

  try {
    if (*assign) return run_assign(strata_path, seed, out_path);
    if (*analyze) return run_analyze(data_path, k, method_names, alpha, analyze_out);
    if (*region)
      return run_region(region_data, region_k, region_method, region_alpha, region_out, point_arg);
    if (*simulate)
      return run_simulate(case_id, reps, sim_seed,
                          m_opt > 0 ? std::optional<int>(m_opt) : std::nullopt,
                          nm_opt > 0 ? std::optional<int>(nm_opt) : std::nullopt, sim_alpha,
                          sim_out, draws_path);
  } catch (const stratfact::SingularityError& e) {
    std::cerr << nlohmann::json{{"error",
                                 {{"type", "singularity"},
                                  {"message", e.what()},
                                  {"pivot", e.pivot()}}}}
                     .dump()
              << "\n";
    return 3;
  } catch (const stratfact::ValidationError& e) {
    std::cerr << nlohmann::json{{"error", {{"type", "validation"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"type", "internal"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }
  return 0;
}
