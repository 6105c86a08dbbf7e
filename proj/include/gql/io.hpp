#pragma once

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gql/montecarlo.hpp"
#include "gql/types.hpp"

namespace gql {

/// Input error carrying a file position for diagnostics.
struct ParseError : std::runtime_error {
  ParseError(const std::string& file, std::size_t line, std::size_t col,
             const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ":" + std::to_string(col) +
                           ": " + what),
        line_number(line),
        column(col) {}

  std::size_t line_number;
  std::size_t column;
};

struct Dataset {
  Vector y;
  Matrix X;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    // trim surrounding whitespace
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

/// Reads the dataset format: CSV with a header, first column `y`, remaining
/// columns the design entries in group order. NaN or infinite entries are
/// rejected with the offending position.
inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, 1, "empty file, expected a header");
  const auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "y")
    throw ParseError(path, 1, 1, "first header column must be 'y'");
  const std::size_t ncol = header.size();
  if (ncol < 2) throw ParseError(path, 1, 1, "expected at least one design column");

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != ncol)
      throw ParseError(path, lineno, 1,
                       "expected " + std::to_string(ncol) + " fields, got " +
                           std::to_string(fields.size()));
    std::vector<double> vals(ncol);
    for (std::size_t c = 0; c < ncol; ++c) {
      try {
        std::size_t used = 0;
        vals[c] = std::stod(fields[c], &used);
        if (used != fields[c].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError(path, lineno, c + 1, "not a number: '" + fields[c] + "'");
      }
      if (!std::isfinite(vals[c]))
        throw ParseError(path, lineno, c + 1, "non-finite value rejected");
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError(path, lineno, 1, "no data rows");

  Dataset d;
  d.y.resize(static_cast<Index>(rows.size()));
  d.X.resize(static_cast<Index>(rows.size()), static_cast<Index>(ncol - 1));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.y[static_cast<Index>(i)] = rows[i][0];
    for (std::size_t c = 1; c < ncol; ++c)
      d.X(static_cast<Index>(i), static_cast<Index>(c - 1)) = rows[i][c];
  }
  return d;
}

inline void write_dataset_csv(const std::string& path, const Vector& y, const Matrix& X) {
  require(y.size() == X.rows(), "response length must match design rows");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out.precision(17);
  out << "y";
  for (Index c = 0; c < X.cols(); ++c) out << ",x" << (c + 1);
  out << "\n";
  for (Index i = 0; i < y.size(); ++i) {
    out << y[i];
    for (Index c = 0; c < X.cols(); ++c) out << "," << X(i, c);
    out << "\n";
  }
}

/// Sidecar descriptor {"group_sizes": [d1, ..., dp]}.
inline GroupPartition read_groups_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open groups file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, 1, e.what());
  }
  if (!j.contains("group_sizes") || !j["group_sizes"].is_array())
    throw ParseError(path, 1, 1, "expected a 'group_sizes' array");
  std::vector<Index> sizes;
  for (const auto& v : j["group_sizes"]) {
    if (!v.is_number_integer() || v.get<long long>() < 1)
      throw ParseError(path, 1, 1, "group sizes must be positive integers");
    sizes.push_back(v.get<Index>());
  }
  return GroupPartition(std::move(sizes));
}

inline void write_groups_json(const std::string& path, const GroupPartition& part) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write groups file: " + path);
  nlohmann::json j{{"group_sizes", part.sizes()}};
  out << j.dump(2) << "\n";
}

inline GroupedDesign dataset_design(const Dataset& d, const GroupPartition& part) {
  if (d.X.cols() != part.dims())
    throw std::invalid_argument("group sizes sum to " + std::to_string(part.dims()) +
                                " but the dataset has " + std::to_string(d.X.cols()) +
                                " design columns");
  return GroupedDesign(d.X, part);
}

/// Serialized fit: everything needed to re-check optimality later.
struct FitFile {
  std::vector<Index> group_sizes;
  Vector coefficients;
  std::vector<Index> active_set;
  double objective = 0.0;
  double kkt_residual = 0.0;
  double lambda = 0.0;
  double gamma = 1.0;
  std::vector<double> weights;
  double tau = 0.5;
  std::string method = "ag_LASSO_Q";
  bool converged = false;
  Index iterations = 0;
};

inline void write_fit_json(const std::string& path, const FitFile& f) {
  nlohmann::json j;
  j["group_sizes"] = f.group_sizes;
  j["coefficients"] = std::vector<double>(f.coefficients.data(),
                                          f.coefficients.data() + f.coefficients.size());
  j["active_set"] = f.active_set;
  j["objective"] = f.objective;
  j["kkt_residual"] = f.kkt_residual;
  j["lambda"] = f.lambda;
  j["gamma"] = f.gamma;
  j["weights"] = f.weights;
  j["tau"] = f.tau;
  j["method"] = f.method;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write fit file: " + path);
  out << j.dump(2) << "\n";
}

inline FitFile read_fit_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fit file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, 1, e.what());
  }
  FitFile f;
  try {
    j.at("group_sizes").get_to(f.group_sizes);
    std::vector<double> coefs = j.at("coefficients").get<std::vector<double>>();
    f.coefficients = Eigen::Map<Vector>(coefs.data(), static_cast<Index>(coefs.size()));
    j.at("active_set").get_to(f.active_set);
    j.at("objective").get_to(f.objective);
    j.at("kkt_residual").get_to(f.kkt_residual);
    j.at("lambda").get_to(f.lambda);
    j.at("gamma").get_to(f.gamma);
    j.at("weights").get_to(f.weights);
    j.at("tau").get_to(f.tau);
    j.at("method").get_to(f.method);
    j.at("converged").get_to(f.converged);
    j.at("iterations").get_to(f.iterations);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, 1, e.what());
  }
  return f;
}

/// Scenario configuration: a single object, an array of objects, or
/// {"scenarios": [...]}; {"paper_default": true} expands to the built-in
/// scenario list. Fields: n, p, error {family, scale}, tau, seed, reps.
struct ScenarioConfig {
  std::vector<ScenarioSpec> scenarios;
  Index reps = 200;
};

inline ScenarioSpec scenario_from_json(const nlohmann::json& j, const std::string& path) {
  ScenarioSpec s;
  try {
    s.n = j.at("n").get<Index>();
    s.p = j.at("p").get<Index>();
    if (j.contains("error")) {
      const auto& e = j.at("error");
      const std::string family = e.value("family", "normal");
      const double scale = e.value("scale", 3.0);
      if (family == "normal")
        s.error = ErrorLaw::normal(scale);
      else if (family == "cauchy")
        s.error = ErrorLaw::cauchy(scale);
      else if (family == "none")
        s.error = ErrorLaw::none();
      else
        throw ParseError(path, 1, 1, "unknown error family: " + family);
    }
    s.tau = j.value("tau", 0.5);
    s.seed = j.value("seed", std::uint64_t{0});
    s.growth_exponent = j.value("c", 0.43);
    s.validate();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, 1, e.what());
  }
  return s;
}

inline ScenarioConfig read_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, 1, e.what());
  }
  ScenarioConfig cfg;
  if (j.is_object() && j.value("paper_default", false)) {
    cfg.scenarios = default_scenarios(j.value("seed", std::uint64_t{0}));
    cfg.reps = j.value("reps", Index{200});
    return cfg;
  }
  nlohmann::json list;
  if (j.is_array())
    list = j;
  else if (j.is_object() && j.contains("scenarios"))
    list = j["scenarios"];
  else
    list = nlohmann::json::array({j});
  if (j.is_object() && j.contains("reps")) cfg.reps = j["reps"].get<Index>();
  for (const auto& item : list) {
    ScenarioSpec s = scenario_from_json(item, path);
    cfg.scenarios.push_back(s);
    if (item.contains("reps")) cfg.reps = item["reps"].get<Index>();
  }
  if (cfg.scenarios.empty()) throw ParseError(path, 1, 1, "no scenarios in config");
  return cfg;
}

/// Selection trace rows: lambda, criterion, df, active groups.
inline void write_selection_trace_csv(const std::string& path, const LambdaGrid& grid,
                                      const SelectionResult& sel) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out.precision(17);
  out << "lambda,criterion,df,active_groups\n";
  for (std::size_t k = 0; k < grid.values.size(); ++k) {
    out << grid.values[k] << "," << sel.criteria[k] << "," << sel.dfs[k] << ",";
    const auto& act = sel.fits[k].active_set;
    for (std::size_t a = 0; a < act.size(); ++a) out << (a ? ";" : "") << act[a];
    out << "\n";
  }
}

inline void write_outcomes_csv(const std::string& path,
                               const std::vector<std::pair<ScenarioSpec,
                                                           std::vector<ReplicationOutcome>>>&
                                   per_scenario,
                               Index reps) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write outcomes file: " + path);
  out.precision(17);
  out << "n,p,error,method,rep,nonzero_identified,zero_identified,lambda,converged\n";
  for (const auto& [scenario, outcomes] : per_scenario) {
    std::size_t at = 0;
    for (std::size_t m = 0; m * static_cast<std::size_t>(reps) < outcomes.size(); ++m)
      for (Index r = 0; r < reps; ++r, ++at) {
        const ReplicationOutcome& o = outcomes[at];
        out << scenario.n << "," << scenario.p << "," << scenario.error.name() << ","
            << method_name(o.method) << "," << r << "," << o.nonzero_identified << ","
            << o.zero_identified << "," << o.lambda << "," << (o.converged ? 1 : 0) << "\n";
      }
  }
}

/// Per-group JSON rendering of a KKT report.
inline nlohmann::json kkt_report_json(const KktReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t j = 0; j < r.group_residuals.size(); ++j)
    groups.push_back({{"group", j},
                      {"active", static_cast<bool>(r.group_active[j])},
                      {"residual", r.group_residuals[j]}});
  return {{"groups", groups},
          {"overall", r.overall},
          {"interpolated_points", r.interpolated_points},
          {"tol", r.tol},
          {"passed", r.passed}};
}

}  // namespace gql
