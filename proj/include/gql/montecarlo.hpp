#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gql/pilot.hpp"
#include "gql/simgen.hpp"
#include "gql/tuning.hpp"

namespace gql {

struct ReplicationOutcome {
  FitMethod method = FitMethod::quantile;
  Index nonzero_identified = 0;  // of the 4 signal groups
  Index zero_identified = 0;     // of the p-4 null groups
  std::vector<Index> selected;
  double lambda = 0.0;
  bool converged = false;
};

/// Per-method defaults for replication runs. The pilot gamma, grid shape and
/// solver tolerances are fixed here so every scenario cell runs the same
/// protocol.
struct HarnessOptions {
  double gamma = 1.0;
  Index grid_count = 50;
  double grid_min_ratio = 1e-3;
  SmoothOptions pilot;
  SelectOptions select;

  HarnessOptions() {
    select.admm.primal_tol = 1e-6;
    select.admm.dual_tol = 1e-6;
    select.admm.max_iter = 20000;
  }
};

inline ReplicationOutcome run_replication(const ScenarioSpec& scenario, FitMethod method,
                                          std::uint64_t rep_index,
                                          const HarnessOptions& opts = {}) {
  scenario.validate();
  const ScenarioData data = gen_scenario_data(scenario, rep_index);
  const Index p = scenario.p;

  std::vector<double> weights;
  double lmax = 0.0;
  if (method == FitMethod::quantile) {
    const PilotFit pilot = fit_quantile(data.design, data.response, scenario.tau, opts.pilot);
    weights = compute_weights(pilot.coefficients, opts.gamma,
                              default_weight_floor(pilot.coefficients));
    lmax = lambda_max(data.design, data.response, scenario.tau, weights);
  } else {
    Vector ols = data.design.matrix().colPivHouseholderQr().solve(data.response);
    GroupedCoefficients pilot(std::move(ols), data.design.partition());
    weights = compute_weights(pilot, opts.gamma, default_weight_floor(pilot));
    lmax = lambda_max_ls(data.design, data.response, weights);
  }
  lmax = std::max(lmax, 1e-12);

  const LambdaGrid grid = build_grid(lmax, opts.grid_count, opts.grid_min_ratio);
  PenaltySpec tmpl(0.0, opts.gamma, weights);
  const SelectionResult sel = select_lambda(data.design, data.response, scenario.tau, grid,
                                            method, tmpl, opts.select);
  const PenalizedFit& best = sel.fits[static_cast<std::size_t>(sel.best_index)];

  ReplicationOutcome out;
  out.method = method;
  out.selected = best.active_set;
  out.lambda = sel.best_lambda;
  out.converged = best.converged;
  for (Index j : best.active_set)
    if (j < ScenarioSpec::kTrueGroups) ++out.nonzero_identified;
  Index null_selected = 0;
  for (Index j : best.active_set)
    if (j >= ScenarioSpec::kTrueGroups) ++null_selected;
  out.zero_identified = (p - ScenarioSpec::kTrueGroups) - null_selected;
  return out;
}

/// min / Q1 / median / mean / Q3 / max with nearest-rank (type 1) quartiles.
struct CountStats {
  double min = 0.0, q1 = 0.0, median = 0.0, mean = 0.0, q3 = 0.0, max = 0.0;

  bool operator==(const CountStats& o) const {
    return min == o.min && q1 == o.q1 && median == o.median && mean == o.mean &&
           q3 == o.q3 && max == o.max;
  }
};

inline CountStats count_stats(std::vector<Index> counts) {
  CountStats s;
  if (counts.empty()) return s;
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  auto rank = [&](double q) {
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(n)));
    return static_cast<double>(counts[std::max<std::size_t>(k, 1) - 1]);
  };
  long long total = 0;
  for (Index c : counts) total += c;
  s.min = static_cast<double>(counts.front());
  s.max = static_cast<double>(counts.back());
  s.q1 = rank(0.25);
  s.median = rank(0.5);
  s.q3 = rank(0.75);
  s.mean = static_cast<double>(total) / static_cast<double>(n);
  return s;
}

struct MethodSummary {
  CountStats nonzero;
  CountStats zero;
  Index unconverged = 0;

  bool operator==(const MethodSummary& o) const {
    return nonzero == o.nonzero && zero == o.zero && unconverged == o.unconverged;
  }
};

struct SelectionSummary {
  Index n = 0;
  Index p = 0;
  std::string error_law;
  double tau = 0.5;
  std::uint64_t seed = 0;
  Index reps = 0;
  std::map<std::string, MethodSummary> methods;  // keyed by method_name()

  bool operator==(const SelectionSummary& o) const {
    return n == o.n && p == o.p && error_law == o.error_law && tau == o.tau &&
           seed == o.seed && reps == o.reps && methods == o.methods;
  }
};

/// Runs `reps` replications per method over a worker pool (streams are
/// per-replication, so the aggregate is identical serial or parallel) and
/// folds the outcomes in replication order.
inline SelectionSummary run_scenario(const ScenarioSpec& scenario,
                                     const std::vector<FitMethod>& methods, Index reps,
                                     const HarnessOptions& opts = {}, unsigned threads = 0,
                                     std::vector<ReplicationOutcome>* outcomes_out = nullptr) {
  scenario.validate();
  require(reps >= 1, "at least one replication required");
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

  struct Task {
    FitMethod method;
    std::uint64_t rep;
  };
  std::vector<Task> tasks;
  for (FitMethod m : methods)
    for (Index r = 0; r < reps; ++r) tasks.push_back({m, static_cast<std::uint64_t>(r)});

  std::vector<ReplicationOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= tasks.size()) return;
      try {
        outcomes[k] = run_replication(scenario, tasks[k].method, tasks[k].rep, opts);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (threads <= 1 || tasks.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  SelectionSummary summary;
  summary.n = scenario.n;
  summary.p = scenario.p;
  summary.error_law = scenario.error.name();
  summary.tau = scenario.tau;
  summary.seed = scenario.seed;
  summary.reps = reps;
  std::size_t at = 0;
  for (FitMethod m : methods) {
    std::vector<Index> nz, zero;
    Index unconverged = 0;
    for (Index r = 0; r < reps; ++r, ++at) {
      const ReplicationOutcome& o = outcomes[at];
      nz.push_back(o.nonzero_identified);
      zero.push_back(o.zero_identified);
      if (!o.converged) ++unconverged;
    }
    MethodSummary ms{count_stats(std::move(nz)), count_stats(std::move(zero)), unconverged};
    summary.methods[method_name(m)] = ms;
  }
  if (outcomes_out) *outcomes_out = std::move(outcomes);
  return summary;
}

// ---- report serialization ----

inline void to_json(nlohmann::json& j, const CountStats& s) {
  j = {{"min", s.min}, {"q1", s.q1},     {"median", s.median},
       {"mean", s.mean}, {"q3", s.q3},   {"max", s.max}};
}

inline void from_json(const nlohmann::json& j, CountStats& s) {
  j.at("min").get_to(s.min);
  j.at("q1").get_to(s.q1);
  j.at("median").get_to(s.median);
  j.at("mean").get_to(s.mean);
  j.at("q3").get_to(s.q3);
  j.at("max").get_to(s.max);
}

inline void to_json(nlohmann::json& j, const MethodSummary& m) {
  j = {{"nonzero", m.nonzero}, {"zero", m.zero}, {"unconverged", m.unconverged}};
}

inline void from_json(const nlohmann::json& j, MethodSummary& m) {
  j.at("nonzero").get_to(m.nonzero);
  j.at("zero").get_to(m.zero);
  j.at("unconverged").get_to(m.unconverged);
}

inline void to_json(nlohmann::json& j, const SelectionSummary& s) {
  j = {{"n", s.n},     {"p", s.p},       {"error", s.error_law}, {"tau", s.tau},
       {"seed", s.seed}, {"reps", s.reps}, {"methods", s.methods}};
}

inline void from_json(const nlohmann::json& j, SelectionSummary& s) {
  j.at("n").get_to(s.n);
  j.at("p").get_to(s.p);
  j.at("error").get_to(s.error_law);
  j.at("tau").get_to(s.tau);
  j.at("seed").get_to(s.seed);
  j.at("reps").get_to(s.reps);
  j.at("methods").get_to(s.methods);
}

namespace detail {

inline std::string fmt_stat(double v) {
  std::ostringstream os;
  if (v == std::floor(v))
    os << static_cast<long long>(v);
  else
    os << v;
  return os.str();
}

inline std::string fmt_mean(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << v;
  return os.str();
}

}  // namespace detail

struct Table1Report {
  nlohmann::json json;
  std::string markdown;
};

/// Renders the selection summaries in the layout of the published table:
/// one row per scenario cell, LS and Q side by side for each statistic of the
/// nonzero- and zero-group counts, with the true zero-group count between.
inline Table1Report table1_report(const std::vector<SelectionSummary>& summaries) {
  require(!summaries.empty(), "report needs at least one summary");
  Table1Report rep;
  rep.json = {{"quartile_definition", "nearest-rank (type 1)"},
              {"scenarios", summaries}};

  std::ostringstream md;
  md << "# Group selection summary\n\n";
  md << "Counts of correctly identified signal groups (of 4) and null groups"
        " (of p-4), LS / Q side by side. Quartiles use the nearest-rank"
        " (type 1) definition; means are shown to one decimal.\n\n";
  const char* stats[] = {"min", "Q1", "Q2", "mean", "Q3", "max"};
  md << "| n | p | eps |";
  for (const char* st : stats) md << " nz " << st << " LS | nz " << st << " Q |";
  md << " true |";
  for (const char* st : stats) md << " z " << st << " LS | z " << st << " Q |";
  md << " unconv LS | unconv Q |\n";
  const int ncols = 3 + 12 + 1 + 12 + 2;
  md << "|";
  for (int c = 0; c < ncols; ++c) md << "---|";
  md << "\n";

  for (const SelectionSummary& s : summaries) {
    auto cell = [&](const std::string& method, bool zero_side, int stat) -> std::string {
      auto it = s.methods.find(method);
      if (it == s.methods.end()) return "-";
      const CountStats& cs = zero_side ? it->second.zero : it->second.nonzero;
      switch (stat) {
        case 0: return detail::fmt_stat(cs.min);
        case 1: return detail::fmt_stat(cs.q1);
        case 2: return detail::fmt_stat(cs.median);
        case 3: return detail::fmt_mean(cs.mean);
        case 4: return detail::fmt_stat(cs.q3);
        default: return detail::fmt_stat(cs.max);
      }
    };
    auto unconv = [&](const std::string& method) -> std::string {
      auto it = s.methods.find(method);
      if (it == s.methods.end()) return "-";
      return std::to_string(it->second.unconverged);
    };
    const std::string eps = s.error_law == "normal" ? "N" : (s.error_law == "cauchy" ? "C" : s.error_law);
    md << "| " << s.n << " | " << s.p << " | " << eps << " |";
    for (int st = 0; st < 6; ++st)
      md << " " << cell("ag_LASSO_LS", false, st) << " | " << cell("ag_LASSO_Q", false, st)
         << " |";
    md << " " << (s.p - ScenarioSpec::kTrueGroups) << " |";
    for (int st = 0; st < 6; ++st)
      md << " " << cell("ag_LASSO_LS", true, st) << " | " << cell("ag_LASSO_Q", true, st)
         << " |";
    md << " " << unconv("ag_LASSO_LS") << " | " << unconv("ag_LASSO_Q") << " |\n";
  }
  rep.markdown = md.str();
  return rep;
}

/// The scenario cells of the simulation study, both error laws each.
inline std::vector<ScenarioSpec> default_scenarios(std::uint64_t seed) {
  const std::pair<Index, Index> cells[] = {{30, 5},   {60, 5},   {60, 10},  {100, 10},
                                           {200, 10}, {400, 15}, {1000, 25}, {1000, 100}};
  std::vector<ScenarioSpec> out;
  for (const auto& [n, p] : cells)
    for (ErrorLaw law : {ErrorLaw::normal(), ErrorLaw::cauchy()}) {
      ScenarioSpec s;
      s.n = n;
      s.p = p;
      s.error = law;
      s.seed = seed;
      out.push_back(s);
    }
  return out;
}

}  // namespace gql
