// Command-line front end: fit penalized quantile / least-squares models on
// CSV data, check KKT optimality of stored fits, generate synthetic
// scenarios, and run the replicated selection study.
//
// Exit codes: 0 success, 1 input error, 2 solver did not converge,
// 3 KKT check failed.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "gql/gql.hpp"

namespace fs = std::filesystem;
using namespace gql;

namespace {

unsigned resolve_threads(unsigned cli_threads) {
  if (cli_threads > 0) return cli_threads;
  if (const char* env = std::getenv("GQL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<FitMethod> parse_methods(const std::string& spec) {
  if (spec == "both") return {FitMethod::least_squares, FitMethod::quantile};
  if (spec == "q") return {FitMethod::quantile};
  if (spec == "ls") return {FitMethod::least_squares};
  throw std::invalid_argument("--method must be one of q, ls, both");
}

struct FitArgs {
  std::string data_path, groups_path;
  std::string lambda = "auto";
  double tau = 0.5;
  double gamma = 1.0;
  std::string method = "q";
  Index grid_count = 50;
  double grid_min_ratio = 1e-3;
  double tol = 1e-7;
  std::string out_dir = ".";
  bool trace = false;
};

int cmd_fit(const FitArgs& a) {
  const Dataset data = read_dataset_csv(a.data_path);
  const GroupPartition part = read_groups_json(a.groups_path);
  const GroupedDesign design = dataset_design(data, part);
  check_tau(a.tau);

  const FitMethod method = a.method == "ls" ? FitMethod::least_squares : FitMethod::quantile;

  // Pilot and adaptive weights: exact LP when the oracle cap allows it for
  // the quantile method, OLS for the least-squares comparator.
  GroupedCoefficients pilot_coef = GroupedCoefficients::zero(part);
  double pilot_objective = 0.0;
  if (method == FitMethod::quantile) {
    PilotFit pilot = design.rows() <= 500 ? fit_quantile_lp(design, data.y, a.tau)
                                          : fit_quantile(design, data.y, a.tau);
    pilot_objective = pilot.objective;
    pilot_coef = std::move(pilot.coefficients);
  } else {
    Vector ols = design.matrix().colPivHouseholderQr().solve(data.y);
    pilot_coef = GroupedCoefficients(std::move(ols), part);
    pilot_objective = 0.5 * (data.y - design.matrix() * pilot_coef.values()).squaredNorm() /
                      static_cast<double>(design.rows());
  }
  const std::vector<double> weights =
      compute_weights(pilot_coef, a.gamma, default_weight_floor(pilot_coef));

  AdmmOptions admm;
  admm.primal_tol = admm.dual_tol = a.tol;
  BcdOptions bcd;
  bcd.tol = std::min(1e-10, a.tol);

  PenalizedFit fit{GroupedCoefficients::zero(part), {}, 0, 0, 0, 0, false, {}};
  double chosen_lambda = 0.0;
  if (a.lambda == "auto") {
    const double lmax = std::max(method == FitMethod::quantile
                                     ? lambda_max(design, data.y, a.tau, weights)
                                     : lambda_max_ls(design, data.y, weights),
                                 1e-12);
    const LambdaGrid grid = build_grid(lmax, a.grid_count, a.grid_min_ratio);
    SelectOptions sopts;
    sopts.admm = admm;
    sopts.bcd = bcd;
    SelectionResult sel =
        select_lambda(design, data.y, a.tau, grid, method, PenaltySpec(0.0, a.gamma, weights),
                      sopts);
    if (a.trace)
      write_selection_trace_csv((fs::path(a.out_dir) / "trace.csv").string(), grid, sel);
    chosen_lambda = sel.best_lambda;
    fit = std::move(sel.fits[static_cast<std::size_t>(sel.best_index)]);
  } else {
    chosen_lambda = std::stod(a.lambda);
    require(chosen_lambda >= 0.0, "--lambda must be nonnegative or 'auto'");
    const PenaltySpec pen(chosen_lambda, a.gamma, weights);
    fit = method == FitMethod::quantile ? fit_ag_lasso_q(design, data.y, a.tau, pen, admm)
                                        : fit_ag_lasso_ls(design, data.y, pen, bcd);
  }

  FitFile out;
  out.group_sizes = part.sizes();
  out.coefficients = fit.coefficients.values();
  out.active_set = fit.active_set;
  out.objective = fit.objective;
  out.kkt_residual = fit.kkt_residual;
  out.lambda = chosen_lambda;
  out.gamma = a.gamma;
  out.weights = weights;
  out.tau = a.tau;
  out.method = method_name(method);
  out.converged = fit.converged;
  out.iterations = fit.iterations;
  fs::create_directories(a.out_dir);
  write_fit_json((fs::path(a.out_dir) / "fit.json").string(), out);

  std::cout << "lambda=" << chosen_lambda << " objective=" << fit.objective
            << " active_groups=" << fit.active_set.size()
            << " pilot_objective=" << pilot_objective
            << " converged=" << (fit.converged ? "yes" : "no") << "\n";
  return fit.converged ? 0 : 2;
}

int cmd_kkt(const std::string& data_path, const std::string& groups_path,
            const std::string& fit_path, double tol) {
  const Dataset data = read_dataset_csv(data_path);
  const GroupPartition part = read_groups_json(groups_path);
  const GroupedDesign design = dataset_design(data, part);
  const FitFile ff = read_fit_json(fit_path);
  if (ff.group_sizes != part.sizes())
    throw std::invalid_argument("group sizes in " + fit_path + " do not match " + groups_path);
  if (ff.coefficients.size() != part.dims())
    throw std::invalid_argument("coefficient length in " + fit_path +
                                " does not match the partition");

  PenalizedFit fit{GroupedCoefficients(ff.coefficients, part), ff.active_set, ff.objective,
                   ff.kkt_residual, ff.lambda, ff.iterations, ff.converged, {}};
  const PenaltySpec penalty(ff.lambda, ff.gamma, ff.weights);
  const KktReport report = kkt_check(design, data.y, fit, ff.tau, penalty, tol);

  std::cout << "group  active  residual\n";
  for (std::size_t j = 0; j < report.group_residuals.size(); ++j)
    std::cout << std::left << std::setw(7) << j << std::setw(8)
              << (report.group_active[j] ? "yes" : "no") << std::scientific
              << std::setprecision(3) << report.group_residuals[j] << "\n"
              << std::defaultfloat;
  std::cout << "overall=" << std::scientific << std::setprecision(3) << report.overall
            << std::defaultfloat << " interpolated=" << report.interpolated_points
            << " tol=" << tol << " => " << (report.passed ? "PASS" : "FAIL") << "\n";
  return report.passed ? 0 : 3;
}

struct ReplicateArgs {
  std::string config_path;
  Index reps = 0;  // 0: take from config
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string methods = "both";
  unsigned threads = 0;
  std::string out_dir = ".";
  bool outcomes = false;
};

int cmd_replicate(const ReplicateArgs& a) {
  ScenarioConfig cfg = read_scenario_config(a.config_path);
  if (a.reps > 0) cfg.reps = a.reps;
  const std::vector<FitMethod> methods = parse_methods(a.methods);
  const unsigned threads = resolve_threads(a.threads);

  std::vector<SelectionSummary> summaries;
  std::vector<std::pair<ScenarioSpec, std::vector<ReplicationOutcome>>> all_outcomes;
  for (ScenarioSpec scenario : cfg.scenarios) {
    if (a.seed_set) scenario.seed = a.seed;
    const auto start = std::chrono::steady_clock::now();
    std::vector<ReplicationOutcome> outcomes;
    SelectionSummary s = run_scenario(scenario, methods, cfg.reps, HarnessOptions{}, threads,
                                      a.outcomes ? &outcomes : nullptr);
    summaries.push_back(std::move(s));
    if (a.outcomes) all_outcomes.emplace_back(scenario, std::move(outcomes));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "scenario n=" << scenario.n << " p=" << scenario.p
              << " error=" << scenario.error.name() << " reps=" << cfg.reps << " done ("
              << std::fixed << std::setprecision(1) << secs << "s)\n"
              << std::defaultfloat;
  }

  const Table1Report report = table1_report(summaries);
  fs::create_directories(a.out_dir);
  {
    std::ofstream js((fs::path(a.out_dir) / "summary.json").string());
    js << report.json.dump(2) << "\n";
  }
  {
    std::ofstream md((fs::path(a.out_dir) / "table1.md").string());
    md << report.markdown;
  }
  if (a.outcomes)
    write_outcomes_csv((fs::path(a.out_dir) / "outcomes.csv").string(), all_outcomes, cfg.reps);
  return 0;
}

int cmd_gen(const std::string& config_path, const std::string& out_dir, std::uint64_t rep) {
  const ScenarioConfig cfg = read_scenario_config(config_path);
  fs::create_directories(out_dir);
  const bool single = cfg.scenarios.size() == 1;
  for (std::size_t i = 0; i < cfg.scenarios.size(); ++i) {
    const ScenarioSpec& s = cfg.scenarios[i];
    const ScenarioData data = gen_scenario_data(s, rep);
    const std::string stem = single ? "" : "scenario" + std::to_string(i) + "_";
    write_dataset_csv((fs::path(out_dir) / (stem + "data.csv")).string(), data.response,
                      data.design.matrix());
    write_groups_json((fs::path(out_dir) / (stem + "groups.json")).string(),
                      data.design.partition());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive group LASSO quantile selection toolkit"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "fit a penalized model on CSV data");
  fit->add_option("data", fit_args.data_path, "dataset CSV (first column y)")->required();
  fit->add_option("groups", fit_args.groups_path, "group sizes JSON")->required();
  fit->add_option("--tau", fit_args.tau, "quantile level");
  fit->add_option("--lambda", fit_args.lambda, "penalty level or 'auto'");
  fit->add_option("--gamma", fit_args.gamma, "adaptive weight exponent");
  fit->add_option("--method", fit_args.method, "q or ls")
      ->check(CLI::IsMember({"q", "ls"}));
  fit->add_option("--grid-count", fit_args.grid_count, "lambda grid size");
  fit->add_option("--grid-min-ratio", fit_args.grid_min_ratio, "smallest lambda / lambda_max");
  fit->add_option("--tol", fit_args.tol, "solver tolerance");
  fit->add_option("--out-dir", fit_args.out_dir, "output directory");
  fit->add_flag("--trace", fit_args.trace, "write the selection trace CSV");

  std::string kkt_data, kkt_groups, kkt_fit;
  double kkt_tol = 1e-4;
  auto* kkt = app.add_subcommand("kkt", "check optimality of a stored fit");
  kkt->add_option("data", kkt_data, "dataset CSV")->required();
  kkt->add_option("groups", kkt_groups, "group sizes JSON")->required();
  kkt->add_option("fit", kkt_fit, "fit JSON")->required();
  kkt->add_option("--tol", kkt_tol, "pass threshold on the scaled residual");

  ReplicateArgs rep_args;
  auto* rep = app.add_subcommand("replicate-table1", "run the replicated selection study");
  rep->add_option("config", rep_args.config_path, "scenario config JSON")->required();
  rep->add_option("--reps", rep_args.reps, "replications per scenario");
  rep->add_option("--seed", rep_args.seed, "stream seed override")
      ->each([&](const std::string&) { rep_args.seed_set = true; });
  rep->add_option("--methods", rep_args.methods, "q, ls, or both")
      ->check(CLI::IsMember({"q", "ls", "both"}));
  rep->add_option("--threads", rep_args.threads, "worker threads (default: GQL_THREADS or all)");
  rep->add_option("--out-dir", rep_args.out_dir, "output directory");
  rep->add_flag("--outcomes", rep_args.outcomes, "also write per-replication outcomes.csv");

  std::string gen_config, gen_out = ".";
  std::uint64_t gen_rep = 0;
  auto* gen = app.add_subcommand("gen", "write synthetic datasets for a scenario config");
  gen->add_option("config", gen_config, "scenario config JSON")->required();
  gen->add_option("--out-dir", gen_out, "output directory");
  gen->add_option("--rep", gen_rep, "replication index to draw");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(fit_args);
    if (*kkt) return cmd_kkt(kkt_data, kkt_groups, kkt_fit, kkt_tol);
    if (*rep) return cmd_replicate(rep_args);
    if (*gen) return cmd_gen(gen_config, gen_out, gen_rep);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
