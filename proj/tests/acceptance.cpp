// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gql/gql.hpp"
#include "test_oracles.hpp"

using namespace gql;

namespace {

unsigned worker_count() {
  if (const char* env = std::getenv("GQL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(Index count, const std::function<void(Index)>& body) {
  const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(count));
  if (workers <= 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        const Index i = next.fetch_add(1);
        if (i >= count) return;
        body(i);
      }
    });
  for (auto& t : pool) t.join();
}

struct Criterion {
  bool pass;
  std::string detail;
};

// C1: penalized-solver objective vs a brute-force grid oracle on
// two-coefficient instances, solver <= grid minimum + 1e-5 across 50 seeded
// instances. The grid value itself sits 1e-5..3e-5 above the true minimum at
// step 1e-3 (measured), and the solver evaluates the true objective at a
// feasible point, so it can never be below the true minimum: the one-sided
// comparison is the sound reading of equivalence at this grid resolution.
Criterion c1_solver_oracle() {
  const Index instances = 50;
  std::vector<double> gaps(instances, 0.0);
  std::vector<char> ok(instances, 1);
  parallel_for(instances, [&](Index t) {
    CounterRng rng(derive_stream(1000, 1, static_cast<std::uint64_t>(t)));
    const Index n = 8 + static_cast<Index>(rng.next_u64() % 13);  // 8..20
    Matrix X = testing::gaussian_matrix(n, 2, rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i)
      y[i] = 1.5 * X(i, 0) + 0.5 * rng.next_normal();
    GroupedDesign design(std::move(X), std::vector<Index>{1, 1});

    const PilotFit pilot = fit_quantile_lp(design, y, 0.5);
    const auto w =
        compute_weights(pilot.coefficients, 1.0, default_weight_floor(pilot.coefficients));
    const double lmax = lambda_max(design, y, 0.5, w);
    const double lambda = (0.15 + 0.5 * rng.next_uniform()) * lmax;
    const PenaltySpec pen(lambda, 1.0, w);

    AdmmOptions opts;
    opts.primal_tol = opts.dual_tol = 1e-10;
    const PenalizedFit fit = fit_ag_lasso_q(design, y, 0.5, pen, opts);
    const double oracle = testing::grid_min_2d(design.matrix(), y, 0.5, lambda, w[0], w[1],
                                               -3.0, 3.0, 1e-3);
    gaps[t] = fit.objective - oracle;
    ok[t] = fit.converged && gaps[t] <= 1e-5;
  });
  Index failures = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (Index t = 0; t < instances; ++t) {
    if (!ok[t]) ++failures;
    worst = std::max(worst, gaps[t]);
  }
  std::ostringstream os;
  os << failures << "/" << instances
     << " instances above the grid bound, max (solver - grid) = " << worst;
  return {failures == 0, os.str()};
}

// C2: every converged penalized fit on (n=40, p=5, d=2) Normal instances
// passes the KKT check at tol 1e-4 with lambda = 0.3 lambda_max.
Criterion c2_kkt_certification() {
  const Index instances = 50;
  std::vector<char> ok(instances, 1);
  std::vector<double> residuals(instances, 0.0);
  parallel_for(instances, [&](Index t) {
    CounterRng rng(derive_stream(2000, 2, static_cast<std::uint64_t>(t)));
    const Index n = 40, p = 5, d = 2;
    Matrix X = testing::gaussian_matrix(n, p * d, rng);
    Vector beta0 = Vector::Zero(p * d);
    beta0.head(4) << 1.0, -0.8, 0.6, 1.2;
    Vector y = X * beta0;
    for (Index i = 0; i < n; ++i) y[i] += rng.next_normal();
    GroupedDesign design(std::move(X), std::vector<Index>(p, d));

    const PilotFit pilot = fit_quantile_lp(design, y, 0.5);
    const auto w =
        compute_weights(pilot.coefficients, 1.0, default_weight_floor(pilot.coefficients));
    const double lmax = lambda_max(design, y, 0.5, w);
    const PenaltySpec pen(0.3 * lmax, 1.0, w);
    const PenalizedFit fit = fit_ag_lasso_q(design, y, 0.5, pen);
    if (!fit.converged) return;  // only converged fits are certified
    const KktReport rep = kkt_check(design, y, fit, 0.5, pen, 1e-4);
    residuals[t] = rep.overall;
    ok[t] = rep.passed;
  });
  Index failures = 0;
  double worst = 0.0;
  for (Index t = 0; t < instances; ++t) {
    if (!ok[t]) ++failures;
    worst = std::max(worst, residuals[t]);
  }
  std::ostringstream os;
  os << failures << "/" << instances << " converged fits failed, max residual = " << worst;
  return {failures == 0, os.str()};
}

// C3: smoothed pilot objective within 1e-6 * (1 + objective) of the LP oracle.
Criterion c3_pilot_exactness() {
  const Index instances = 50;
  std::vector<char> ok(instances, 1);
  std::vector<double> rel(instances, 0.0);
  parallel_for(instances, [&](Index t) {
    CounterRng rng(derive_stream(3000, 3, static_cast<std::uint64_t>(t)));
    const Index n = 10 + static_cast<Index>(rng.next_u64() % 41);  // 10..50
    const Index r = 1 + static_cast<Index>(rng.next_u64() % 5);    // 1..5
    Matrix X = testing::gaussian_matrix(n, r, rng);
    Vector beta0(r);
    for (Index k = 0; k < r; ++k) beta0[k] = rng.next_normal();
    Vector y = X * beta0;
    for (Index i = 0; i < n; ++i) y[i] += rng.next_normal();
    GroupedDesign design(std::move(X), std::vector<Index>{r});
    const double tau = (t % 3 == 0) ? 0.25 : (t % 3 == 1 ? 0.5 : 0.75);

    const PilotFit exact = fit_quantile_lp(design, y, tau);
    const PilotFit smooth = fit_quantile(design, y, tau);
    rel[t] = std::abs(smooth.objective - exact.objective) / (1.0 + exact.objective);
    ok[t] = rel[t] <= 1e-6;
  });
  Index failures = 0;
  double worst = 0.0;
  for (Index t = 0; t < instances; ++t) {
    if (!ok[t]) ++failures;
    worst = std::max(worst, rel[t]);
  }
  std::ostringstream os;
  os << failures << "/" << instances << " instances out of tolerance, max relative gap = "
     << worst;
  return {failures == 0, os.str()};
}

// C4: desk-scale selection table, Normal errors (n=100, p=10, 200 reps).
Criterion c4_table_normal() {
  ScenarioSpec s;
  s.n = 100;
  s.p = 10;
  s.error = ErrorLaw::normal();
  s.seed = 404;
  const auto summary = run_scenario(
      s, {FitMethod::least_squares, FitMethod::quantile}, 200, HarnessOptions{}, 0);
  const auto& q = summary.methods.at("ag_LASSO_Q");
  const bool pass_median_nz = q.nonzero.median >= 3.0;  // published Q2 = 4, tolerance 1
  const bool pass_mean_nz = q.nonzero.mean >= 3.7;
  const bool pass_median_zero = q.zero.median >= 4.0;   // published Q2 = 5, tolerance 1
  std::ostringstream os;
  os << "Q nonzero median = " << q.nonzero.median << " (need >= 3), mean = " << q.nonzero.mean
     << " (need >= 3.7), zero median = " << q.zero.median << " (need >= 4)";
  return {pass_median_nz && pass_mean_nz && pass_median_zero, os.str()};
}

// C5: Cauchy robustness gap (n=100, p=10, 200 reps): the quantile method keeps
// finding the signal groups while the least-squares comparator breaks down.
Criterion c5_table_cauchy() {
  ScenarioSpec s;
  s.n = 100;
  s.p = 10;
  s.error = ErrorLaw::cauchy();
  s.seed = 505;
  const auto summary = run_scenario(
      s, {FitMethod::least_squares, FitMethod::quantile}, 200, HarnessOptions{}, 0);
  const auto& q = summary.methods.at("ag_LASSO_Q");
  const auto& ls = summary.methods.at("ag_LASSO_LS");
  std::ostringstream os;
  os << "Q nonzero mean = " << q.nonzero.mean << " (need >= 3.4), LS nonzero mean = "
     << ls.nonzero.mean << " (need <= 1.5)";
  return {q.nonzero.mean >= 3.4 && ls.nonzero.mean <= 1.5, os.str()};
}

// C6: large-n exact support recovery (n=1000, p=25, Cauchy, 100 reps).
Criterion c6_selection_consistency() {
  ScenarioSpec s;
  s.n = 1000;
  s.p = 25;
  s.error = ErrorLaw::cauchy();
  s.seed = 606;
  std::vector<ReplicationOutcome> outcomes;
  run_scenario(s, {FitMethod::quantile}, 100, HarnessOptions{}, 0, &outcomes);
  Index exact = 0;
  for (const auto& o : outcomes)
    if (o.nonzero_identified == 4 && o.zero_identified == 21) ++exact;
  std::ostringstream os;
  os << exact << "/100 replications recovered the exact support (need >= 80)";
  return {exact >= 80, os.str()};
}

// C7: empirical variance of sqrt(n) (beta_hat_11 - beta0_11) against the
// asymptotic value tau(1-tau) f(0)^-2 (U_nA^-1)_11 on a fixed design.
Criterion c7_asymptotic_variance() {
  const Index n = 2000, p = 5, reps = 500;
  const double tau = 0.5;
  const std::uint64_t seed = 707;

  ScenarioSpec s;
  s.n = n;
  s.p = p;
  s.error = ErrorLaw::normal();  // N(0, 3^2)
  s.seed = seed;
  const GroupedDesign design =
      gen_design(n, p, derive_stream(seed, s.scenario_id(), 0xD00DULL));
  const GroupedCoefficients beta0 = true_beta(p);

  std::vector<Index> signal_groups{0, 1, 2, 3};
  const GroupedDesign design_active = design.restricted(signal_groups);
  const Matrix u_na = design_active.matrix().transpose() * design_active.matrix() /
                      static_cast<double>(n);
  const Vector e1 = Vector::Unit(u_na.rows(), 0);
  const double u_inv_11 = u_na.ldlt().solve(e1)[0];
  const double f0 = 1.0 / (3.0 * std::sqrt(2.0 * M_PI));
  const double target = tau * (1.0 - tau) / (f0 * f0) * u_inv_11;

  const double lambda = std::pow(static_cast<double>(n), -0.6);
  std::vector<double> estimates(reps, 0.0);
  parallel_for(reps, [&](Index rep) {
    CounterRng rng(derive_stream(seed, s.scenario_id(), static_cast<std::uint64_t>(rep)));
    const Vector errors = gen_errors(s.error, n, rng, tau);
    const Vector y = gen_response(design, beta0, errors);
    const PilotFit pilot = fit_quantile(design, y, tau);
    const auto w =
        compute_weights(pilot.coefficients, 1.0, default_weight_floor(pilot.coefficients));
    const PenalizedFit fit = fit_ag_lasso_q(design, y, tau, PenaltySpec(lambda, 1.0, w));
    estimates[rep] = fit.coefficients.values()[0];
  });

  double mean = 0.0;
  for (double v : estimates) mean += v;
  mean /= static_cast<double>(reps);
  double var = 0.0;
  for (double v : estimates) var += (v - mean) * (v - mean);
  var *= static_cast<double>(n) / static_cast<double>(reps - 1);

  std::ostringstream os;
  os << "empirical var = " << var << ", asymptotic = " << target << ", ratio = "
     << var / target << " (need within 25%)";
  return {std::abs(var / target - 1.0) <= 0.25, os.str()};
}

// C8: empirical column covariance of the generated design matches the
// analytic pattern entrywise within 0.02 at n = 1e5.
Criterion c8_design_law() {
  const Index n = 100000, p = 5;
  const GroupedDesign design = gen_design(n, p, derive_stream(808, 8, 0));
  const Matrix& X = design.matrix();
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Matrix centered = X.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);

  double worst = 0.0;
  for (Index a = 0; a < X.cols(); ++a)
    for (Index b = 0; b < X.cols(); ++b) {
      const Index ja = a / 5, jb = b / 5;
      double expect;
      if (a == b)
        expect = 1.0;
      else if (ja == jb)
        expect = 0.5;
      else
        expect = std::pow(0.9, std::abs(ja - jb)) / 2.0;
      worst = std::max(worst, std::abs(cov(a, b) - expect));
    }
  std::ostringstream os;
  os << "max entrywise deviation = " << worst << " (need <= 0.02)";
  return {worst <= 0.02, os.str()};
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    Criterion (*fn)();
  };
  const Entry entries[] = {
      {"C1 solver-oracle equivalence", c1_solver_oracle},
      {"C2 KKT certification", c2_kkt_certification},
      {"C3 pilot exactness", c3_pilot_exactness},
      {"C4 selection table, Normal errors", c4_table_normal},
      {"C5 selection table, Cauchy errors", c5_table_cauchy},
      {"C6 large-n selection consistency", c6_selection_consistency},
      {"C7 asymptotic variance", c7_asymptotic_variance},
      {"C8 design generator law", c8_design_law},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    const auto start = std::chrono::steady_clock::now();
    Criterion c{false, "exception"};
    try {
      c = e.fn();
    } catch (const std::exception& ex) {
      c.detail = std::string("exception: ") + ex.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %s: %s (%.1fs)\n", c.pass ? "PASS" : "FAIL", e.name, c.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!c.pass) ++failures;
  }
  return failures;
}
