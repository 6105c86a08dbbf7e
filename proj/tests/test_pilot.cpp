#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "gql/model.hpp"
#include "gql/pilot.hpp"
#include "test_oracles.hpp"

using namespace gql;
using Catch::Approx;

namespace {

GroupedDesign intercept_design(Index n) {
  return GroupedDesign(Matrix::Ones(n, 1), std::vector<Index>{1});
}

}  // namespace

TEST_CASE("LP pilot recovers noiseless data exactly") {
  CounterRng rng(100);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 12 + 3 * trial, r = 4;
    Matrix X = testing::gaussian_matrix(n, r, rng);
    Vector beta0(r);
    for (Index k = 0; k < r; ++k) beta0[k] = rng.next_normal();
    Vector y = X * beta0;
    GroupedDesign design(X, std::vector<Index>{2, 2});
    const double tau = 0.2 + 0.6 * rng.next_uniform();
    const PilotFit fit = fit_quantile_lp(design, y, tau);
    REQUIRE(fit.converged);
    CHECK(fit.objective == Approx(0.0).margin(1e-10));
    CHECK((fit.coefficients.values() - beta0).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("LP pilot finds the flat intercept minimum") {
  Vector y(4);
  y << 1, 2, 3, 10;
  const auto design = intercept_design(4);

  const PilotFit med = fit_quantile_lp(design, y, 0.5);
  REQUIRE(med.converged);
  CHECK(med.objective == Approx(5.0));
  CHECK(med.coefficients.values()[0] >= 2.0 - 1e-12);
  CHECK(med.coefficients.values()[0] <= 3.0 + 1e-12);

  const PilotFit q25 = fit_quantile_lp(design, y, 0.25);
  const double oracle = testing::grid_min_location(y, 0.25, 0.0, 11.0, 1e-4);
  CHECK(q25.objective == Approx(oracle).margin(1e-3));
  // the optimum of an intercept-only problem is attained at a data point
  double closest = 1e9;
  for (Index i = 0; i < 4; ++i)
    closest = std::min(closest, std::abs(y[i] - q25.coefficients.values()[0]));
  CHECK(closest < 1e-10);
}

TEST_CASE("LP solution cannot be improved by coordinate perturbations") {
  CounterRng rng(101);
  for (int trial = 0; trial < 8; ++trial) {
    const Index n = 15, r = 3;
    Matrix X = testing::gaussian_matrix(n, r, rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = rng.next_normal() * 2.0;
    GroupedDesign design(X, std::vector<Index>{1, 2});
    const double tau = 0.3 + 0.4 * rng.next_uniform();
    const PilotFit fit = fit_quantile_lp(design, y, tau);
    REQUIRE(fit.converged);
    for (Index k = 0; k < r; ++k) {
      for (double delta : {-1e-3, 1e-3}) {
        GroupedCoefficients nudged = fit.coefficients;
        nudged.values()[k] += delta;
        CHECK(quantile_objective(design, y, nudged, tau) >= fit.objective - 1e-12);
      }
    }
  }
}

TEST_CASE("LP optimum admits a subgradient certificate") {
  CounterRng rng(102);
  const Index n = 30, r = 4;
  Matrix X = testing::gaussian_matrix(n, r, rng);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.next_normal();
  GroupedDesign design(X, std::vector<Index>{4});
  const double tau = 0.4;
  const PilotFit fit = fit_quantile_lp(design, y, tau);
  REQUIRE(fit.converged);

  // a_i = tau - 1{r_i < 0} off ties; tied points carry a free value in
  // [tau-1, tau], so certify coordinatewise with interval arithmetic
  const Vector res = y - X * fit.coefficients.values();
  const double bound = 1e-8 * n * X.rowwise().norm().maxCoeff();
  for (Index k = 0; k < r; ++k) {
    double lo = 0.0, hi = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (std::abs(res[i]) <= 1e-9 * (1.0 + std::abs(y[i]))) {
        lo += std::min((tau - 1.0) * X(i, k), tau * X(i, k));
        hi += std::max((tau - 1.0) * X(i, k), tau * X(i, k));
      } else {
        const double a = tau - (res[i] < 0.0 ? 1.0 : 0.0);
        lo += a * X(i, k);
        hi += a * X(i, k);
      }
    }
    CHECK(lo <= bound);
    CHECK(hi >= -bound);
  }
}

TEST_CASE("intercept fits interpolate the order statistics") {
  CounterRng rng(103);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 5 + static_cast<Index>(rng.next_u64() % 20);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = rng.next_normal() * 3.0;
    const double tau = 0.1 + 0.8 * rng.next_uniform();
    const PilotFit fit = fit_quantile_lp(intercept_design(n), y, tau);
    std::vector<double> sorted(y.data(), y.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const auto lo_rank = static_cast<std::size_t>(
        std::max<long>(0, static_cast<long>(std::floor(tau * n)) - 1));
    const auto hi_rank = std::min<std::size_t>(
        static_cast<std::size_t>(std::ceil(tau * n)), sorted.size() - 1);
    const double b = fit.coefficients.values()[0];
    CHECK(b >= sorted[lo_rank] - 1e-10);
    CHECK(b <= sorted[hi_rank] + 1e-10);
  }
}

TEST_CASE("LP is equivariant under positive response scaling") {
  CounterRng rng(104);
  const Index n = 20, r = 3;
  Matrix X = testing::gaussian_matrix(n, r, rng);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.next_normal();
  GroupedDesign design(X, std::vector<Index>{3});
  const PilotFit base = fit_quantile_lp(design, y, 0.3);
  const PilotFit scaled = fit_quantile_lp(design, Vector(2.0 * y), 0.3);
  CHECK(scaled.objective == Approx(2.0 * base.objective).epsilon(1e-12));
  CHECK((scaled.coefficients.values() - 2.0 * base.coefficients.values())
            .lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("LP enforces the oracle cap and flags rank deficiency") {
  CounterRng rng(105);
  Matrix big = testing::gaussian_matrix(501, 2, rng);
  GroupedDesign design(big, std::vector<Index>{2});
  Vector y = Vector::Ones(501);
  CHECK_THROWS_AS(fit_quantile_lp(design, y, 0.5), CapacityError);

  Matrix dup(10, 2);
  dup.col(0) = testing::gaussian_matrix(10, 1, rng);
  dup.col(1) = dup.col(0);
  GroupedDesign deficient(dup, std::vector<Index>{2});
  Vector y2 = dup.col(0);
  const PilotFit fit = fit_quantile_lp(deficient, y2, 0.5);
  CHECK(fit.degenerate);
  CHECK(fit.objective == Approx(0.0).margin(1e-10));
}

TEST_CASE("smoothed solver reaches the LP optimum") {
  Vector y(4);
  y << 1, 2, 3, 10;
  const PilotFit smooth = fit_quantile(intercept_design(4), y, 0.5);
  CHECK(smooth.converged);
  CHECK(smooth.objective == Approx(5.0).margin(1e-6));

  CounterRng rng(106);
  const Index n = 50, r = 5;
  Matrix X = testing::gaussian_matrix(n, r, rng);
  Vector noise(n);
  for (Index i = 0; i < n; ++i) noise[i] = rng.next_normal();
  Vector beta0(r);
  for (Index k = 0; k < r; ++k) beta0[k] = rng.next_normal();
  Vector ydat = X * beta0 + noise;
  GroupedDesign design(X, std::vector<Index>{2, 3});

  const PilotFit exact = fit_quantile_lp(design, ydat, 0.5);
  const PilotFit approx = fit_quantile(design, ydat, 0.5);
  CHECK(approx.converged);
  CHECK(approx.objective <= exact.objective + 1e-6 * (1.0 + exact.objective));

  const PilotFit noiseless = fit_quantile(design, Vector(X * beta0), 0.5);
  CHECK(noiseless.objective <= 1e-6);
}

TEST_CASE("adaptive weights follow the floored inverse-norm rule") {
  GroupPartition part(std::vector<Index>{2, 2, 1});
  Vector v(5);
  v << 1, 0, 0, 0, 2;
  GroupedCoefficients pilot(v, part);
  const auto w = compute_weights(pilot, 1.0, 1e-6);
  CHECK(w[0] == Approx(1.0));   // unit norm, any gamma
  CHECK(w[1] == Approx(1e6));   // zero norm hits the floor
  CHECK(w[2] == Approx(0.5));   // norm 2, gamma 1

  const auto w2 = compute_weights(pilot, 2.0, 1e-6);
  CHECK(w2[0] == Approx(1.0));
  CHECK(w2[1] == Approx(1e12));

  // monotone in the block norm
  CounterRng rng(107);
  double prev_norm = 0.0, prev_weight = 1e12;
  for (int k = 1; k <= 20; ++k) {
    Vector u = Vector::Zero(5);
    u[0] = 0.1 * k;
    const auto wk = compute_weights(GroupedCoefficients(u, part), 1.3, 1e-6);
    CHECK(u.norm() > prev_norm);
    CHECK(wk[0] <= prev_weight + 1e-15);
    prev_norm = u.norm();
    prev_weight = wk[0];
  }

  CHECK_THROWS_AS(compute_weights(pilot, 0.0, 1e-6), std::invalid_argument);
  CHECK_THROWS_AS(compute_weights(pilot, 1.0, 0.0), std::invalid_argument);
}
