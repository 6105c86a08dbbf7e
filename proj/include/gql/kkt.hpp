#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gql/model.hpp"
#include "gql/types.hpp"

namespace gql {

/// First-order optimality report for a candidate penalized fit. Active groups
/// carry the norm of the stationarity defect, inactive groups the largest
/// coordinatewise excess over the subgradient bound, both divided by
/// n * max(1, max_i ||X_i||) so one tolerance works across problem sizes.
struct KktReport {
  std::vector<double> group_residuals;
  std::vector<bool> group_active;
  double overall = 0.0;
  Index interpolated_points = 0;
  double tol = 0.0;
  bool passed = false;
};

/// Verifies the subgradient equalities on active groups and the bound
/// inequalities on inactive ones at mu = n * lambda.
///
/// Points the fit interpolates may take any subgradient value in [tau-1, tau];
/// each is relaxed to its coordinatewise interval and the minimal achievable
/// residual is reported. tie_tol is the relative residual size below which a
/// point counts as interpolated.
inline KktReport kkt_check(const GroupedDesign& design, const Vector& y,
                           const PenalizedFit& fit, double tau, const PenaltySpec& penalty,
                           double tol, double tie_tol = 1e-10) {
  check_tau(tau);
  require(tol > 0.0, "tolerance must be positive");
  require(y.size() == design.rows(), "response length must match design rows");
  require(fit.coefficients.partition() == design.partition(),
          "fit partition must match design");
  require(static_cast<Index>(penalty.weights.size()) == design.groups(),
          "one weight per group required");

  const Matrix& X = design.matrix();
  const Index n = X.rows();
  const Index p = design.groups();
  const GroupedCoefficients& beta = fit.coefficients;
  const double mu = static_cast<double>(n) * penalty.lambda;
  const double scale =
      static_cast<double>(n) * std::max(1.0, X.rowwise().norm().maxCoeff());

  const Vector fitted = X * beta.values();
  // psi_i = tau - 1{y_i < x_i' beta}; tied points may move within [tau-1, tau].
  Vector psi(n);
  std::vector<Index> ties;
  for (Index i = 0; i < n; ++i) {
    const double resid = y[i] - fitted[i];
    psi[i] = tau - (resid < 0.0 ? 1.0 : 0.0);
    if (std::abs(resid) <= tie_tol * (1.0 + std::abs(y[i]))) ties.push_back(i);
  }

  std::vector<bool> is_active(static_cast<std::size_t>(p), false);
  for (Index j : fit.active_set) is_active[static_cast<std::size_t>(j)] = true;

  KktReport report;
  report.tol = tol;
  report.interpolated_points = static_cast<Index>(ties.size());
  report.group_residuals.resize(static_cast<std::size_t>(p), 0.0);
  report.group_active.resize(static_cast<std::size_t>(p), false);

  for (Index j = 0; j < p; ++j) {
    const Index off = design.partition().offset(j);
    const Index d = design.partition().size(j);
    const double w = penalty.weights[static_cast<std::size_t>(j)];
    const bool active = is_active[static_cast<std::size_t>(j)];
    report.group_active[static_cast<std::size_t>(j)] = active;

    Vector g = X.middleCols(off, d).transpose() * psi;
    if (active) {
      const double norm_j = beta.group_norm(j);
      g -= (mu * w / norm_j) * beta.block(j);
    }

    // Interval relaxation: coordinate k of the sum can move by
    // delta_i * X_ij,k with delta_i in [tau-1-psi_i, tau-psi_i] per tied point.
    double residual = 0.0;
    double sq = 0.0;
    for (Index k = 0; k < d; ++k) {
      double lo = g[k], hi = g[k];
      for (Index i : ties) {
        const double x = X(i, off + k);
        const double dlo = (tau - 1.0) - psi[i];
        const double dhi = tau - psi[i];
        lo += std::min(dlo * x, dhi * x);
        hi += std::max(dlo * x, dhi * x);
      }
      double mag = 0.0;
      if (lo > 0.0)
        mag = lo;
      else if (hi < 0.0)
        mag = -hi;
      if (active)
        sq += mag * mag;
      else
        residual = std::max(residual, std::max(mag - mu * w, 0.0));
    }
    if (active) residual = std::sqrt(sq);
    report.group_residuals[static_cast<std::size_t>(j)] = residual / scale;
  }

  report.overall = 0.0;
  for (double v : report.group_residuals) report.overall = std::max(report.overall, v);
  report.passed = report.overall <= tol;
  return report;
}

}  // namespace gql
