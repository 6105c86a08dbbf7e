#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "gql/types.hpp"

namespace gql {

/// Check (pinball) loss rho_tau(u) = u * (tau - 1{u < 0}).
inline double check_loss(double u, double tau) {
  check_tau(tau);
  return u < 0.0 ? u * (tau - 1.0) : u * tau;
}

/// Sum of check losses over the residuals y - X beta, accumulated
/// left-to-right so repeated runs produce identical values.
inline double quantile_objective(const GroupedDesign& design, const Vector& y,
                                 const GroupedCoefficients& beta, double tau) {
  check_tau(tau);
  require(y.size() == design.rows(), "response length must match design rows");
  require(beta.partition() == design.partition(), "coefficient partition must match design");
  const Vector fitted = design.matrix() * beta.values();
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double u = y[i] - fitted[i];
    total += u < 0.0 ? u * (tau - 1.0) : u * tau;
  }
  return total;
}

inline double penalty_value(const GroupedCoefficients& beta, const PenaltySpec& penalty) {
  require(static_cast<Index>(penalty.weights.size()) == beta.groups(),
          "one weight per group required");
  double s = 0.0;
  for (Index j = 0; j < beta.groups(); ++j)
    s += penalty.weights[static_cast<std::size_t>(j)] * beta.group_norm(j);
  return penalty.lambda * s;
}

/// Scaled objective (1/n) sum_i rho_tau(y_i - x_i' beta) + lambda sum_j w_j ||beta_j||.
inline double penalized_objective(const GroupedDesign& design, const Vector& y,
                                  const GroupedCoefficients& beta, double tau,
                                  const PenaltySpec& penalty) {
  const double n = static_cast<double>(design.rows());
  return quantile_objective(design, y, beta, tau) / n + penalty_value(beta, penalty);
}

/// Default numerical-zero threshold for group activity.
inline double active_set_tolerance(const GroupedCoefficients& beta) {
  return 1e-8 * (1.0 + beta.norm());
}

/// Indices of groups whose block norm exceeds tol.
inline std::vector<Index> active_set(const GroupedCoefficients& beta, double tol) {
  require(tol >= 0.0, "tolerance must be nonnegative");
  std::vector<Index> out;
  for (Index j = 0; j < beta.groups(); ++j)
    if (beta.group_norm(j) > tol) out.push_back(j);
  return out;
}

inline std::vector<Index> active_set(const GroupedCoefficients& beta) {
  return active_set(beta, active_set_tolerance(beta));
}

/// Eigenvalue range of n^-1 X'X, the largest row norm, and the
/// sqrt(p/n) * max ||X_i|| regularity ratio.
inline DesignDiagnostics design_diagnostics(const GroupedDesign& design) {
  const Matrix& X = design.matrix();
  require(X.allFinite(), "design contains non-finite entries");
  const double n = static_cast<double>(X.rows());
  Matrix gram = (X.transpose() * X) / n;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  DesignDiagnostics d;
  d.lambda_min = es.eigenvalues().minCoeff();
  d.lambda_max = es.eigenvalues().maxCoeff();
  d.max_row_norm = X.rowwise().norm().maxCoeff();
  d.ratio = std::sqrt(static_cast<double>(design.groups()) / n) * d.max_row_norm;
  return d;
}

}  // namespace gql
