#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gql/admm.hpp"
#include "gql/ls.hpp"
#include "gql/model.hpp"
#include "gql/types.hpp"

namespace gql {

struct LambdaGrid {
  std::vector<double> values;  // strictly decreasing, values[0] = lambda_max
  double lambda_max = 0.0;
  Index count = 0;
  double log_ratio = 0.0;  // log of the per-step ratio
};

enum class FitMethod { quantile, least_squares };

inline const char* method_name(FitMethod m) {
  return m == FitMethod::quantile ? "ag_LASSO_Q" : "ag_LASSO_LS";
}

/// Smallest lambda at which the all-zero vector satisfies the group
/// subgradient bound, i.e. max_j ||sum_i X_ij (tau - 1{y_i<0})|| / (n w_j).
inline double lambda_max(const GroupedDesign& design, const Vector& y, double tau,
                         const std::vector<double>& weights) {
  check_tau(tau);
  require(y.size() == design.rows(), "response length must match design rows");
  require(static_cast<Index>(weights.size()) == design.groups(),
          "one weight per group required");
  const Index n = design.rows();
  Vector psi(n);
  for (Index i = 0; i < n; ++i) psi[i] = tau - (y[i] < 0.0 ? 1.0 : 0.0);
  double lmax = 0.0;
  for (Index j = 0; j < design.groups(); ++j) {
    require(weights[static_cast<std::size_t>(j)] > 0.0, "weights must be positive");
    const double score = (design.block(j).transpose() * psi).norm();
    lmax = std::max(lmax, score / (static_cast<double>(n) * weights[static_cast<std::size_t>(j)]));
  }
  return lmax;
}

/// Least-squares counterpart: zero is optimal iff ||X_j'y/n|| <= lambda w_j.
inline double lambda_max_ls(const GroupedDesign& design, const Vector& y,
                            const std::vector<double>& weights) {
  require(y.size() == design.rows(), "response length must match design rows");
  require(static_cast<Index>(weights.size()) == design.groups(),
          "one weight per group required");
  const double n = static_cast<double>(design.rows());
  double lmax = 0.0;
  for (Index j = 0; j < design.groups(); ++j) {
    require(weights[static_cast<std::size_t>(j)] > 0.0, "weights must be positive");
    const double score = (design.block(j).transpose() * y).norm() / n;
    lmax = std::max(lmax, score / weights[static_cast<std::size_t>(j)]);
  }
  return lmax;
}

/// Geometric grid from lmax down to lmax * min_ratio inclusive.
inline LambdaGrid build_grid(double lmax, Index count, double min_ratio) {
  require(lmax > 0.0, "lambda_max must be positive");
  require(count >= 2, "grid needs at least two points");
  require(min_ratio > 0.0 && min_ratio < 1.0, "min_ratio must lie in (0,1)");
  LambdaGrid grid;
  grid.lambda_max = lmax;
  grid.count = count;
  grid.log_ratio = std::log(min_ratio) / static_cast<double>(count - 1);
  grid.values.resize(static_cast<std::size_t>(count));
  grid.values.front() = lmax;
  grid.values.back() = lmax * min_ratio;
  for (Index k = 1; k + 1 < count; ++k)
    grid.values[static_cast<std::size_t>(k)] =
        lmax * std::exp(grid.log_ratio * static_cast<double>(k));
  return grid;
}

/// Number of nonzero scalar coefficients.
inline Index degrees_of_freedom(const GroupedCoefficients& beta) {
  Index df = 0;
  for (Index k = 0; k < beta.values().size(); ++k)
    if (beta.values()[k] != 0.0) ++df;
  return df;
}

/// Information criterion for one fit. Quantile fits use a BIC-style
/// check-loss criterion, least-squares fits use AIC on the RSS.
inline double selection_criterion(const GroupedDesign& design, const Vector& y, double tau,
                                  const PenalizedFit& fit, FitMethod method) {
  const double n = static_cast<double>(design.rows());
  const Index df = degrees_of_freedom(fit.coefficients);
  if (method == FitMethod::quantile) {
    const double loss = quantile_objective(design, y, fit.coefficients, tau);
    return n * std::log(std::max(loss / n, 1e-300)) +
           std::log(n) * static_cast<double>(df) / 2.0;
  }
  const double rss = (y - design.matrix() * fit.coefficients.values()).squaredNorm();
  return n * std::log(std::max(rss / n, 1e-300)) + 2.0 * static_cast<double>(df);
}

struct SelectionResult {
  double best_lambda = 0.0;
  Index best_index = -1;
  std::vector<double> criteria;
  std::vector<Index> dfs;
  std::vector<PenalizedFit> fits;
};

struct SelectOptions {
  AdmmOptions admm;
  BcdOptions bcd;
  bool warm_start = true;  // fit the path largest-to-smallest reusing state
};

/// Fits the full lambda path and picks the criterion minimizer, ties broken
/// toward the larger (sparser) lambda. Throws if no fit on the grid converges.
inline SelectionResult select_lambda(const GroupedDesign& design, const Vector& y, double tau,
                                     const LambdaGrid& grid, FitMethod method,
                                     const PenaltySpec& penalty_template,
                                     const SelectOptions& opts = {}) {
  require(!grid.values.empty(), "empty lambda grid");
  SelectionResult out;
  out.criteria.reserve(grid.values.size());
  out.fits.reserve(grid.values.size());

  AdmmSolver solver(design, y, tau);
  bool any_converged = false;
  for (std::size_t k = 0; k < grid.values.size(); ++k) {
    const PenaltySpec pen = penalty_template.with_lambda(grid.values[k]);
    PenalizedFit fit = (method == FitMethod::quantile)
                           ? solver.fit(pen, opts.admm, opts.warm_start && k > 0)
                           : fit_ag_lasso_ls(design, y, pen, opts.bcd);
    any_converged = any_converged || fit.converged;
    const double crit = selection_criterion(design, y, tau, fit, method);
    out.criteria.push_back(crit);
    out.dfs.push_back(degrees_of_freedom(fit.coefficients));
    out.fits.push_back(std::move(fit));
    if (out.best_index < 0 || crit < out.criteria[static_cast<std::size_t>(out.best_index)])
      out.best_index = static_cast<Index>(k);
  }
  if (!any_converged)
    throw std::runtime_error("no lambda on the grid produced a converged fit");
  out.best_lambda = grid.values[static_cast<std::size_t>(out.best_index)];
  return out;
}

}  // namespace gql
