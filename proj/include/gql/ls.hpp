#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

#include "gql/model.hpp"
#include "gql/types.hpp"

namespace gql {

struct BcdOptions {
  Index max_iter = 20000;  // full sweeps
  double tol = 1e-10;      // largest block change per sweep
};

namespace detail {

// Exact minimizer of 1/2 b'Sb - g'b + kappa ||b|| given S = V E V'.
// Zero iff ||g|| <= kappa; otherwise b = (S + theta I)^-1 g with
// theta = kappa / ||b||, found by bisection on the scalar secular equation
// theta * ||(E + theta)^-1 g~|| = kappa, whose left side is increasing.
inline Vector group_block_min(const Matrix& V, const Vector& evals, const Vector& g,
                              double kappa) {
  const Vector gt = V.transpose() * g;
  if (kappa <= 0.0) return V * gt.cwiseQuotient(evals);
  if (g.norm() <= kappa) return Vector::Zero(g.size());

  auto lhs = [&](double theta) {
    double s = 0.0;
    for (Index k = 0; k < gt.size(); ++k) {
      const double term = theta * gt[k] / (evals[k] + theta);
      s += term * term;
    }
    return std::sqrt(s);
  };
  double lo = 0.0, hi = std::max(1.0, evals.maxCoeff());
  for (int grow = 0; grow < 200 && lhs(hi) < kappa; ++grow) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (lhs(mid) < kappa)
      lo = mid;
    else
      hi = mid;
  }
  const double theta = 0.5 * (lo + hi);
  Vector bt(gt.size());
  for (Index k = 0; k < gt.size(); ++k) bt[k] = gt[k] / (evals[k] + theta);
  return V * bt;
}

}  // namespace detail

/// Largest scaled violation of the least-squares subgradient conditions.
inline double ls_stationarity(const GroupedDesign& design, const Vector& y,
                              const PenalizedFit& fit, const PenaltySpec& penalty) {
  const GroupPartition& part = design.partition();
  const double nd = static_cast<double>(design.rows());
  const Vector res = y - design.matrix() * fit.coefficients.values();
  const double scale = std::max(1.0, design.matrix().rowwise().norm().maxCoeff());
  std::vector<bool> active(static_cast<std::size_t>(part.groups()), false);
  for (Index j : fit.active_set) active[static_cast<std::size_t>(j)] = true;
  double worst = 0.0;
  for (Index j = 0; j < part.groups(); ++j) {
    const Vector g = design.block(j).transpose() * res / nd;
    const double lw = penalty.lambda * penalty.weights[static_cast<std::size_t>(j)];
    double v;
    if (active[static_cast<std::size_t>(j)]) {
      const double norm_j = fit.coefficients.group_norm(j);
      v = (g - (lw / norm_j) * fit.coefficients.block(j)).norm();
    } else {
      v = std::max(g.norm() - lw, 0.0);
    }
    worst = std::max(worst, v / scale);
  }
  return worst;
}

/// Adaptive group LASSO least-squares comparator:
/// minimize (1/2n) ||y - X beta||^2 + lambda sum_j w_j ||beta_j||
/// by cyclic block coordinate descent. Each block subproblem is solved
/// exactly in the eigenbasis of its Gram block. Numerically rank-deficient
/// groups are dropped to zero and reported.
inline PenalizedFit fit_ag_lasso_ls(const GroupedDesign& design, const Vector& y,
                                    const PenaltySpec& penalty, const BcdOptions& opts = {}) {
  penalty.validate();
  require(y.size() == design.rows(), "response length must match design rows");
  require(static_cast<Index>(penalty.weights.size()) == design.groups(),
          "one weight per group required");
  require(opts.tol > 0.0 && opts.max_iter >= 1, "invalid solver options");

  const Matrix& X = design.matrix();
  const GroupPartition& part = design.partition();
  const Index n = design.rows(), p = design.groups();
  const double nd = static_cast<double>(n);

  std::vector<Matrix> eigvecs(static_cast<std::size_t>(p));
  std::vector<Vector> eigvals(static_cast<std::size_t>(p));
  std::vector<Index> dropped;
  for (Index j = 0; j < p; ++j) {
    const Matrix Sj = design.block(j).transpose() * design.block(j) / nd;
    Eigen::SelfAdjointEigenSolver<Matrix> es(Sj);
    eigvecs[static_cast<std::size_t>(j)] = es.eigenvectors();
    eigvals[static_cast<std::size_t>(j)] = es.eigenvalues();
    if (es.eigenvalues().minCoeff() <= 1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
      dropped.push_back(j);
  }
  std::vector<bool> is_dropped(static_cast<std::size_t>(p), false);
  for (Index j : dropped) is_dropped[static_cast<std::size_t>(j)] = true;

  Vector beta = Vector::Zero(design.cols());
  Vector res = y;
  Index sweeps = 0;
  bool converged = false;
  for (; sweeps < opts.max_iter; ++sweeps) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (is_dropped[static_cast<std::size_t>(j)]) continue;
      const Index off = part.offset(j), d = part.size(j);
      auto bj = beta.segment(off, d);
      const Vector g = design.block(j).transpose() * res / nd +
                       eigvecs[static_cast<std::size_t>(j)] *
                           (eigvals[static_cast<std::size_t>(j)].asDiagonal() *
                            (eigvecs[static_cast<std::size_t>(j)].transpose() * bj));
      const double kappa = penalty.lambda * penalty.weights[static_cast<std::size_t>(j)];
      const Vector bnew = detail::group_block_min(eigvecs[static_cast<std::size_t>(j)],
                                                  eigvals[static_cast<std::size_t>(j)], g, kappa);
      const Vector diff = bnew - bj;
      const double change = diff.norm();
      if (change > 0.0) {
        res.noalias() -= design.block(j) * diff;
        bj = bnew;
        max_change = std::max(max_change, change);
      }
    }
    if (max_change <= opts.tol) {
      converged = true;
      ++sweeps;
      break;
    }
  }

  GroupedCoefficients coef(std::move(beta), part);
  PenalizedFit fit{std::move(coef), {}, 0.0, 0.0, penalty.lambda, sweeps, converged,
                   std::move(dropped)};
  fit.active_set = active_set(fit.coefficients);
  const double rss = (y - X * fit.coefficients.values()).squaredNorm();
  fit.objective = 0.5 * rss / nd + penalty_value(fit.coefficients, penalty);
  fit.kkt_residual = ls_stationarity(design, y, fit, penalty);
  return fit;
}

}  // namespace gql
