#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gql/kkt.hpp"
#include "gql/model.hpp"
#include "gql/prox.hpp"
#include "gql/types.hpp"

namespace gql {

struct AdmmOptions {
  double rho = 1.0;
  Index max_iter = 100000;
  double primal_tol = 1e-7;  // absolute and relative primal tolerance
  double dual_tol = 1e-7;    // absolute and relative dual tolerance
  double over_relaxation = 1.5;
  Index adapt_until = 1000;  // residual balancing stops after this iteration
  std::vector<double>* objective_trace = nullptr;  // optional per-iteration objective

  void validate() const {
    require(rho > 0.0, "rho must be positive");
    require(primal_tol > 0.0 && dual_tol > 0.0, "tolerances must be positive");
    require(over_relaxation >= 1.0 && over_relaxation <= 1.8,
            "over-relaxation must lie in [1, 1.8]");
    require(max_iter >= 1, "max_iter must be positive");
  }
};

/// ADMM for (1/n) sum_i rho_tau(y_i - x_i' beta) + lambda sum_j w_j ||beta_j||
/// under the splitting z = y - X beta, w = beta. The beta step solves a fixed
/// SPD system (X'X + I, independent of rho), the z step is the check-loss
/// prox, the w step is blockwise soft-thresholding. Residual balancing
/// doubles or halves rho when one residual dominates the other tenfold.
///
/// The solver keeps its state between fits so a lambda path can be
/// warm-started; it holds references to the design and response, which must
/// outlive it.
class AdmmSolver {
 public:
  AdmmSolver(const GroupedDesign& design, const Vector& y, double tau)
      : design_(design), y_(y), tau_(tau) {
    check_tau(tau);
    require(y.size() == design.rows(), "response length must match design rows");
    const Matrix& X = design.matrix();
    Matrix gram = X.transpose() * X;
    gram.diagonal().array() += 1.0;
    llt_.compute(gram);
    if (llt_.info() != Eigen::Success)
      throw std::runtime_error("beta-update system must be positive definite");
    reset();
  }

  void reset() {
    const Index n = design_.rows(), r = design_.cols();
    beta_ = Vector::Zero(r);
    z_ = y_;
    w_ = Vector::Zero(r);
    s_ = Vector::Zero(n);
    t_ = Vector::Zero(r);
    rho_ = 0.0;  // adopted from options on the next fit
  }

  PenalizedFit fit(const PenaltySpec& penalty, const AdmmOptions& opts = {},
                   bool warm_start = false) {
    opts.validate();
    penalty.validate();
    require(static_cast<Index>(penalty.weights.size()) == design_.groups(),
            "one weight per group required");
    if (!warm_start) reset();
    if (rho_ <= 0.0) rho_ = opts.rho;

    const Matrix& X = design_.matrix();
    const GroupPartition& part = design_.partition();
    const Index n = design_.rows(), r = design_.cols(), p = design_.groups();
    const double nd = static_cast<double>(n);
    const double alpha = opts.over_relaxation;
    const double sqrt_dims_pri = std::sqrt(static_cast<double>(n + r));
    const double sqrt_dims_dual = std::sqrt(static_cast<double>(r));

    Vector xbeta(n), rhs(r), hz(n), hw(r), z_old(n), w_old(r);
    Index iter = 0;
    bool converged = false;
    for (; iter < opts.max_iter; ++iter) {
      // beta step
      rhs.noalias() = X.transpose() * (y_ - z_ + s_);
      rhs += w_ - t_;
      beta_ = llt_.solve(rhs);
      xbeta.noalias() = X * beta_;

      // z step (relaxed)
      z_old.swap(z_);
      const double upper = tau_ / (nd * rho_);
      const double lower = -(1.0 - tau_) / (nd * rho_);
      for (Index i = 0; i < n; ++i) {
        const double h = alpha * (y_[i] - xbeta[i]) + (1.0 - alpha) * z_old[i];
        hz[i] = h;
        const double v = h + s_[i];
        if (v > upper)
          z_[i] = v - upper;
        else if (v < lower)
          z_[i] = v - lower;
        else
          z_[i] = 0.0;
      }
      s_ += hz - z_;

      // w step (relaxed)
      w_old.swap(w_);
      hw = alpha * beta_ + (1.0 - alpha) * w_old;
      for (Index j = 0; j < p; ++j) {
        const Index off = part.offset(j), d = part.size(j);
        const double thr = penalty.lambda * penalty.weights[static_cast<std::size_t>(j)] / rho_;
        auto vj = hw.segment(off, d) + t_.segment(off, d);
        const double norm = vj.norm();
        if (norm <= thr)
          w_.segment(off, d).setZero();
        else
          w_.segment(off, d) = (1.0 - thr / norm) * vj;
      }
      t_ += hw - w_;

      if (opts.objective_trace) {
        GroupedCoefficients cur(w_, part);
        opts.objective_trace->push_back(penalized_objective(design_, y_, cur, tau_, penalty));
      }

      // unrelaxed residuals
      const double pri = std::sqrt((y_ - xbeta - z_).squaredNorm() + (beta_ - w_).squaredNorm());
      const double dual =
          rho_ * (X.transpose() * (z_ - z_old) - (w_ - w_old)).norm();
      const double pri_scale = std::max({std::sqrt(xbeta.squaredNorm() + beta_.squaredNorm()),
                                         std::sqrt(z_.squaredNorm() + w_.squaredNorm()),
                                         y_.norm()});
      const double dual_scale = rho_ * (X.transpose() * s_ - t_).norm();
      const double eps_pri = sqrt_dims_pri * opts.primal_tol + opts.primal_tol * pri_scale;
      const double eps_dual = sqrt_dims_dual * opts.dual_tol + opts.dual_tol * dual_scale;
      if (pri <= eps_pri && dual <= eps_dual) {
        converged = true;
        ++iter;
        break;
      }

      // Balancing is frozen after the warm-up window; late rho changes
      // re-excite the transient and can keep the iteration ringing forever.
      if (iter < opts.adapt_until && (iter + 1) % 10 == 0) {
        if (pri > 10.0 * dual && rho_ < 1e6) {
          rho_ *= 2.0;
          s_ *= 0.5;
          t_ *= 0.5;
        } else if (dual > 10.0 * pri && rho_ > 1e-6) {
          rho_ *= 0.5;
          s_ *= 2.0;
          t_ *= 2.0;
        }
      }
    }

    return finalize(penalty, converged, iter);
  }

 private:
  PenalizedFit finalize(const PenaltySpec& penalty, bool converged, Index iter) const {
    const GroupPartition& part = design_.partition();
    GroupedCoefficients coef(w_, part);
    polish_interpolation(coef);

    PenalizedFit fit{std::move(coef), {}, 0.0, 0.0, penalty.lambda, iter, converged, {}};
    fit.active_set = active_set(fit.coefficients);
    fit.objective = penalized_objective(design_, y_, fit.coefficients, tau_, penalty);
    fit.kkt_residual = kkt_check(design_, y_, fit, tau_, penalty, 1e-4).overall;
    return fit;
  }

  // Moves the active coordinates by the smallest correction that makes
  // near-interpolated residuals exactly zero, so downstream subgradient
  // checks see the tied points the optimum actually has. Skipped when the
  // correction would be large or the tie system is inconsistent.
  void polish_interpolation(GroupedCoefficients& coef) const {
    const Matrix& X = design_.matrix();
    const GroupPartition& part = design_.partition();
    std::vector<Index> active_cols;
    for (Index j = 0; j < part.groups(); ++j)
      if (coef.group_norm(j) > 0.0)
        for (Index k = 0; k < part.size(j); ++k) active_cols.push_back(part.offset(j) + k);
    if (active_cols.empty()) return;

    Vector res = y_ - X * coef.values();
    std::vector<Index> ties;
    for (Index i = 0; i < res.size(); ++i)
      if (std::abs(res[i]) <= 1e-5 * (1.0 + std::abs(y_[i]))) ties.push_back(i);
    if (ties.empty()) return;

    Matrix A(static_cast<Index>(ties.size()), static_cast<Index>(active_cols.size()));
    Vector b(static_cast<Index>(ties.size()));
    for (std::size_t a = 0; a < ties.size(); ++a) {
      b[static_cast<Index>(a)] = res[ties[a]];
      for (std::size_t c = 0; c < active_cols.size(); ++c)
        A(static_cast<Index>(a), static_cast<Index>(c)) = X(ties[a], active_cols[c]);
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    Vector delta = cod.solve(b);
    if (delta.norm() > 1e-3 * (1.0 + coef.norm())) return;
    if ((A * delta - b).lpNorm<Eigen::Infinity>() > 1e-11 * (1.0 + y_.lpNorm<Eigen::Infinity>()))
      return;
    for (std::size_t c = 0; c < active_cols.size(); ++c)
      coef.values()[active_cols[c]] += delta[static_cast<Index>(c)];
  }

  const GroupedDesign& design_;
  const Vector& y_;
  double tau_;
  Eigen::LLT<Matrix> llt_;
  Vector beta_, z_, w_, s_, t_;
  double rho_ = 0.0;
};

/// One-shot adaptive group LASSO quantile fit.
inline PenalizedFit fit_ag_lasso_q(const GroupedDesign& design, const Vector& y, double tau,
                                   const PenaltySpec& penalty, const AdmmOptions& opts = {}) {
  AdmmSolver solver(design, y, tau);
  return solver.fit(penalty, opts, false);
}

}  // namespace gql
