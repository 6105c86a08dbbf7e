#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gql/model.hpp"
#include "gql/types.hpp"

namespace gql {

/// Thrown when a problem exceeds the exact-oracle size cap.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Primal simplex with Bland's rule for
//   min tau * sum(u) + (1-tau) * sum(v)
//   s.t. X(bp - bm) + u - v = y,  bp, bm, u, v >= 0.
// Column order: bp (r), bm (r), u (n), v (n). The initial basis takes u_i or
// v_i per row depending on sign(y_i), so no phase-1 is needed. Bland's rule
// (lowest eligible index enters, lowest-index basic variable leaves on ties)
// makes the vertex choice deterministic and cycle-free.
class QuantileSimplex {
 public:
  QuantileSimplex(const Matrix& X, const Vector& y, double tau)
      : X_(X), y_(y), tau_(tau), n_(X.rows()), r_(X.cols()) {}

  // Returns coefficients; iterations written to *iters, convergence to *ok.
  Vector solve(Index max_iter, Index* iters, bool* ok) {
    const Index ncols = 2 * r_ + 2 * n_;
    basic_.resize(n_);
    in_basis_.assign(static_cast<std::size_t>(ncols), false);
    binv_ = Matrix::Identity(n_, n_);
    xb_.resize(n_);
    for (Index i = 0; i < n_; ++i) {
      if (y_[i] >= 0.0) {
        basic_[i] = 2 * r_ + i;  // u_i, column +e_i
      } else {
        basic_[i] = 2 * r_ + n_ + i;  // v_i, column -e_i
        binv_(i, i) = -1.0;
      }
      xb_[i] = std::abs(y_[i]);
      in_basis_[static_cast<std::size_t>(basic_[i])] = true;
    }

    const double tol_d = 1e-10;
    const double tol_piv = 1e-9;
    Vector pi(n_), q(r_), w(n_);
    Index iter = 0;
    *ok = false;
    for (; iter < max_iter; ++iter) {
      pi.noalias() = binv_.transpose() * basic_costs();
      q.noalias() = X_.transpose() * pi;

      // Entering column: lowest index with negative reduced cost.
      Index enter = -1;
      double rc = 0.0;
      for (Index j = 0; j < ncols && enter < 0; ++j) {
        if (in_basis_[static_cast<std::size_t>(j)]) continue;
        const double red = reduced_cost(j, pi, q);
        if (red < -tol_d) {
          enter = j;
          rc = red;
        }
      }
      (void)rc;
      if (enter < 0) {
        *ok = true;
        break;
      }

      column(enter, w);
      w = binv_ * w;

      // Ratio test, Bland tie-break on the leaving variable's index.
      double theta = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n_; ++i)
        if (w[i] > tol_piv) theta = std::min(theta, xb_[i] / w[i]);
      if (!std::isfinite(theta))
        throw std::runtime_error("quantile LP is bounded; unbounded ray indicates a bug");
      Index leave = -1;
      for (Index i = 0; i < n_; ++i) {
        if (w[i] <= tol_piv) continue;
        if (xb_[i] / w[i] <= theta + 1e-12 * (1.0 + theta)) {
          if (leave < 0 || basic_[i] < basic_[leave]) leave = i;
        }
      }

      xb_ -= theta * w;
      xb_ = xb_.cwiseMax(0.0);
      xb_[leave] = theta;
      const double piv = w[leave];
      binv_.row(leave) /= piv;
      for (Index i = 0; i < n_; ++i) {
        if (i == leave) continue;
        const double f = w[i];
        if (f != 0.0) binv_.row(i) -= f * binv_.row(leave);
      }
      in_basis_[static_cast<std::size_t>(basic_[leave])] = false;
      in_basis_[static_cast<std::size_t>(enter)] = true;
      basic_[leave] = enter;

      if ((iter + 1) % 256 == 0) refactorize();
    }
    *iters = iter;

    Vector beta = Vector::Zero(r_);
    for (Index i = 0; i < n_; ++i) {
      const Index j = basic_[i];
      if (j < r_)
        beta[j] += xb_[i];
      else if (j < 2 * r_)
        beta[j - r_] -= xb_[i];
    }
    return beta;
  }

 private:
  Vector basic_costs() const {
    Vector cb(n_);
    for (Index i = 0; i < n_; ++i) {
      const Index j = basic_[i];
      if (j < 2 * r_)
        cb[i] = 0.0;
      else if (j < 2 * r_ + n_)
        cb[i] = tau_;
      else
        cb[i] = 1.0 - tau_;
    }
    return cb;
  }

  double reduced_cost(Index j, const Vector& pi, const Vector& q) const {
    if (j < r_) return -q[j];
    if (j < 2 * r_) return q[j - r_];
    if (j < 2 * r_ + n_) return tau_ - pi[j - 2 * r_];
    return (1.0 - tau_) + pi[j - 2 * r_ - n_];
  }

  void column(Index j, Vector& out) const {
    if (j < r_) {
      out = X_.col(j);
    } else if (j < 2 * r_) {
      out = -X_.col(j - r_);
    } else {
      out.setZero();
      if (j < 2 * r_ + n_)
        out[j - 2 * r_] = 1.0;
      else
        out[j - 2 * r_ - n_] = -1.0;
    }
  }

  void refactorize() {
    Matrix B(n_, n_);
    Vector col(n_);
    for (Index i = 0; i < n_; ++i) {
      column(basic_[i], col);
      B.col(i) = col;
    }
    binv_ = B.partialPivLu().inverse();
    xb_ = (binv_ * y_).cwiseMax(0.0);
  }

  const Matrix& X_;
  const Vector& y_;
  double tau_;
  Index n_, r_;
  Matrix binv_;
  Vector xb_;
  std::vector<Index> basic_;
  std::vector<bool> in_basis_;
};

}  // namespace detail

/// Exact pilot fit through the LP reformulation. Capped at oracle_cap rows;
/// larger problems belong to fit_quantile. Rank-deficient designs are solved
/// anyway but flagged degenerate (the vertex reached is one of several).
inline PilotFit fit_quantile_lp(const GroupedDesign& design, const Vector& y, double tau,
                                Index oracle_cap = 500) {
  check_tau(tau);
  require(y.size() == design.rows(), "response length must match design rows");
  if (design.rows() > oracle_cap)
    throw CapacityError("instance exceeds the exact LP oracle cap of " +
                        std::to_string(oracle_cap) + " rows");

  const DesignDiagnostics diag = design_diagnostics(design);
  Index iters = 0;
  bool ok = false;
  detail::QuantileSimplex lp(design.matrix(), y, tau);
  Vector beta = lp.solve(200000, &iters, &ok);

  PilotFit fit{GroupedCoefficients(std::move(beta), design.partition()), 0.0,
               PilotFit::Method::exact_lp, iters, ok, diag.lambda_min <= 1e-10};
  fit.objective = quantile_objective(design, y, fit.coefficients, tau);
  return fit;
}

struct SmoothOptions {
  double eps_start = 1e-1;
  double eps_final = 1e-8;
  Index max_iter = 2000;  // total Newton steps across the schedule
  double tol = 1e-6;      // sup-norm bound on the mean-scaled surrogate gradient
};

namespace detail {

// Quadratic smoothing of the check loss on |u| <= eps; C1, convex, and
// within eps/4 of rho_tau everywhere.
inline double smooth_check(double u, double tau, double eps) {
  if (u > eps) return tau * u;
  if (u < -eps) return (tau - 1.0) * u;
  return u * u / (4.0 * eps) + (tau - 0.5) * u + 0.25 * eps;
}

inline double smooth_check_deriv(double u, double tau, double eps) {
  if (u > eps) return tau;
  if (u < -eps) return tau - 1.0;
  return u / (2.0 * eps) + (tau - 0.5);
}

}  // namespace detail

/// Pilot fit by minimizing successively tighter smoothed surrogates with a
/// damped Newton inner loop, warm-started across the epsilon schedule.
inline PilotFit fit_quantile(const GroupedDesign& design, const Vector& y, double tau,
                             const SmoothOptions& opts = {}) {
  check_tau(tau);
  require(y.size() == design.rows(), "response length must match design rows");
  require(opts.tol > 0.0 && opts.eps_start >= opts.eps_final && opts.eps_final > 0.0,
          "smoothing schedule must be positive and decreasing");

  const Matrix& X = design.matrix();
  const Index n = X.rows(), r = X.cols();
  const double ninv = 1.0 / static_cast<double>(n);

  // Ridge least-squares start.
  Matrix gram = X.transpose() * X;
  const double ridge = 1e-8 * (1.0 + gram.trace() / static_cast<double>(r));
  gram.diagonal().array() += ridge;
  Vector beta = Eigen::LLT<Matrix>(gram).solve(X.transpose() * y);

  const double delta = 1e-10 * (1.0 + gram.trace() / static_cast<double>(r));
  Vector res = y - X * beta;
  auto surrogate = [&](const Vector& resid, double eps) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += detail::smooth_check(resid[i], tau, eps);
    return s * ninv;
  };

  Index total_iters = 0;
  bool converged = false;
  double eps = opts.eps_start;
  Vector grad(r), psi(n), dir(r), trial_res(n);
  Matrix hess(r, r);
  while (true) {
    const bool last_stage = eps <= opts.eps_final;
    const double stage_tol = last_stage ? opts.tol : std::max(opts.tol, 1e-3 * std::sqrt(eps));
    for (Index inner = 0; inner < 100 && total_iters < opts.max_iter; ++inner) {
      for (Index i = 0; i < n; ++i) psi[i] = detail::smooth_check_deriv(res[i], tau, eps);
      grad.noalias() = -ninv * (X.transpose() * psi);
      if (grad.lpNorm<Eigen::Infinity>() <= stage_tol) {
        if (last_stage) converged = true;
        break;
      }

      hess.setZero();
      const double w = ninv / (2.0 * eps);
      for (Index i = 0; i < n; ++i)
        if (std::abs(res[i]) <= eps) hess.selfadjointView<Eigen::Lower>().rankUpdate(X.row(i).transpose(), w);
      hess.diagonal().array() += delta;
      dir = Eigen::LDLT<Matrix>(hess.selfadjointView<Eigen::Lower>()).solve(-grad);
      const double dmax = 1e3 * (1.0 + beta.norm());
      if (dir.norm() > dmax) dir *= dmax / dir.norm();
      double slope = grad.dot(dir);
      if (slope >= 0.0) {  // damping made the direction useless; fall back
        dir = -grad;
        slope = grad.dot(dir);
      }

      const double f0 = surrogate(res, eps);
      double t = 1.0;
      bool stepped = false;
      Vector xd = X * dir;
      for (int ls = 0; ls < 60; ++ls) {
        trial_res = res - t * xd;
        if (surrogate(trial_res, eps) <= f0 + 1e-4 * t * slope) {
          beta += t * dir;
          res = trial_res;
          stepped = true;
          break;
        }
        t *= 0.5;
      }
      ++total_iters;
      if (!stepped) break;
    }
    if (last_stage || total_iters >= opts.max_iter) break;
    eps = std::max(eps * 0.5, opts.eps_final);
  }

  PilotFit fit{GroupedCoefficients(std::move(beta), design.partition()), 0.0,
               PilotFit::Method::smoothed, total_iters, converged, false};
  fit.objective = quantile_objective(design, y, fit.coefficients, tau);
  return fit;
}

/// Default floor for pilot block norms before inversion.
inline double default_weight_floor(const GroupedCoefficients& pilot) {
  return 1e-6 * (1.0 + pilot.norm());
}

/// Adaptive weights w_j = max(||pilot_j||, floor)^(-gamma).
inline std::vector<double> compute_weights(const GroupedCoefficients& pilot, double gamma,
                                           double floor) {
  require(gamma > 0.0, "gamma must be positive");
  require(floor > 0.0, "weight floor must be positive");
  std::vector<double> w(static_cast<std::size_t>(pilot.groups()));
  for (Index j = 0; j < pilot.groups(); ++j)
    w[static_cast<std::size_t>(j)] = std::pow(std::max(pilot.group_norm(j), floor), -gamma);
  return w;
}

}  // namespace gql
