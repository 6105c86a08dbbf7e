#pragma once

#include <Eigen/Dense>

#include "gql/types.hpp"

namespace gql {

/// Proximal map of the check loss: argmin_z rho_tau(z) + (sigma/2)(z - v)^2.
inline double prox_check(double v, double tau, double sigma) {
  check_tau(tau);
  require(sigma > 0.0, "sigma must be positive");
  const double upper = tau / sigma;
  const double lower = -(1.0 - tau) / sigma;
  if (v > upper) return v - upper;
  if (v < lower) return v - lower;
  return 0.0;
}

/// Proximal map of t * ||.||_2: block soft-thresholding.
template <typename Derived>
Vector prox_group(const Eigen::MatrixBase<Derived>& v, double t) {
  require(t >= 0.0, "threshold must be nonnegative");
  const double norm = v.norm();
  if (norm <= t) return Vector::Zero(v.size());
  return (1.0 - t / norm) * v;
}

}  // namespace gql
