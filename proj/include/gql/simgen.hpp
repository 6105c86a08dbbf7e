#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "gql/rng.hpp"
#include "gql/types.hpp"

namespace gql {

struct ErrorLaw {
  enum class Family { normal, cauchy, none };

  Family family = Family::normal;
  double scale = 3.0;  // location fixed at 0

  static ErrorLaw normal(double scale = 3.0) { return {Family::normal, scale}; }
  static ErrorLaw cauchy(double scale = 3.0) { return {Family::cauchy, scale}; }
  /// Degenerate point mass at 0, for noiseless harness runs.
  static ErrorLaw none() { return {Family::none, 0.0}; }

  double density_at_zero() const {
    switch (family) {
      case Family::normal: return 1.0 / (scale * std::sqrt(2.0 * M_PI));
      case Family::cauchy: return 1.0 / (scale * M_PI);
      case Family::none: return std::numeric_limits<double>::infinity();
    }
    return 0.0;
  }

  double quantile(double q) const {
    check_tau(q);
    switch (family) {
      case Family::normal: return scale * inverse_normal_cdf(q);
      case Family::cauchy: return scale * std::tan(M_PI * (q - 0.5));
      case Family::none: return 0.0;
    }
    return 0.0;
  }

  double sample(CounterRng& rng) const {
    switch (family) {
      case Family::normal: return scale * rng.next_normal();
      case Family::cauchy: return rng.next_cauchy(scale);
      case Family::none: return 0.0;
    }
    return 0.0;
  }

  std::string name() const {
    switch (family) {
      case Family::normal: return "normal";
      case Family::cauchy: return "cauchy";
      case Family::none: return "none";
    }
    return "?";
  }
};

/// One simulation cell: n observations, p groups of five variables each,
/// a symmetric error law, quantile level, and a stream seed.
struct ScenarioSpec {
  Index n = 100;
  Index p = 10;
  ErrorLaw error;
  double tau = 0.5;
  std::uint64_t seed = 0;
  double growth_exponent = 0.43;  // informational

  static constexpr Index kGroupSize = 5;
  static constexpr Index kTrueGroups = 4;

  void validate() const {
    require(p >= 4, "scenarios need at least four groups");
    require(n > kGroupSize * p, "scenarios require n > 5p");
    check_tau(tau);
  }

  Index dims() const { return kGroupSize * p; }

  GroupPartition partition() const {
    return GroupPartition(std::vector<Index>(static_cast<std::size_t>(p), kGroupSize));
  }

  std::uint64_t scenario_id() const {
    std::uint64_t h = mix64(static_cast<std::uint64_t>(n));
    h = mix64(h ^ static_cast<std::uint64_t>(p));
    h = mix64(h ^ static_cast<std::uint64_t>(error.family));
    std::uint64_t bits;
    static_assert(sizeof(double) == sizeof(std::uint64_t));
    std::memcpy(&bits, &error.scale, sizeof(bits));
    h = mix64(h ^ bits);
    std::memcpy(&bits, &tau, sizeof(bits));
    h = mix64(h ^ bits);
    return h;
  }
};

/// True coefficients: four fixed signal blocks of five, all later groups zero.
inline GroupedCoefficients true_beta(Index p) {
  require(p >= 4, "true coefficient vector is defined for p >= 4");
  const double blocks[4][5] = {{0.5, 1.0, 1.5, 1.0, 0.5},
                               {1.0, 1.0, 1.0, 1.0, 1.0},
                               {-1.0, 0.0, 1.0, 2.0, 1.5},
                               {-1.5, 1.0, 0.5, 0.5, 0.5}};
  Vector v = Vector::Zero(5 * p);
  for (Index j = 0; j < 4; ++j)
    for (Index k = 0; k < 5; ++k) v[5 * j + k] = blocks[j][k];
  return GroupedCoefficients(std::move(v),
                             GroupPartition(std::vector<Index>(static_cast<std::size_t>(p), 5)));
}

/// Correlated grouped design: shared group factors Z_j with
/// Cov(Z_j1, Z_j2) = 0.9^|j1-j2| plus independent noise, columns
/// X_{5(j-1)+k} = (Z_j + R_{5(j-1)+k}) / sqrt(2). Rows are independent.
/// Each row consumes p factor draws followed by 5p idiosyncratic draws.
inline GroupedDesign gen_design(Index n, Index p, CounterRng& rng) {
  require(n >= 1 && p >= 1, "design dimensions must be positive");
  Matrix toeplitz(p, p);
  for (Index a = 0; a < p; ++a)
    for (Index b = 0; b < p; ++b) toeplitz(a, b) = std::pow(0.9, std::abs(a - b));
  Eigen::LLT<Matrix> llt(toeplitz);
  require(llt.info() == Eigen::Success, "factor covariance must be positive definite");
  const Matrix L = llt.matrixL();

  const Index r = 5 * p;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Matrix X(n, r);
  Vector eta(p), z(p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) eta[j] = rng.next_normal();
    z.noalias() = L * eta;
    for (Index j = 0; j < p; ++j)
      for (Index k = 0; k < 5; ++k)
        X(i, 5 * j + k) = (z[j] + rng.next_normal()) * inv_sqrt2;
  }
  return GroupedDesign(std::move(X), std::vector<Index>(static_cast<std::size_t>(p), 5));
}

inline GroupedDesign gen_design(Index n, Index p, std::uint64_t stream_key) {
  CounterRng rng(stream_key);
  return gen_design(n, p, rng);
}

/// i.i.d. draws from the law, optionally shifted so that F(0) = tau
/// (tau = 0.5 needs no shift for these symmetric laws).
inline Vector gen_errors(const ErrorLaw& law, Index n, CounterRng& rng, double tau = 0.5) {
  check_tau(tau);
  const double shift = (tau == 0.5) ? 0.0 : -law.quantile(tau);
  Vector e(n);
  for (Index i = 0; i < n; ++i) e[i] = law.sample(rng) + shift;
  return e;
}

inline Vector gen_errors(const ErrorLaw& law, Index n, std::uint64_t stream_key,
                         double tau = 0.5) {
  CounterRng rng(stream_key);
  return gen_errors(law, n, rng, tau);
}

inline Vector gen_response(const GroupedDesign& design, const GroupedCoefficients& beta0,
                           const Vector& errors) {
  require(errors.size() == design.rows(), "error vector length must match design rows");
  require(beta0.partition() == design.partition(), "coefficient partition must match design");
  return design.matrix() * beta0.values() + errors;
}

/// Full replication draw: design then errors from a single stream.
struct ScenarioData {
  GroupedDesign design;
  Vector errors;
  Vector response;
};

inline ScenarioData gen_scenario_data(const ScenarioSpec& spec, std::uint64_t replication) {
  spec.validate();
  CounterRng rng(derive_stream(spec.seed, spec.scenario_id(), replication));
  GroupedDesign design = gen_design(spec.n, spec.p, rng);
  Vector errors = gen_errors(spec.error, spec.n, rng, spec.tau);
  Vector y = gen_response(design, true_beta(spec.p), errors);
  return {std::move(design), std::move(errors), std::move(y)};
}

}  // namespace gql
