#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gql {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void check_tau(double tau) {
  require(tau > 0.0 && tau < 1.0, "quantile level tau must lie in (0,1)");
}

/// Contiguous partition of coefficient indices into groups.
class GroupPartition {
 public:
  GroupPartition() = default;

  explicit GroupPartition(std::vector<Index> sizes) : sizes_(std::move(sizes)) {
    require(!sizes_.empty(), "partition needs at least one group");
    offsets_.resize(sizes_.size() + 1);
    offsets_[0] = 0;
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
      require(sizes_[j] >= 1, "group sizes must be >= 1");
      offsets_[j + 1] = offsets_[j] + sizes_[j];
    }
  }

  Index groups() const { return static_cast<Index>(sizes_.size()); }
  Index dims() const { return offsets_.empty() ? 0 : offsets_.back(); }
  Index size(Index j) const { return sizes_.at(static_cast<std::size_t>(j)); }
  Index offset(Index j) const { return offsets_.at(static_cast<std::size_t>(j)); }
  const std::vector<Index>& sizes() const { return sizes_; }

  Index group_of(Index col) const {
    require(col >= 0 && col < dims(), "column index out of range");
    Index j = 0;
    while (offsets_[static_cast<std::size_t>(j) + 1] <= col) ++j;
    return j;
  }

  bool operator==(const GroupPartition& other) const { return sizes_ == other.sizes_; }
  bool operator!=(const GroupPartition& other) const { return !(*this == other); }

 private:
  std::vector<Index> sizes_;
  std::vector<Index> offsets_;
};

/// Design matrix whose columns are partitioned into contiguous groups.
class GroupedDesign {
 public:
  GroupedDesign(Matrix values, GroupPartition partition)
      : X_(std::move(values)), part_(std::move(partition)) {
    require(X_.rows() >= 1, "design needs at least one row");
    require(X_.cols() == part_.dims(), "group sizes must sum to the column count");
  }

  GroupedDesign(Matrix values, std::vector<Index> group_sizes)
      : GroupedDesign(std::move(values), GroupPartition(std::move(group_sizes))) {}

  Index rows() const { return X_.rows(); }
  Index cols() const { return X_.cols(); }
  Index groups() const { return part_.groups(); }
  const Matrix& matrix() const { return X_; }
  const GroupPartition& partition() const { return part_; }

  auto block(Index j) const { return X_.middleCols(part_.offset(j), part_.size(j)); }

  /// Design restricted to the listed groups (columns copied in list order).
  GroupedDesign restricted(const std::vector<Index>& groups) const {
    require(!groups.empty(), "restriction needs at least one group");
    std::vector<Index> sizes;
    Index total = 0;
    for (Index j : groups) {
      require(j >= 0 && j < part_.groups(), "group index out of range");
      sizes.push_back(part_.size(j));
      total += part_.size(j);
    }
    Matrix sub(X_.rows(), total);
    Index at = 0;
    for (Index j : groups) {
      sub.middleCols(at, part_.size(j)) = block(j);
      at += part_.size(j);
    }
    return GroupedDesign(std::move(sub), GroupPartition(std::move(sizes)));
  }

 private:
  Matrix X_;
  GroupPartition part_;
};

/// Coefficient vector sharing a design's group partition.
class GroupedCoefficients {
 public:
  GroupedCoefficients(Vector values, GroupPartition partition)
      : v_(std::move(values)), part_(std::move(partition)) {
    require(v_.size() == part_.dims(), "coefficient length must match the partition");
  }

  static GroupedCoefficients zero(const GroupPartition& partition) {
    return GroupedCoefficients(Vector::Zero(partition.dims()), partition);
  }

  const Vector& values() const { return v_; }
  Vector& values() { return v_; }
  const GroupPartition& partition() const { return part_; }
  Index groups() const { return part_.groups(); }

  auto block(Index j) const { return v_.segment(part_.offset(j), part_.size(j)); }
  auto block(Index j) { return v_.segment(part_.offset(j), part_.size(j)); }

  double group_norm(Index j) const { return block(j).norm(); }
  double norm() const { return v_.norm(); }

 private:
  Vector v_;
  GroupPartition part_;
};

/// Penalty lambda * sum_j weights[j] * ||beta_j||, with exponent gamma kept
/// for provenance of the weights.
struct PenaltySpec {
  double lambda = 0.0;
  double gamma = 1.0;
  std::vector<double> weights;

  PenaltySpec() = default;
  PenaltySpec(double lambda_, double gamma_, std::vector<double> weights_)
      : lambda(lambda_), gamma(gamma_), weights(std::move(weights_)) {
    validate();
  }

  void validate() const {
    require(lambda >= 0.0, "lambda must be nonnegative");
    require(gamma > 0.0, "gamma must be positive");
    for (double w : weights)
      require(w >= 0.0 && std::isfinite(w), "weights must be finite and nonnegative");
  }

  PenaltySpec with_lambda(double l) const {
    PenaltySpec out = *this;
    out.lambda = l;
    out.validate();
    return out;
  }
};

/// Empirical counterparts of the design regularity quantities: extreme
/// eigenvalues of n^-1 X'X, the largest row norm, and sqrt(p/n) * max ||X_i||.
struct DesignDiagnostics {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double max_row_norm = 0.0;
  double ratio = 0.0;
};

/// Result of an unpenalized quantile fit.
struct PilotFit {
  enum class Method { exact_lp, smoothed };

  GroupedCoefficients coefficients;
  double objective = 0.0;
  Method method = Method::exact_lp;
  Index iterations = 0;
  bool converged = false;
  bool degenerate = false;  // design numerically rank deficient
};

/// Result of a penalized fit (quantile ADMM or least-squares comparator).
struct PenalizedFit {
  GroupedCoefficients coefficients;
  std::vector<Index> active_set;
  double objective = 0.0;
  double kkt_residual = 0.0;
  double lambda = 0.0;
  Index iterations = 0;
  bool converged = false;
  std::vector<Index> dropped_groups;  // rank-deficient groups forced to zero (LS path)
};

}  // namespace gql
