#pragma once

#include <cstddef>
#include <optional>

#include <Eigen/Dense>

namespace feddadil {

/// Row-major dense matrix. Samples are rows throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Uniform-weight empirical measure: each of the n support rows carries mass 1/n.
/// Labels, when present, are n x n_c rows of class probabilities.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  explicit DiscreteDistribution(Matrix support, std::optional<Matrix> labels = std::nullopt);

  const Matrix& support() const { return support_; }
  const std::optional<Matrix>& labels() const { return labels_; }
  bool labeled() const { return labels_.has_value(); }

  Eigen::Index size() const { return support_.rows(); }
  Eigen::Index dim() const { return support_.cols(); }
  Eigen::Index num_classes() const { return labels_ ? labels_->cols() : 0; }

 private:
  Matrix support_;
  std::optional<Matrix> labels_;
};

enum class CostKind { Features, FeaturesAndLabels };

/// Ground cost c((x,y),(x',y')) = |x-x'|^2 + beta |y-y'|^2; beta only used for the labeled kind.
/// An unset beta resolves to the mean of the feature-only cost matrix of the pair.
struct GroundCost {
  CostKind kind = CostKind::Features;
  std::optional<double> beta;
};

struct CostMatrix {
  Matrix entries;
  CostKind kind = CostKind::Features;
  double beta = 0.0;  ///< resolved label weight (0 for the features-only kind)
};

CostMatrix cost_matrix(const DiscreteDistribution& p, const DiscreteDistribution& q,
                       const GroundCost& ground = {});

/// Coupling between uniform marginals: row sums 1/n, column sums 1/m.
struct TransportPlan {
  Matrix coupling;
};

struct OtResult {
  TransportPlan plan;
  double cost = 0.0;
  bool converged = true;       ///< always true for the exact solver
  int iterations = 0;
  double marginal_error = 0.0; ///< pre-rounding violation for the entropic solver
};

/// Exact discrete OT with uniform marginals. Equal sizes are solved as an
/// assignment problem (the plan is a scaled permutation); unequal sizes by
/// successive shortest paths on integer-scaled masses.
OtResult solve_exact(const CostMatrix& cost);

struct EntropicConfig {
  std::optional<double> epsilon;  ///< absolute; unset -> relative_epsilon * mean(C)
  double relative_epsilon = 0.01;
  int max_iter = 1000;
  double tol = 1e-9;
};

/// Log-domain Sinkhorn. The returned plan is rounded onto the transport
/// polytope so its marginals are exact; `converged` and `marginal_error`
/// describe the Sinkhorn iterate before rounding.
OtResult solve_entropic(const CostMatrix& cost, const EntropicConfig& cfg = {});

enum class SolverKind { Exact, Entropic };

struct SolverConfig {
  SolverKind kind = SolverKind::Exact;
  EntropicConfig entropic;
};

OtResult solve(const CostMatrix& cost, const SolverConfig& cfg);

double wasserstein(const DiscreteDistribution& p, const DiscreteDistribution& q,
                   const GroundCost& ground = {}, const SolverConfig& solver = {});

/// Largest absolute deviation of the plan's row/column sums from 1/n and 1/m.
double marginal_violation(const TransportPlan& plan);

}  // namespace feddadil
