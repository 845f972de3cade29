#pragma once

#include <optional>
#include <span>
#include <vector>

#include "feddadil/ot.hpp"

namespace feddadil {

enum class BarycenterInit { WeightedMean, LargestWeightAtom };

struct BarycenterConfig {
  std::optional<Eigen::Index> support_size;  ///< unset: size of the first atom
  int fixed_point_iters = 10;
  SolverConfig inner_solver;
  BarycenterInit init = BarycenterInit::WeightedMean;
  /// Label weight of the ground cost between the barycenter and labeled atoms.
  /// Unset: resolved once per call from the initial support (see Barycenter::label_weight).
  std::optional<double> label_weight;
  /// Re-solve the K transport problems on the returned support to report its objective.
  bool evaluate_final_objective = true;
};

/// Free-support barycenter B(alpha; atoms) together with the data needed to
/// differentiate through its last fixed-point update.
struct Barycenter {
  DiscreteDistribution distribution;
  double final_objective = 0.0;  ///< NaN when evaluate_final_objective is off
  double label_weight = 0.0;
  /// objective_trace[t] is the objective of the support entering iteration t.
  std::vector<double> objective_trace;
  /// Support entering the last iteration and the plans from it to each atom;
  /// the returned support equals sum_k alpha_k * n_B * plans[k] * atom_k.
  Matrix last_input_support;
  std::vector<TransportPlan> last_plans;
};

Barycenter free_support_barycenter(std::span<const DiscreteDistribution> atoms,
                                   std::span<const double> weights,
                                   const BarycenterConfig& cfg = {});

/// sum_k alpha_k W_c(atom_k, B) with the exact solver. Labeled cost is used
/// when B and every atom carry labels.
double evaluate_barycenter_objective(std::span<const DiscreteDistribution> atoms,
                                     std::span<const double> weights,
                                     const DiscreteDistribution& barycenter,
                                     std::optional<double> label_weight = std::nullopt);

}  // namespace feddadil
