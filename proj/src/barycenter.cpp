#include "feddadil/barycenter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "feddadil/simplex.hpp"

namespace feddadil {

namespace {

void validate(std::span<const DiscreteDistribution> atoms, std::span<const double> weights) {
  if (atoms.empty()) throw std::invalid_argument("barycenter needs at least one atom");
  if (atoms.size() != weights.size()) {
    throw std::invalid_argument("barycenter: " + std::to_string(atoms.size()) + " atoms but " +
                                std::to_string(weights.size()) + " weights");
  }
  if (!on_simplex(weights, 1e-6)) throw std::invalid_argument("barycentric weights are off the simplex");
  const auto d = atoms.front().dim();
  const bool labeled = atoms.front().labeled();
  const auto nc = atoms.front().num_classes();
  for (const auto& a : atoms) {
    if (a.dim() != d) throw std::invalid_argument("atoms disagree on feature dimension");
    if (a.labeled() != labeled || a.num_classes() != nc) {
      throw std::invalid_argument("atoms disagree on labels/class count");
    }
  }
}

Matrix cyclic_rows(const Matrix& src, Eigen::Index rows) {
  Matrix out(rows, src.cols());
  for (Eigen::Index i = 0; i < rows; ++i) out.row(i) = src.row(i % src.rows());
  return out;
}

}  // namespace

Barycenter free_support_barycenter(std::span<const DiscreteDistribution> atoms,
                                   std::span<const double> weights, const BarycenterConfig& cfg) {
  validate(atoms, weights);
  if (cfg.fixed_point_iters < 1) throw std::invalid_argument("fixed_point_iters must be >= 1");
  const Eigen::Index nb = cfg.support_size.value_or(atoms.front().size());
  if (nb < 1) throw std::invalid_argument("support_size must be >= 1");
  const bool labeled = atoms.front().labeled();
  const std::size_t K = atoms.size();

  const bool aligned = std::all_of(atoms.begin(), atoms.end(), [nb](const auto& a) { return a.size() == nb; });
  Matrix x, y;
  if (cfg.init == BarycenterInit::WeightedMean && aligned) {
    x = Matrix::Zero(nb, atoms.front().dim());
    if (labeled) y = Matrix::Zero(nb, atoms.front().num_classes());
    for (std::size_t k = 0; k < K; ++k) {
      x += weights[k] * atoms[k].support();
      if (labeled) y += weights[k] * *atoms[k].labels();
    }
  } else {
    const auto top = static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) - weights.begin());
    x = cyclic_rows(atoms[top].support(), nb);
    if (labeled) y = cyclic_rows(*atoms[top].labels(), nb);
  }
  if (labeled) project_rows_to_simplex(y);

  Barycenter out;
  GroundCost ground{labeled ? CostKind::FeaturesAndLabels : CostKind::Features, std::nullopt};
  if (labeled) {
    double beta = 0.0;
    if (cfg.label_weight) {
      beta = *cfg.label_weight;
    } else {
      const DiscreteDistribution init(x);
      for (std::size_t k = 0; k < K; ++k) {
        beta += weights[k] * cost_matrix(init, DiscreteDistribution(atoms[k].support())).entries.mean();
      }
    }
    ground.beta = beta;
    out.label_weight = beta;
  }

  const double scale = static_cast<double>(nb);
  std::vector<TransportPlan> plans(K);
  for (int it = 0; it < cfg.fixed_point_iters; ++it) {
    const DiscreteDistribution current(x, labeled ? std::optional<Matrix>(y) : std::nullopt);
    double objective = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      auto res = solve(cost_matrix(current, atoms[k], ground), cfg.inner_solver);
      objective += weights[k] * res.cost;
      plans[k] = std::move(res.plan);
    }
    out.objective_trace.push_back(objective);

    Matrix nx = Matrix::Zero(x.rows(), x.cols());
    Matrix ny;
    if (labeled) ny = Matrix::Zero(y.rows(), y.cols());
    for (std::size_t k = 0; k < K; ++k) {
      if (weights[k] == 0.0) continue;
      nx.noalias() += (weights[k] * scale) * plans[k].coupling * atoms[k].support();
      if (labeled) ny.noalias() += (weights[k] * scale) * plans[k].coupling * *atoms[k].labels();
    }
    if (it + 1 == cfg.fixed_point_iters) out.last_input_support = x;
    x = std::move(nx);
    if (labeled) {
      project_rows_to_simplex(ny);
      y = std::move(ny);
    }
  }
  out.last_plans = std::move(plans);
  out.distribution = DiscreteDistribution(x, labeled ? std::optional<Matrix>(y) : std::nullopt);
  out.final_objective = cfg.evaluate_final_objective
                            ? evaluate_barycenter_objective(atoms, weights, out.distribution,
                                                            labeled ? std::optional<double>(out.label_weight)
                                                                    : std::nullopt)
                            : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double evaluate_barycenter_objective(std::span<const DiscreteDistribution> atoms,
                                     std::span<const double> weights,
                                     const DiscreteDistribution& barycenter,
                                     std::optional<double> label_weight) {
  validate(atoms, weights);
  const bool labeled = barycenter.labeled() && atoms.front().labeled();
  const GroundCost ground{labeled ? CostKind::FeaturesAndLabels : CostKind::Features, label_weight};
  double total = 0.0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    if (weights[k] == 0.0) continue;
    total += weights[k] * solve_exact(cost_matrix(atoms[k], barycenter, ground)).cost;
  }
  return total;
}

}  // namespace feddadil
