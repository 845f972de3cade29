#include "feddadil/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "feddadil/simplex.hpp"

namespace feddadil {

void Dictionary::validate() const {
  if (atoms.empty()) throw std::invalid_argument("dictionary needs at least one atom");
  const auto n = atom_size();
  const auto d = dim();
  const auto nc = num_classes();
  if (n < 1 || d < 1 || nc < 1) throw std::invalid_argument("dictionary atoms need n, d, n_c >= 1");
  for (const auto& a : atoms) {
    if (a.features.rows() != n || a.features.cols() != d || a.labels.rows() != n || a.labels.cols() != nc) {
      throw std::invalid_argument("atom " + std::to_string(a.id) + " has inconsistent shape");
    }
    if (!a.features.allFinite()) throw std::invalid_argument("atom " + std::to_string(a.id) + " has non-finite features");
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd row = a.labels.row(i).transpose();
      if (!on_simplex({row.data(), static_cast<std::size_t>(row.size())}, 1e-6)) {
        throw std::invalid_argument("atom " + std::to_string(a.id) + " has a label row off the simplex");
      }
    }
  }
}

std::vector<DiscreteDistribution> Dictionary::distributions() const {
  std::vector<DiscreteDistribution> out;
  out.reserve(atoms.size());
  for (const auto& a : atoms) out.push_back(a.distribution());
  return out;
}

bool Dictionary::operator==(const Dictionary& other) const {
  if (!(tag == other.tag) || atoms.size() != other.atoms.size()) return false;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const auto& a = atoms[k];
    const auto& b = other.atoms[k];
    if (a.id != b.id || a.features.rows() != b.features.rows() || a.features.cols() != b.features.cols() ||
        a.labels.cols() != b.labels.cols() || a.features != b.features || a.labels != b.labels) {
      return false;
    }
  }
  return true;
}

BarycentricCoordinates BarycentricCoordinates::uniform(std::size_t k) {
  if (k == 0) throw std::invalid_argument("barycentric coordinates need K >= 1");
  return BarycentricCoordinates(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

BarycentricCoordinates::BarycentricCoordinates(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty() || !on_simplex(weights_, 1e-9)) {
    throw std::invalid_argument("barycentric coordinates must lie on the simplex");
  }
}

void ClientDataset::validate() const {
  if (features.rows() < 1 || features.cols() < 1) throw std::invalid_argument("client '" + name + "' has no data");
  if (!features.allFinite()) throw std::invalid_argument("client '" + name + "' has non-finite features");
  if (role == DomainRole::Target) {
    if (labels) throw std::invalid_argument("target client '" + name + "' must not carry labels");
    return;
  }
  if (!labels) throw std::invalid_argument("source client '" + name + "' needs labels");
  if (labels->rows() != features.rows()) throw std::invalid_argument("client '" + name + "' label count mismatch");
  for (Eigen::Index i = 0; i < labels->rows(); ++i) {
    const auto row = labels->row(i);
    const bool one_hot = (row.array() == 0.0 || row.array() == 1.0).all() && row.sum() == 1.0;
    if (!one_hot) throw std::invalid_argument("client '" + name + "' row " + std::to_string(i) + " is not one-hot");
  }
}

DiscreteDistribution ClientDataset::rows(std::span<const Eigen::Index> idx) const {
  Matrix x(static_cast<Eigen::Index>(idx.size()), features.cols());
  std::optional<Matrix> y;
  if (labels) y = Matrix(x.rows(), labels->cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = features.row(idx[r]);
    if (y) y->row(static_cast<Eigen::Index>(r)) = labels->row(idx[r]);
  }
  return DiscreteDistribution(std::move(x), std::move(y));
}

LossLinearization linearize_loss(const DiscreteDistribution& batch, const BarycentricCoordinates& alpha,
                                 const Dictionary& dict, const LossConfig& cfg) {
  if (alpha.size() != dict.num_atoms()) throw std::invalid_argument("alpha size does not match atom count");
  if (batch.dim() != dict.dim()) throw std::invalid_argument("batch feature dimension does not match dictionary");
  if (batch.labeled() && batch.num_classes() != dict.num_classes()) {
    throw std::invalid_argument("batch class count does not match dictionary");
  }
  const auto atoms = dict.distributions();
  BarycenterConfig bcfg = cfg.barycenter;
  bcfg.evaluate_final_objective = false;
  if (cfg.beta && !bcfg.label_weight) bcfg.label_weight = cfg.beta;

  LossLinearization lin;
  lin.barycenter = free_support_barycenter(atoms, alpha.weights(), bcfg);
  lin.labeled = batch.labeled();
  const GroundCost ground{lin.labeled ? CostKind::FeaturesAndLabels : CostKind::Features, cfg.beta};
  const auto cost = cost_matrix(batch, lin.barycenter.distribution, ground);
  auto res = solve(cost, cfg.solver);
  lin.beta = lin.labeled ? cost.beta : 0.0;
  lin.data_plan = std::move(res.plan);
  lin.loss = res.cost;
  return lin;
}

double local_loss(const DiscreteDistribution& batch, const BarycentricCoordinates& alpha, const Dictionary& dict,
                  const LossConfig& cfg) {
  return linearize_loss(batch, alpha, dict, cfg).loss;
}

LossGradients loss_gradients(const DiscreteDistribution& batch, const BarycentricCoordinates& alpha,
                             const Dictionary& dict, const LossConfig& cfg) {
  LossGradients out;
  out.linearization = linearize_loss(batch, alpha, dict, cfg);
  const auto& lin = out.linearization;
  const auto& gamma = lin.data_plan.coupling;  // batch x barycenter
  const auto& bary = lin.barycenter.distribution;
  const double nb = static_cast<double>(bary.size());
  const Vector mass = gamma.colwise().sum().transpose();

  // dL/d(barycenter support) and dL/d(barycenter label map).
  const Matrix gx = 2.0 * (mass.asDiagonal() * bary.support() - gamma.transpose() * batch.support());
  Matrix gy;
  if (lin.labeled) {
    gy = 2.0 * lin.beta * (mass.asDiagonal() * *bary.labels() - gamma.transpose() * *batch.labels());
  }

  const std::size_t K = dict.num_atoms();
  out.features.resize(K);
  out.labels.resize(K);
  out.alpha.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& plan = lin.barycenter.last_plans[k].coupling;  // barycenter x atom
    const auto& atom = dict.atoms[k];
    const Matrix mapped_x = nb * plan * atom.features;
    out.features[k] = (alpha[k] * nb) * plan.transpose() * gx;
    out.alpha[k] = (gx.array() * mapped_x.array()).sum();
    if (lin.labeled) {
      const Matrix mapped_y = nb * plan * atom.labels;
      out.labels[k] = (alpha[k] * nb) * plan.transpose() * gy;
      out.alpha[k] += (gy.array() * mapped_y.array()).sum();
    } else {
      out.labels[k] = Matrix::Zero(atom.labels.rows(), atom.labels.cols());
    }
  }
  return out;
}

ClientUpdateResult client_update(const Dictionary& local, const BarycentricCoordinates& alpha,
                                 const ClientDataset& data, const ClientUpdateConfig& cfg) {
  if (data.size() < 1) throw std::invalid_argument("client_update: empty dataset for '" + data.name + "'");
  if (cfg.epochs < 1) throw std::invalid_argument("client_update: epochs must be >= 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw std::invalid_argument("client_update: learning rate must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("client_update: batch size must be >= 1");
  const double alpha_lr = cfg.alpha_lr.value_or(cfg.lr);
  if (!(alpha_lr >= 0.0) || !std::isfinite(alpha_lr)) throw std::invalid_argument("client_update: alpha step size must be >= 0");
  local.validate();
  if (alpha.size() != local.num_atoms()) throw std::invalid_argument("client_update: alpha size mismatch");

  const Eigen::Index n = data.size();
  const Eigen::Index bs = std::min(cfg.batch_size, n);
  const int batches = cfg.batches_per_epoch.value_or(std::max<int>(1, static_cast<int>(n / bs)));
  if (batches < 1) throw std::invalid_argument("client_update: batches per epoch must be >= 1");

  ClientUpdateResult out{local, alpha, {}};
  std::vector<double> w(alpha.weights().begin(), alpha.weights().end());
  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(bs));

  for (int e = 0; e < cfg.epochs; ++e) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    double epoch_loss = 0.0;
    for (int b = 0; b < batches; ++b) {
      for (Eigen::Index r = 0; r < bs; ++r) idx[r] = perm[(b * bs + r) % n];
      const auto batch = data.rows(idx);
      const BarycentricCoordinates current(w);
      if (cfg.lr == 0.0 && alpha_lr == 0.0) {
        epoch_loss += local_loss(batch, current, out.dictionary, cfg.loss);
        continue;
      }
      const auto grads = loss_gradients(batch, current, out.dictionary, cfg.loss);
      epoch_loss += grads.linearization.loss;
      for (std::size_t k = 0; k < out.dictionary.atoms.size(); ++k) {
        auto& atom = out.dictionary.atoms[k];
        atom.features -= cfg.lr * grads.features[k];
        if (grads.linearization.labeled) {
          atom.labels -= cfg.lr * grads.labels[k];
          project_rows_to_simplex(atom.labels);
        }
      }
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= alpha_lr * grads.alpha[k];
      w = project_to_simplex(w);
    }
    out.epoch_mean_loss.push_back(epoch_loss / batches);
  }
  out.alpha = BarycentricCoordinates(w);
  return out;
}

}  // namespace feddadil
