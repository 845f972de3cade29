#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "feddadil/barycenter.hpp"
#include "feddadil/ot.hpp"

namespace feddadil {

/// A learnable labeled empirical distribution.
struct Atom {
  Matrix features;  ///< n_atom x d
  Matrix labels;    ///< n_atom x n_c, simplex rows
  int id = 0;

  DiscreteDistribution distribution() const { return DiscreteDistribution(features, labels); }
};

struct VersionTag {
  std::uint32_t round = 0;
  std::optional<int> client_id;  ///< nullopt: the server's global version

  bool operator==(const VersionTag&) const = default;
};

struct Dictionary {
  std::vector<Atom> atoms;
  VersionTag tag;

  std::size_t num_atoms() const { return atoms.size(); }
  Eigen::Index atom_size() const { return atoms.empty() ? 0 : atoms.front().features.rows(); }
  Eigen::Index dim() const { return atoms.empty() ? 0 : atoms.front().features.cols(); }
  Eigen::Index num_classes() const { return atoms.empty() ? 0 : atoms.front().labels.cols(); }

  /// Throws unless K >= 1, all atoms share shapes, and label rows are on the simplex.
  void validate() const;
  std::vector<DiscreteDistribution> distributions() const;

  bool operator==(const Dictionary& other) const;
};

/// Private per-client weights on the K-simplex.
class BarycentricCoordinates {
 public:
  static BarycentricCoordinates uniform(std::size_t k);
  /// Throws if the weights are not on the simplex within 1e-9.
  explicit BarycentricCoordinates(std::vector<double> weights);

  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t k) const { return weights_[k]; }

  bool operator==(const BarycentricCoordinates&) const = default;

 private:
  std::vector<double> weights_;
};

enum class DomainRole { Source, Target };

struct ClientDataset {
  std::string name;
  DomainRole role = DomainRole::Source;
  Matrix features;               ///< n x d
  std::optional<Matrix> labels;  ///< one-hot n x n_c; absent for the target

  Eigen::Index size() const { return features.rows(); }
  /// Sources must carry one-hot labels; the target must not carry any.
  void validate() const;
  DiscreteDistribution rows(std::span<const Eigen::Index> idx) const;
};

struct LossConfig {
  BarycenterConfig barycenter;
  /// Label weight beta for the labeled cost. Unset: the mean feature cost of the pair.
  std::optional<double> beta;
  SolverConfig solver;
};

/// Everything the loss depends on once every transport plan is frozen.
struct LossLinearization {
  Barycenter barycenter;
  TransportPlan data_plan;  ///< batch rows x barycenter rows
  double beta = 0.0;        ///< label weight used against the batch (0 when unlabeled)
  bool labeled = false;
  double loss = 0.0;
};

struct LossGradients {
  std::vector<Matrix> features;  ///< per atom, n_atom x d
  std::vector<Matrix> labels;    ///< per atom, n_atom x n_c (zero on the unlabeled branch)
  std::vector<double> alpha;
  LossLinearization linearization;
};

/// W_c(batch, B(alpha; D)) for a labeled batch, W_2 on features otherwise.
double local_loss(const DiscreteDistribution& batch, const BarycentricCoordinates& alpha,
                  const Dictionary& dict, const LossConfig& cfg = {});

LossLinearization linearize_loss(const DiscreteDistribution& batch, const BarycentricCoordinates& alpha,
                                 const Dictionary& dict, const LossConfig& cfg = {});

/// Envelope gradients: plans are held at their optima and the loss is
/// differentiated through the last fixed-point map of the barycenter.
LossGradients loss_gradients(const DiscreteDistribution& batch, const BarycentricCoordinates& alpha,
                             const Dictionary& dict, const LossConfig& cfg = {});

struct ClientUpdateConfig {
  int epochs = 1;
  std::optional<int> batches_per_epoch;  ///< unset: floor(n / batch_size), at least 1
  Eigen::Index batch_size = 64;
  double lr = 0.1;
  /// Step size for the coordinates; unset means lr.
  std::optional<double> alpha_lr;
  LossConfig loss;
  std::uint64_t seed = 0;
};

struct ClientUpdateResult {
  Dictionary dictionary;
  BarycentricCoordinates alpha;
  std::vector<double> epoch_mean_loss;
};

/// Local epochs of projected gradient descent on a copy of the dictionary and
/// on the client's own coordinates.
ClientUpdateResult client_update(const Dictionary& local, const BarycentricCoordinates& alpha,
                                 const ClientDataset& data, const ClientUpdateConfig& cfg);

}  // namespace feddadil
