#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "feddadil/adaptation.hpp"
#include "feddadil/federation.hpp"
#include "feddadil/synthetic.hpp"

namespace feddadil {

enum class TransportKind { InProcess, Stream };

struct CsvSpec {
  std::string path;
  std::string domain_column = "domain";
  std::string label_column = "label";
  std::string target;  ///< value of the domain column that marks the target
};

struct DataSpec {
  enum class Kind { Synthetic, Csv } kind = Kind::Synthetic;
  SyntheticBenchmarkSpec synthetic;
  CsvSpec csv;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;

  std::size_t num_atoms = 3;
  Eigen::Index atom_size = 64;
  Eigen::Index atom_batch = 32;
  double init_scale = 3.0;
  double label_noise = 0.1;

  std::uint32_t rounds = 100;
  int local_epochs = 5;
  double learning_rate = 4.0;
  std::optional<double> alpha_learning_rate = 0.02;
  bool random_alpha_init = true;
  Eigen::Index local_batch = 300;
  std::optional<int> batches_per_epoch;
  double client_fraction = 1.0;
  std::optional<double> label_weight = 5.0;
  bool cosine_schedule = true;
  TransportKind transport = TransportKind::InProcess;
  bool record_wallclock = false;
  Eigen::Index eval_size = 300;
  bool track_drift = true;

  int barycenter_iterations = 10;
  SolverKind inner_solver = SolverKind::Exact;

  DataSpec data;
  ClassifierConfig classifier;

  /// Throws std::invalid_argument naming the offending setting.
  void validate() const;
};

struct RoundRecord {
  std::uint32_t round = 0;
  std::vector<std::pair<int, double>> client_losses;
  std::optional<double> drift;
  double global_loss = 0.0;
  std::optional<double> wallclock_ms;
};

struct TrainingOutcome {
  Dictionary dictionary;
  std::vector<std::pair<int, BarycentricCoordinates>> alphas;  ///< by client id
  std::vector<RoundRecord> history;
  int target_id = -1;
};

/// Loss settings shared by client updates and the global loss.
LossConfig loss_config(const ExperimentConfig& cfg);

/// Client i gets id i. Exactly one dataset must be the target.
TrainingOutcome run_federated_training(const ExperimentConfig& cfg, const std::vector<ClientDataset>& clients);

struct AdaptationScores {
  double source_only = 0.0;
  double reconstruction = 0.0;  ///< FedDaDiL-R
  double ensemble = 0.0;        ///< FedDaDiL-E
};

AdaptationScores evaluate_adaptation(const ExperimentConfig& cfg, const Dictionary& dict,
                                     const BarycentricCoordinates& alpha_t, const std::vector<ClientDataset>& clients,
                                     const std::vector<int>& target_truth);

/// Median of pairwise slopes.
double theil_sen_slope(std::span<const double> x, std::span<const double> y);

}  // namespace feddadil
