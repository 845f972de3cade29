#pragma once

// Run directory layout:
//   config.ini                 resolved configuration (the run is self-describing)
//   data/domains.csv           client data; the target rows carry no labels
//   truth/target_labels.csv    hidden target labels, read only by evaluation
//   metrics.csv                round,client_id,local_loss,drift,wallclock_ms
//   dictionary.bin             final global dictionary
//   clients/index.csv          id,name,role
//   clients/alpha_<id>.csv     final coordinates of each client
//   eval.json, models/         written by eval
//   drift.csv, drift.json      written by drift
//
// Every command throws on failure; the CLI turns that into a nonzero exit.

#include <filesystem>
#include <optional>
#include <vector>

#include "feddadil/experiment.hpp"

namespace feddadil {

namespace run_layout {
inline constexpr const char* kConfig = "config.ini";
inline constexpr const char* kData = "data/domains.csv";
inline constexpr const char* kTruth = "truth/target_labels.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kDictionary = "dictionary.bin";
inline constexpr const char* kClientIndex = "clients/index.csv";
std::filesystem::path alpha_file(const std::filesystem::path& run, int client_id);
}  // namespace run_layout

/// Writes config.ini, data/ and (when labels are known) truth/.
void cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& run);

/// Trains from data/domains.csv, generating it first when absent. Never opens truth/.
TrainingOutcome cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& run);

AdaptationScores cmd_eval(const std::filesystem::path& run);

struct DriftSummary {
  std::vector<std::uint32_t> rounds;
  std::vector<double> drift;
  double early_mean = 0.0;   ///< mean over rounds 1..10
  double late_slope = 0.0;   ///< Theil-Sen slope over the last 75% of rounds
};
DriftSummary cmd_drift(const std::filesystem::path& run);

/// For every run under `dir` (or `dir` itself) writes figdata/dil_loss_E<E>.csv
/// and figdata/drift_E<E>.csv. Returns the files written.
std::vector<std::filesystem::path> cmd_figdata(const std::filesystem::path& dir);

struct GlobalRound {
  std::uint32_t round = 0;
  double dil_loss = 0.0;
  std::optional<double> drift;
};
/// The per-round summary rows of a metrics file.
std::vector<GlobalRound> read_global_metrics(const std::filesystem::path& metrics_csv);

}  // namespace feddadil
