#pragma once

#include <cstdint>
#include <vector>

#include "feddadil/dictionary.hpp"

namespace feddadil {

/// Gaussian class blobs whose means sit on a circle in the first two
/// coordinates; each domain applies its own rotation (in that plane),
/// translation and noise scale.
struct SyntheticBenchmarkSpec {
  int n_domains = 4;
  int classes = 5;
  int dim = 2;
  int samples_per_domain = 300;
  std::vector<double> rotation_deg{0.0, 15.0, 30.0, 45.0};
  std::vector<std::vector<double>> translation;  ///< per domain, empty means zero
  std::vector<double> noise{1.0, 1.0, 1.0, 1.0};  ///< per-domain multiplier on class_spread
  double class_radius = 4.0;
  double class_spread = 0.8;
  int target_domain = 3;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct SyntheticData {
  std::vector<ClientDataset> domains;
  std::vector<int> target_truth;  ///< hidden class indices of the target rows
};

SyntheticData generate_synthetic(const SyntheticBenchmarkSpec& spec, std::uint64_t seed);

/// Class index of each one-hot row.
std::vector<int> argmax_rows(const Matrix& m);
Matrix one_hot(const std::vector<int>& labels, int classes);

}  // namespace feddadil
