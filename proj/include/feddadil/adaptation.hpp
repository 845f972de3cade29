#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "feddadil/dictionary.hpp"

namespace feddadil {

struct ClassifierConfig {
  int epochs = 300;
  double lr = 0.1;
};

/// Multinomial logistic regression.
struct LinearClassifier {
  Matrix weights;  ///< d x n_c
  Vector bias;     ///< n_c
  std::vector<double> loss_trace;  ///< training loss before the first and after every epoch

  Matrix predict_proba(const Matrix& x) const;
  /// Row argmax, lowest class index on ties.
  std::vector<int> predict(const Matrix& x) const;

  /// u32 d, u32 n_c, then weights (row-major) and bias as f64, all little-endian.
  void save(std::ostream& out) const;
  static LinearClassifier load(std::istream& in);
};

/// Full-batch gradient descent on mean cross-entropy from zero weights. A step
/// that would raise the loss is rejected and the step size halved.
LinearClassifier train_classifier(const Matrix& x, const Matrix& y_onehot, const ClassifierConfig& cfg = {});

/// Index of the largest entry per row; ties go to the lowest index.
std::vector<int> hard_labels(const Matrix& soft);

struct Reconstruction {
  DiscreteDistribution synthesized;
  std::vector<int> labels;
  LinearClassifier classifier;
};

/// Trains on the labeled barycenter of the full atoms at the target's coordinates.
Reconstruction feddadil_r(const Dictionary& dict, const BarycentricCoordinates& alpha_t,
                          const BarycenterConfig& barycenter = {}, const ClassifierConfig& classifier = {});

struct EnsemblePrediction {
  std::vector<Matrix> per_atom;  ///< probabilities of each atom's classifier
  Matrix mixture;                ///< sum_k alpha_k * per_atom[k]
  std::vector<int> labels;
};

/// One classifier per atom, mixed with the target's coordinates.
EnsemblePrediction feddadil_e(const Dictionary& dict, const BarycentricCoordinates& alpha_t, const Matrix& target_x,
                              const ClassifierConfig& classifier = {});

/// Classifier trained on the pooled labeled sources.
LinearClassifier source_only(std::span<const ClientDataset> sources, const ClassifierConfig& classifier = {});

/// Fraction of matching entries.
double evaluate_accuracy(std::span<const int> predicted, std::span<const int> truth);

}  // namespace feddadil
