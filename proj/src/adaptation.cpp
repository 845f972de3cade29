#include "feddadil/adaptation.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "feddadil/synthetic.hpp"

namespace feddadil {

namespace {

Matrix softmax_rows(Matrix logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - m).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

double cross_entropy(const Matrix& x, const Matrix& y, const Matrix& w, const Vector& b) {
  Matrix logits = x * w;
  logits.rowwise() += b.transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse * y.row(i).sum() - logits.row(i).dot(y.row(i));
  }
  return total / static_cast<double>(x.rows());
}

template <typename T>
void write_le(std::ostream& out, T v) {
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw std::runtime_error("classifier file truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

Matrix LinearClassifier::predict_proba(const Matrix& x) const {
  if (x.cols() != weights.rows()) throw std::invalid_argument("predict_proba: feature dimension mismatch");
  Matrix logits = x * weights;
  logits.rowwise() += bias.transpose();
  return softmax_rows(std::move(logits));
}

std::vector<int> LinearClassifier::predict(const Matrix& x) const { return hard_labels(predict_proba(x)); }

void LinearClassifier::save(std::ostream& out) const {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(weights.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(weights.cols()));
  for (Eigen::Index i = 0; i < weights.size(); ++i) write_le(out, std::bit_cast<std::uint64_t>(weights.data()[i]));
  for (Eigen::Index i = 0; i < bias.size(); ++i) write_le(out, std::bit_cast<std::uint64_t>(bias[i]));
}

LinearClassifier LinearClassifier::load(std::istream& in) {
  LinearClassifier c;
  const auto d = read_le<std::uint32_t>(in);
  const auto nc = read_le<std::uint32_t>(in);
  c.weights.resize(d, nc);
  c.bias.resize(nc);
  for (Eigen::Index i = 0; i < c.weights.size(); ++i) c.weights.data()[i] = std::bit_cast<double>(read_le<std::uint64_t>(in));
  for (Eigen::Index i = 0; i < c.bias.size(); ++i) c.bias[i] = std::bit_cast<double>(read_le<std::uint64_t>(in));
  return c;
}

LinearClassifier train_classifier(const Matrix& x, const Matrix& y, const ClassifierConfig& cfg) {
  if (x.rows() < 1 || x.rows() != y.rows()) throw std::invalid_argument("train_classifier: shape mismatch");
  if (cfg.epochs < 0 || !(cfg.lr > 0.0)) throw std::invalid_argument("train_classifier: epochs >= 0 and lr > 0 required");
  int present = 0;
  for (Eigen::Index c = 0; c < y.cols(); ++c) present += y.col(c).sum() > 0.0;
  if (present < 2) throw std::invalid_argument("train_classifier: labels contain a single class");

  LinearClassifier clf{Matrix::Zero(x.cols(), y.cols()), Vector::Zero(y.cols()), {}};
  const double n = static_cast<double>(x.rows());
  double loss = cross_entropy(x, y, clf.weights, clf.bias);
  clf.loss_trace.push_back(loss);
  double lr = cfg.lr;
  for (int e = 0; e < cfg.epochs; ++e) {
    const Matrix residual = clf.predict_proba(x) - y;
    const Matrix gw = x.transpose() * residual / n;
    const Vector gb = residual.colwise().sum().transpose() / n;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Matrix w = clf.weights - lr * gw;
      Vector b = clf.bias - lr * gb;
      const double next = cross_entropy(x, y, w, b);
      if (next <= loss) {
        clf.weights = std::move(w);
        clf.bias = std::move(b);
        loss = next;
        break;
      }
      lr *= 0.5;
    }
    clf.loss_trace.push_back(loss);
  }
  return clf;
}

std::vector<int> hard_labels(const Matrix& soft) { return argmax_rows(soft); }

Reconstruction feddadil_r(const Dictionary& dict, const BarycentricCoordinates& alpha_t,
                          const BarycenterConfig& barycenter, const ClassifierConfig& classifier) {
  dict.validate();
  const auto atoms = dict.distributions();
  const auto bary = free_support_barycenter(atoms, alpha_t.weights(), barycenter);
  auto labels = hard_labels(*bary.distribution.labels());
  const Matrix y = one_hot(labels, static_cast<int>(dict.num_classes()));
  int present = 0;
  for (Eigen::Index c = 0; c < y.cols(); ++c) present += y.col(c).sum() > 0.0;
  if (present < 2) throw std::runtime_error("feddadil_r: synthesized barycenter carries a single class");
  auto clf = train_classifier(bary.distribution.support(), y, classifier);
  return {bary.distribution, std::move(labels), std::move(clf)};
}

EnsemblePrediction feddadil_e(const Dictionary& dict, const BarycentricCoordinates& alpha_t, const Matrix& target_x,
                              const ClassifierConfig& classifier) {
  dict.validate();
  if (alpha_t.size() != dict.num_atoms()) throw std::invalid_argument("feddadil_e: alpha size mismatch");
  EnsemblePrediction out;
  out.mixture = Matrix::Zero(target_x.rows(), dict.num_classes());
  for (std::size_t k = 0; k < dict.num_atoms(); ++k) {
    const auto& atom = dict.atoms[k];
    LinearClassifier clf;
    try {
      clf = train_classifier(atom.features, one_hot(hard_labels(atom.labels), static_cast<int>(dict.num_classes())),
                             classifier);
    } catch (const std::exception& e) {
      throw std::runtime_error("feddadil_e: atom " + std::to_string(atom.id) + ": " + e.what());
    }
    out.per_atom.push_back(clf.predict_proba(target_x));
    out.mixture += alpha_t[k] * out.per_atom.back();
  }
  out.labels = hard_labels(out.mixture);
  return out;
}

LinearClassifier source_only(std::span<const ClientDataset> sources, const ClassifierConfig& classifier) {
  Eigen::Index rows = 0;
  Eigen::Index d = -1, nc = -1;
  for (const auto& s : sources) {
    if (s.role != DomainRole::Source || !s.labels) continue;
    if (d < 0) {
      d = s.features.cols();
      nc = s.labels->cols();
    }
    if (s.features.cols() != d || s.labels->cols() != nc) throw std::invalid_argument("source_only: inconsistent shapes");
    rows += s.size();
  }
  if (rows == 0) throw std::invalid_argument("source_only: no labeled source data");
  Matrix x(rows, d), y(rows, nc);
  Eigen::Index at = 0;
  for (const auto& s : sources) {
    if (s.role != DomainRole::Source || !s.labels) continue;
    x.middleRows(at, s.size()) = s.features;
    y.middleRows(at, s.size()) = *s.labels;
    at += s.size();
  }
  return train_classifier(x, y, classifier);
}

double evaluate_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.empty()) throw std::invalid_argument("evaluate_accuracy: empty input");
  if (predicted.size() != truth.size()) throw std::invalid_argument("evaluate_accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace feddadil
