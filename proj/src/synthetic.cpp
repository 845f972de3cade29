#include "feddadil/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace feddadil {

void SyntheticBenchmarkSpec::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("synthetic benchmark: " + what); };
  if (n_domains < 2) fail("domains must be >= 2");
  if (classes < 2) fail("classes must be >= 2");
  if (dim < 2) fail("dim must be >= 2");
  if (samples_per_domain < 1) fail("samples must be >= 1");
  if (rotation_deg.size() != static_cast<std::size_t>(n_domains)) fail("rotations needs one angle per domain");
  if (noise.size() != static_cast<std::size_t>(n_domains)) fail("noise needs one value per domain");
  for (double s : noise) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail("noise values must be finite and >= 0");
  }
  for (double a : rotation_deg) {
    if (!std::isfinite(a)) fail("rotations must be finite");
  }
  if (!translation.empty()) {
    if (translation.size() != static_cast<std::size_t>(n_domains)) fail("translations needs one vector per domain");
    for (const auto& t : translation) {
      if (t.size() != static_cast<std::size_t>(dim)) fail("each translation needs dim entries");
    }
  }
  // Means are equally spaced on a circle, so they are distinct iff the radius is positive.
  if (!(class_radius > 0.0) || !std::isfinite(class_radius)) fail("class_radius must be > 0");
  if (!(class_spread >= 0.0) || !std::isfinite(class_spread)) fail("class_spread must be >= 0");
  if (target_domain < 0 || target_domain >= n_domains) fail("target must index a domain");
}

SyntheticData generate_synthetic(const SyntheticBenchmarkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, spec.classes - 1);

  Matrix means = Matrix::Zero(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) {
    const double t = 2.0 * std::numbers::pi * c / spec.classes;
    means(c, 0) = spec.class_radius * std::cos(t);
    means(c, 1) = spec.class_radius * std::sin(t);
  }

  SyntheticData out;
  for (int l = 0; l < spec.n_domains; ++l) {
    const double a = spec.rotation_deg[static_cast<std::size_t>(l)] * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double spread = spec.class_spread * spec.noise[static_cast<std::size_t>(l)];
    const auto n = spec.samples_per_domain;

    Matrix x(n, spec.dim);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int c = pick_class(rng);
      y[static_cast<std::size_t>(i)] = c;
      for (int j = 0; j < spec.dim; ++j) x(i, j) = means(c, j) + spread * normal(rng);
      const double u = x(i, 0), v = x(i, 1);
      x(i, 0) = ca * u - sa * v;
      x(i, 1) = sa * u + ca * v;
      if (!spec.translation.empty()) {
        for (int j = 0; j < spec.dim; ++j) x(i, j) += spec.translation[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
      }
    }

    ClientDataset ds;
    ds.name = "domain" + std::to_string(l);
    ds.features = std::move(x);
    if (l == spec.target_domain) {
      ds.role = DomainRole::Target;
      out.target_truth = std::move(y);
    } else {
      ds.role = DomainRole::Source;
      ds.labels = one_hot(y, spec.classes);
    }
    out.domains.push_back(std::move(ds));
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(i, c) > m(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Matrix one_hot(const std::vector<int>& labels, int classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw std::out_of_range("one_hot: label out of range");
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return m;
}

}  // namespace feddadil
