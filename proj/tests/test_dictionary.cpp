#include <cmath>
#include <random>

#include "doctest.h"
#include "feddadil/dictionary.hpp"
#include "feddadil/simplex.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace feddadil;

namespace {

ClientDataset blob_client(std::mt19937_64& rng, Eigen::Index n, bool labeled) {
  ClientDataset data;
  data.name = labeled ? "source" : "target";
  data.role = labeled ? DomainRole::Source : DomainRole::Target;
  data.features = oracle::random_points(rng, n, 2, 0.3);
  Matrix y = Matrix::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = i % 2;
    data.features(i, 0) += c == 0 ? -2.0 : 2.0;
    y(i, c) = 1.0;
  }
  if (labeled) data.labels = y;
  return data;
}

}  // namespace

TEST_CASE("simplex projection examples") {
  const std::vector<double> on{0.2, 0.3, 0.5};
  CHECK(project_to_simplex(on) == on);
  const auto third = project_to_simplex(std::vector<double>{0.5, 0.5, 0.5});
  for (double x : third) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto edge = project_to_simplex(std::vector<double>{1.1, -0.1});
  const auto grid = oracle::simplex_grid_search({1.1, -0.1}, 2000);
  CHECK(std::abs(edge[0] - grid[0]) <= 1e-3);
  CHECK(std::abs(edge[1] - grid[1]) <= 1e-3);
  CHECK_THROWS_AS(project_to_simplex(std::vector<double>{std::nan(""), 1.0}), std::invalid_argument);
}

TEST_CASE("simplex projection property: idempotent, order preserving, near grid optimum") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> g(0.3, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<double> v(trial % 2 == 0 ? 2 : 3);
    for (auto& x : v) x = g(rng);
    const auto u = project_to_simplex(v);
    CHECK(on_simplex(u, 1e-12));
    CHECK(project_to_simplex(u) == u);
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j)
        if (v[i] >= v[j]) CHECK(u[i] >= u[j]);
    const auto best = oracle::simplex_grid_search(v, 1000);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(u[i] - best[i]) <= 1e-3);
  }
}

TEST_CASE("local loss is zero when the single atom equals the batch") {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_points(rng, 6, 2);
  const Matrix y = oracle::random_one_hot(rng, 6, 3);
  Dictionary dict;
  dict.atoms.push_back({x, y, 0});
  const auto alpha = BarycentricCoordinates::uniform(1);
  CHECK(local_loss(DiscreteDistribution(x, y), alpha, dict) <= 1e-9);
  CHECK(local_loss(DiscreteDistribution(x), alpha, dict) <= 1e-9);
}

TEST_CASE("unlabeled branch recomposes from barycenter and wasserstein") {
  std::mt19937_64 rng(2);
  const auto dict = oracle::random_dictionary(rng, 3, 5, 2, 3);
  const BarycentricCoordinates alpha(oracle::random_simplex(rng, 3));
  const DiscreteDistribution batch(oracle::random_points(rng, 5, 2, 2.0));
  const LossConfig cfg{.beta = 1.0};
  const auto bary = free_support_barycenter(dict.distributions(), alpha.weights(), {.label_weight = 1.0});
  const double expected = oracle::assignment_brute_force(cost_matrix(batch, DiscreteDistribution(bary.distribution.support())).entries);
  CHECK(local_loss(batch, alpha, dict, cfg) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("one-hot alpha reduces the loss to a pairwise distance") {
  std::mt19937_64 rng(3);
  const auto dict = oracle::random_dictionary(rng, 3, 6, 2, 3);
  const DiscreteDistribution batch(oracle::random_points(rng, 6, 2), oracle::random_one_hot(rng, 6, 3));
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> w(3, 0.0);
    w[k] = 1.0;
    const double loss = local_loss(batch, BarycentricCoordinates(w), dict, {.beta = 0.5});
    const double direct = wasserstein(batch, dict.atoms[k].distribution(), {CostKind::FeaturesAndLabels, 0.5});
    CHECK(loss == doctest::Approx(direct).epsilon(1e-6));
  }
}

TEST_CASE("loss rejects mismatched shapes") {
  std::mt19937_64 rng(4);
  const auto dict = oracle::random_dictionary(rng, 2, 4, 2, 3);
  CHECK_THROWS_AS(local_loss(DiscreteDistribution(oracle::random_points(rng, 4, 3)), BarycentricCoordinates::uniform(2), dict),
                  std::invalid_argument);
  CHECK_THROWS_AS(local_loss(DiscreteDistribution(oracle::random_points(rng, 4, 2)), BarycentricCoordinates::uniform(3), dict),
                  std::invalid_argument);
  CHECK_THROWS_AS(local_loss(DiscreteDistribution(oracle::random_points(rng, 4, 2), oracle::random_one_hot(rng, 4, 2)),
                             BarycentricCoordinates::uniform(2), dict),
                  std::invalid_argument);
}

TEST_CASE("feature gradients vanish when the batch is the barycenter") {
  std::mt19937_64 rng(5);
  const auto dict = oracle::random_dictionary(rng, 2, 6, 2, 2);
  const BarycentricCoordinates alpha(std::vector<double>{0.4, 0.6});
  const LossConfig cfg{.beta = 1.0};
  const auto bary = free_support_barycenter(dict.distributions(), alpha.weights(), {.label_weight = 1.0});
  const DiscreteDistribution batch(bary.distribution.support());
  const auto g = loss_gradients(batch, alpha, dict, cfg);
  for (const auto& gf : g.features) CHECK(gf.norm() <= 1e-6);
}

TEST_CASE("frozen-plan gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto labeled = oracle::check_frozen_gradients(seed, true);
    CHECK(labeled.base_mismatch <= 1e-10);
    CHECK(labeled.features <= 1e-4);
    CHECK(labeled.labels <= 1e-4);
    CHECK(labeled.alpha <= 1e-4);
    const auto unlabeled = oracle::check_frozen_gradients(seed + 100, false);
    CHECK(unlabeled.base_mismatch <= 1e-10);
    CHECK(unlabeled.features <= 1e-4);
    CHECK(unlabeled.alpha <= 1e-4);
  }
}

TEST_CASE("alpha gradient matches re-solved loss along the simplex tangent") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 20 && checked < 8; ++seed) {
    std::mt19937_64 rng(seed);
    const auto dict = oracle::random_dictionary(rng, 2, 5, 2, 2);
    const std::vector<double> w{0.45, 0.55};
    const DiscreteDistribution batch(oracle::random_points(rng, 5, 2, 2.0), oracle::random_one_hot(rng, 5, 2));
    const LossConfig cfg{.beta = 1.0};
    const auto g = loss_gradients(batch, BarycentricCoordinates(w), dict, cfg);
    const double h = 1e-6;
    const double s = h / std::sqrt(2.0);
    const double up = local_loss(batch, BarycentricCoordinates({w[0] + s, w[1] - s}), dict, cfg);
    const double down = local_loss(batch, BarycentricCoordinates({w[0] - s, w[1] + s}), dict, cfg);
    const double fd = (up - down) / (2 * h);
    const double analytic = (g.alpha[0] - g.alpha[1]) / std::sqrt(2.0);
    CHECK(oracle::rel_error(analytic, fd, 1e-6) <= 5e-2);
    ++checked;
  }
  CHECK(checked == 8);
}

TEST_CASE("client_update with zero learning rate is the identity") {
  std::mt19937_64 rng(6);
  auto dict = oracle::random_dictionary(rng, 2, 4, 2, 2);
  const auto alpha = BarycentricCoordinates(std::vector<double>{0.3, 0.7});
  const auto data = blob_client(rng, 20, true);
  const auto out = client_update(dict, alpha, data, {.epochs = 2, .batch_size = 4, .lr = 0.0, .loss = {.beta = 1.0}});
  CHECK(out.dictionary == dict);
  CHECK(out.alpha == alpha);
  CHECK(out.epoch_mean_loss.size() == 2);
}

TEST_CASE("single gradient step on a point mass") {
  Dictionary dict;
  dict.atoms.push_back({Matrix::Constant(1, 1, 0.0), Matrix::Constant(1, 2, 0.5), 0});
  ClientDataset data{"target", DomainRole::Target, Matrix::Constant(1, 1, 2.0), std::nullopt};
  const double lr = 0.1;
  const auto out = client_update(dict, BarycentricCoordinates::uniform(1), data,
                                 {.epochs = 1, .batches_per_epoch = 1, .batch_size = 1, .lr = lr});
  // loss = (x - 2)^2, so x <- x - lr * 2 (x - 2)
  CHECK(out.dictionary.atoms[0].features(0, 0) == doctest::Approx(0.0 - lr * 2.0 * (0.0 - 2.0)));
  CHECK(out.dictionary.atoms[0].labels == dict.atoms[0].labels);
  CHECK(out.alpha[0] == 1.0);
}

TEST_CASE("client_update decreases the local loss and keeps simplex invariants") {
  std::mt19937_64 rng(7);
  const auto dict = oracle::random_dictionary(rng, 2, 8, 2, 2);
  const auto data = blob_client(rng, 64, true);
  const auto out = client_update(dict, BarycentricCoordinates::uniform(2), data,
                                 {.epochs = 10, .batch_size = 8, .lr = 0.1, .loss = {.beta = 1.0}, .seed = 11});
  REQUIRE(out.epoch_mean_loss.size() == 10);
  CHECK(out.epoch_mean_loss.back() <= out.epoch_mean_loss.front() * 1.05);
  CHECK(on_simplex(out.alpha.weights(), 1e-9));
  for (const auto& a : out.dictionary.atoms) {
    for (Eigen::Index i = 0; i < a.labels.rows(); ++i) {
      const Eigen::VectorXd row = a.labels.row(i).transpose();
      CHECK(on_simplex({row.data(), static_cast<std::size_t>(row.size())}, 1e-6));
    }
  }
  // Reproducible given the seed.
  const auto again = client_update(dict, BarycentricCoordinates::uniform(2), data,
                                   {.epochs = 10, .batch_size = 8, .lr = 0.1, .loss = {.beta = 1.0}, .seed = 11});
  CHECK(again.dictionary == out.dictionary);
}

TEST_CASE("target updates leave atom labels untouched") {
  std::mt19937_64 rng(8);
  const auto dict = oracle::random_dictionary(rng, 2, 6, 2, 2);
  const auto data = blob_client(rng, 30, false);
  const auto out = client_update(dict, BarycentricCoordinates::uniform(2), data, {.epochs = 2, .batch_size = 6});
  for (std::size_t k = 0; k < 2; ++k) CHECK(out.dictionary.atoms[k].labels == dict.atoms[k].labels);
  CHECK_FALSE(out.dictionary.atoms[0].features == dict.atoms[0].features);
}

TEST_CASE("client_update input validation") {
  std::mt19937_64 rng(9);
  const auto dict = oracle::random_dictionary(rng, 2, 4, 2, 2);
  ClientDataset empty{"empty", DomainRole::Target, Matrix(0, 2), std::nullopt};
  CHECK_THROWS_AS(client_update(dict, BarycentricCoordinates::uniform(2), empty, {}), std::invalid_argument);
  const auto data = blob_client(rng, 8, true);
  CHECK_THROWS_AS(client_update(dict, BarycentricCoordinates::uniform(2), data, {.epochs = 0}), std::invalid_argument);
  CHECK_THROWS_AS(client_update(dict, BarycentricCoordinates::uniform(2), data, {.lr = -1.0}), std::invalid_argument);
}

TEST_CASE("dataset and coordinate invariants") {
  CHECK_THROWS_AS(BarycentricCoordinates(std::vector<double>{0.5, 0.6}), std::invalid_argument);
  ClientDataset target{"t", DomainRole::Target, Matrix::Zero(2, 2), Matrix::Identity(2, 2)};
  CHECK_THROWS_AS(target.validate(), std::invalid_argument);
  ClientDataset source{"s", DomainRole::Source, Matrix::Zero(2, 2), Matrix::Constant(2, 2, 0.5)};
  CHECK_THROWS_AS(source.validate(), std::invalid_argument);
  source.labels = Matrix::Identity(2, 2);
  CHECK_NOTHROW(source.validate());
}
