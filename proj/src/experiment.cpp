#include "feddadil/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace feddadil {

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) {
    throw std::invalid_argument(key + ": " + what);
  };
  if (num_atoms < 1) fail("atoms", "must be >= 1");
  if (atom_size < 1) fail("atom_size", "must be >= 1");
  if (atom_batch < 1 || atom_batch > atom_size) fail("atom_batch", "must be in [1, atom_size]");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) fail("init_scale", "must be >= 0");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) fail("label_noise", "must be in [0, 1]");
  if (rounds < 1) fail("rounds", "must be >= 1");
  if (local_epochs < 1) fail("local_epochs", "must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be >= 0");
  if (alpha_learning_rate && (!(*alpha_learning_rate >= 0.0) || !std::isfinite(*alpha_learning_rate))) {
    fail("alpha_learning_rate", "must be >= 0");
  }
  if (local_batch < 1) fail("local_batch", "must be >= 1");
  if (batches_per_epoch && *batches_per_epoch < 1) fail("batches_per_epoch", "must be >= 1");
  if (!(client_fraction > 0.0 && client_fraction <= 1.0)) fail("client_fraction", "must be in (0, 1]");
  if (label_weight && (!(*label_weight >= 0.0) || !std::isfinite(*label_weight))) fail("label_weight", "must be >= 0");
  if (eval_size < 1) fail("eval_size", "must be >= 1");
  if (barycenter_iterations < 1) fail("barycenter_iterations", "must be >= 1");
  if (classifier.epochs < 0) fail("classifier_epochs", "must be >= 0");
  if (!(classifier.lr > 0.0)) fail("classifier_learning_rate", "must be > 0");
  if (data.kind == DataSpec::Kind::Synthetic) {
    try {
      data.synthetic.validate();
    } catch (const std::invalid_argument& e) {
      fail("data", e.what());
    }
  } else if (data.csv.path.empty()) {
    fail("csv_path", "required for csv data");
  }
}

LossConfig loss_config(const ExperimentConfig& cfg) {
  LossConfig loss;
  loss.barycenter.fixed_point_iters = cfg.barycenter_iterations;
  loss.barycenter.inner_solver.kind = cfg.inner_solver;
  loss.barycenter.evaluate_final_objective = false;
  loss.barycenter.label_weight = cfg.label_weight;
  loss.beta = cfg.label_weight;
  loss.solver.kind = SolverKind::Exact;
  return loss;
}

TrainingOutcome run_federated_training(const ExperimentConfig& cfg, const std::vector<ClientDataset>& clients) {
  cfg.validate();
  if (clients.empty()) throw std::invalid_argument("run_federated_training: no clients");
  const auto d = clients.front().features.cols();
  Eigen::Index n_c = 0;
  int targets = 0;
  for (const auto& c : clients) {
    c.validate();
    if (c.features.cols() != d) throw std::invalid_argument("client '" + c.name + "' has a different feature dimension");
    if (c.labels) n_c = std::max(n_c, c.labels->cols());
    targets += c.role == DomainRole::Target;
  }
  if (targets != 1) throw std::invalid_argument("run_federated_training: exactly one target client required");
  if (n_c < 1) throw std::invalid_argument("run_federated_training: no labeled source client");

  ClientTrainingConfig client_cfg;
  client_cfg.update.epochs = cfg.local_epochs;
  client_cfg.update.batches_per_epoch = cfg.batches_per_epoch;
  client_cfg.update.batch_size = cfg.local_batch;
  client_cfg.update.lr = cfg.learning_rate;
  client_cfg.update.alpha_lr = cfg.alpha_learning_rate;
  client_cfg.update.loss = loss_config(cfg);
  client_cfg.update.seed = cfg.seed;
  client_cfg.total_rounds = cfg.cosine_schedule ? cfg.rounds : 0;
  client_cfg.eval_size = cfg.eval_size;
  client_cfg.random_alpha_init = cfg.random_alpha_init;

  std::vector<std::unique_ptr<ClientNode>> nodes;
  std::vector<ClientNode*> handles;
  ServerState state = server_init(cfg.num_atoms, cfg.atom_size, d, n_c, cfg.init_scale, cfg.seed, cfg.label_noise);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    nodes.push_back(std::make_unique<ClientNode>(static_cast<int>(i), clients[i], cfg.num_atoms, client_cfg));
    handles.push_back(nodes.back().get());
    state.registry.push_back({static_cast<int>(i), clients[i].role});
  }

  std::unique_ptr<Transport> transport;
  if (cfg.transport == TransportKind::Stream) {
    transport = std::make_unique<StreamTransport>(handles);
  } else {
    transport = std::make_unique<InProcessTransport>(handles);
  }

  FederationConfig fed_cfg;
  fed_cfg.client_fraction = cfg.client_fraction;
  fed_cfg.batch_size = cfg.atom_batch;
  fed_cfg.track_drift = cfg.track_drift;
  fed_cfg.drift_cost = {CostKind::FeaturesAndLabels, cfg.label_weight};
  Federation federation(std::move(state), *transport, fed_cfg);

  const auto eval_loss = loss_config(cfg);
  TrainingOutcome out;
  for (std::uint32_t r = 0; r < cfg.rounds; ++r) {
    const auto start = std::chrono::steady_clock::now();
    const auto m = federation.run_round();
    RoundRecord rec;
    rec.round = m.round;
    for (int id : m.sampled) rec.client_losses.emplace_back(id, *nodes[static_cast<std::size_t>(id)]->last_loss());
    if (m.drift) rec.drift = m.drift->drift;
    double total = 0.0;
    for (const auto& node : nodes) total += node->evaluate(federation.state().global, eval_loss);
    rec.global_loss = total / static_cast<double>(nodes.size());
    if (cfg.record_wallclock) {
      rec.wallclock_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    out.history.push_back(std::move(rec));
  }
  federation.shutdown();

  out.dictionary = federation.state().global;
  for (const auto& node : nodes) {
    out.alphas.emplace_back(node->id(), node->alpha());
    if (node->role() == DomainRole::Target) out.target_id = node->id();
  }
  return out;
}

AdaptationScores evaluate_adaptation(const ExperimentConfig& cfg, const Dictionary& dict,
                                     const BarycentricCoordinates& alpha_t, const std::vector<ClientDataset>& clients,
                                     const std::vector<int>& target_truth) {
  const ClientDataset* target = nullptr;
  for (const auto& c : clients) {
    if (c.role == DomainRole::Target) target = &c;
  }
  if (!target) throw std::invalid_argument("evaluate_adaptation: no target client");

  AdaptationScores s;
  s.source_only = evaluate_accuracy(source_only(clients, cfg.classifier).predict(target->features), target_truth);

  BarycenterConfig bc;
  bc.fixed_point_iters = cfg.barycenter_iterations;
  bc.inner_solver.kind = cfg.inner_solver;
  bc.label_weight = cfg.label_weight;
  const auto r = feddadil_r(dict, alpha_t, bc, cfg.classifier);
  s.reconstruction = evaluate_accuracy(r.classifier.predict(target->features), target_truth);
  s.ensemble = evaluate_accuracy(feddadil_e(dict, alpha_t, target->features, cfg.classifier).labels, target_truth);
  return s;
}

double theil_sen_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("theil_sen_slope: need >= 2 paired points");
  std::vector<double> slopes;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      if (x[j] != x[i]) slopes.push_back((y[j] - y[i]) / (x[j] - x[i]));
    }
  }
  if (slopes.empty()) throw std::invalid_argument("theil_sen_slope: all x values equal");
  std::sort(slopes.begin(), slopes.end());
  const auto m = slopes.size();
  return m % 2 ? slopes[m / 2] : 0.5 * (slopes[m / 2 - 1] + slopes[m / 2]);
}

}  // namespace feddadil
