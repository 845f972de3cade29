#include "feddadil/federation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <numeric>

#include "feddadil/simplex.hpp"

namespace feddadil {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t round_seed(std::uint64_t base, int client, std::uint32_t round) {
  return splitmix64(splitmix64(splitmix64(base) ^ static_cast<std::uint64_t>(client)) ^ round);
}

// First `count` entries of a seeded partial Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

void check_same_shape(const wire::AtomRows& a, const wire::AtomRows& b) {
  if (a.num_atoms != b.num_atoms || a.batch_size != b.batch_size || a.dim != b.dim ||
      a.num_classes != b.num_classes) {
    throw std::invalid_argument("server_aggregate: versions have different shapes");
  }
  for (std::size_t k = 0; k < a.atoms.size(); ++k) {
    if (a.atoms[k].indices != b.atoms[k].indices) {
      throw std::invalid_argument("server_aggregate: versions cover different atom rows");
    }
  }
}

}  // namespace

ServerState server_init(std::size_t k, Eigen::Index n_atom, Eigen::Index d, Eigen::Index n_c, double sigma0,
                        std::uint64_t seed, double label_noise) {
  if (k < 1 || n_atom < 1 || d < 1 || n_c < 1) throw std::invalid_argument("server_init: all dimensions must be >= 1");
  if (!(sigma0 >= 0.0) || !std::isfinite(sigma0)) throw std::invalid_argument("server_init: sigma0 must be >= 0");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw std::invalid_argument("server_init: label noise must be in [0, 1]");

  ServerState s;
  s.seed = seed;
  s.rng.seed(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (std::size_t a = 0; a < k; ++a) {
    Atom atom;
    atom.id = static_cast<int>(a);
    atom.features = Matrix::Zero(n_atom, d);
    if (sigma0 > 0.0) {
      for (Eigen::Index i = 0; i < atom.features.size(); ++i) atom.features.data()[i] = sigma0 * normal(s.rng);
    }
    atom.labels.resize(n_atom, n_c);
    for (Eigen::Index i = 0; i < n_atom; ++i) {
      std::vector<double> noise(static_cast<std::size_t>(n_c));
      double total = 0.0;
      for (auto& g : noise) total += (g = gamma(s.rng));
      std::vector<double> row(noise.size());
      for (std::size_t c = 0; c < row.size(); ++c) {
        row[c] = 1.0 / static_cast<double>(n_c) + label_noise * noise[c] / total;
      }
      row = project_to_simplex(row);
      for (Eigen::Index c = 0; c < n_c; ++c) atom.labels(i, c) = row[static_cast<std::size_t>(c)];
    }
    s.global.atoms.push_back(std::move(atom));
  }
  s.global.tag = {0, std::nullopt};
  return s;
}

std::vector<int> sample_clients(std::span<const ClientInfo> registry, double fraction, std::mt19937_64& rng) {
  if (registry.empty()) throw std::invalid_argument("sample_clients: empty registry");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("sample_clients: fraction must be in (0, 1]");

  const auto total = registry.size();
  const auto count = std::min(total, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-12)));
  std::vector<int> chosen;
  std::vector<int> others;
  for (const auto& c : registry) (c.role == DomainRole::Target ? chosen : others).push_back(c.id);
  std::sort(others.begin(), others.end());
  const std::size_t fill = count > chosen.size() ? count - chosen.size() : 0;
  for (auto i : draw_without_replacement(others.size(), std::min(fill, others.size()), rng)) chosen.push_back(others[i]);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

wire::AtomRows gather_atom_rows(const Dictionary& dict, const std::vector<std::vector<std::uint32_t>>& indices) {
  if (indices.size() != dict.num_atoms()) throw std::invalid_argument("gather_atom_rows: one index list per atom");
  wire::AtomRows rows;
  rows.num_atoms = static_cast<std::uint32_t>(dict.num_atoms());
  rows.batch_size = static_cast<std::uint32_t>(indices.empty() ? 0 : indices.front().size());
  rows.dim = static_cast<std::uint32_t>(dict.dim());
  rows.num_classes = static_cast<std::uint32_t>(dict.num_classes());
  for (std::size_t k = 0; k < dict.num_atoms(); ++k) {
    const auto& atom = dict.atoms[k];
    if (indices[k].size() != rows.batch_size) throw std::invalid_argument("gather_atom_rows: ragged index lists");
    wire::AtomRowBlock block;
    block.indices = indices[k];
    block.features.resize(rows.batch_size, atom.features.cols());
    block.labels.resize(rows.batch_size, atom.labels.cols());
    for (std::size_t r = 0; r < indices[k].size(); ++r) {
      const auto src = static_cast<Eigen::Index>(indices[k][r]);
      if (src >= atom.features.rows()) throw std::out_of_range("gather_atom_rows: row index past atom size");
      block.features.row(static_cast<Eigen::Index>(r)) = atom.features.row(src);
      block.labels.row(static_cast<Eigen::Index>(r)) = atom.labels.row(src);
    }
    rows.atoms.push_back(std::move(block));
  }
  return rows;
}

wire::AtomRows sample_atom_rows(const Dictionary& dict, Eigen::Index n_b, std::mt19937_64& rng) {
  if (n_b < 1 || n_b > dict.atom_size()) {
    throw std::invalid_argument("sample_atom_rows: batch size " + std::to_string(n_b) + " not in [1, " +
                                std::to_string(dict.atom_size()) + "]");
  }
  std::vector<std::vector<std::uint32_t>> indices;
  for (std::size_t k = 0; k < dict.num_atoms(); ++k) {
    auto drawn = draw_without_replacement(static_cast<std::size_t>(dict.atom_size()), static_cast<std::size_t>(n_b), rng);
    std::sort(drawn.begin(), drawn.end());
    indices.emplace_back(drawn.begin(), drawn.end());
  }
  return gather_atom_rows(dict, indices);
}

Dictionary rows_to_dictionary(const wire::AtomRows& rows, VersionTag tag) {
  Dictionary d;
  d.tag = tag;
  for (std::size_t k = 0; k < rows.atoms.size(); ++k) {
    d.atoms.push_back({rows.atoms[k].features, rows.atoms[k].labels, static_cast<int>(k)});
  }
  return d;
}

std::vector<OutboundMessage> broadcast_atom_batch(const ServerState& state, std::span<const int> clients,
                                                  Eigen::Index n_b, std::mt19937_64& rng) {
  const auto payload = wire::encode_atom_rows(sample_atom_rows(state.global, n_b, rng));
  std::vector<OutboundMessage> out;
  for (int id : clients) out.push_back({id, {wire::MessageType::AtomBatch, state.round + 1, payload}});
  return out;
}

Aggregation server_aggregate(const Dictionary& global, std::span<const wire::AtomRows> versions,
                             std::mt19937_64& rng) {
  if (versions.empty()) throw std::invalid_argument("server_aggregate: no versions");
  for (const auto& v : versions.subspan(1)) check_same_shape(versions.front(), v);
  const auto& first = versions.front();
  if (first.num_atoms != global.num_atoms() || first.dim != global.dim() || first.num_classes != global.num_classes()) {
    throw std::invalid_argument("server_aggregate: versions do not match the global dictionary");
  }

  std::uniform_int_distribution<std::size_t> pick(0, versions.size() - 1);
  Aggregation out{global, pick(rng)};
  const auto& chosen = versions[out.selected];
  for (std::size_t k = 0; k < chosen.atoms.size(); ++k) {
    const auto& block = chosen.atoms[k];
    auto& atom = out.global.atoms[k];
    for (std::size_t r = 0; r < block.indices.size(); ++r) {
      const auto dst = static_cast<Eigen::Index>(block.indices[r]);
      if (dst >= atom.features.rows()) throw std::out_of_range("server_aggregate: row index past atom size");
      atom.features.row(dst) = block.features.row(static_cast<Eigen::Index>(r));
      atom.labels.row(dst) = block.labels.row(static_cast<Eigen::Index>(r));
    }
  }
  return out;
}

DriftReport compute_drift(std::span<const Dictionary> versions, const GroundCost& ground) {
  if (versions.size() < 2) throw std::invalid_argument("compute_drift: need at least two versions");
  const auto& ref = versions.front();
  for (const auto& v : versions) {
    if (v.num_atoms() != ref.num_atoms() || v.atom_size() != ref.atom_size() || v.dim() != ref.dim() ||
        v.num_classes() != ref.num_classes()) {
      throw std::invalid_argument("compute_drift: versions have different shapes");
    }
  }
  const auto k_atoms = ref.num_atoms();
  std::vector<std::vector<DiscreteDistribution>> dists;
  for (const auto& v : versions) dists.push_back(v.distributions());

  DriftReport report;
  for (std::size_t a = 0; a < versions.size(); ++a) {
    for (std::size_t b = a + 1; b < versions.size(); ++b) {
      for (std::size_t k = 0; k < k_atoms; ++k) {
        const double w = wasserstein(dists[a][k], dists[b][k], ground);
        report.terms.push_back({a, b, k, w});
        report.terms.push_back({b, a, k, w});
        report.drift += 2.0 * w / static_cast<double>(k_atoms);
      }
    }
  }
  return report;
}

double schedule_factor(const ClientTrainingConfig& cfg, std::uint32_t round) {
  if (cfg.total_rounds == 0) return 1.0;
  const double t = std::min(1.0, static_cast<double>(round > 0 ? round - 1 : 0) / static_cast<double>(cfg.total_rounds));
  return 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

ClientNode::ClientNode(int id, ClientDataset data, std::size_t num_atoms, ClientTrainingConfig cfg)
    : id_(id), data_(std::move(data)), cfg_(std::move(cfg)), alpha_(BarycentricCoordinates::uniform(num_atoms)) {
  data_.validate();
  const auto n = data_.size();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(round_seed(cfg_.update.seed, id_, 0));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto m = cfg_.eval_size > 0 ? std::min(cfg_.eval_size, n) : n;
  eval_rows_.assign(perm.begin(), perm.begin() + m);
  std::sort(eval_rows_.begin(), eval_rows_.end());
  if (cfg_.random_alpha_init) {
    std::gamma_distribution<double> gamma(1.0, 1.0);
    std::vector<double> w(num_atoms);
    double total = 0.0;
    for (auto& v : w) total += (v = gamma(rng));
    for (auto& v : w) v /= total;
    alpha_ = BarycentricCoordinates(project_to_simplex(w));
  }
}

wire::Bytes ClientNode::train(const wire::RoundMessage& msg) {
  const auto rows = wire::decode_atom_rows(msg.payload);
  const auto local = rows_to_dictionary(rows, {msg.round, id_});
  if (local.num_atoms() != alpha_.size()) throw std::invalid_argument("atom batch carries the wrong number of atoms");

  ClientUpdateConfig update = cfg_.update;
  const double factor = schedule_factor(cfg_, msg.round);
  update.lr = factor * cfg_.update.lr;
  update.alpha_lr = factor * cfg_.update.alpha_lr.value_or(cfg_.update.lr);
  update.seed = round_seed(cfg_.update.seed, id_, msg.round);
  auto result = client_update(local, alpha_, data_, update);

  pending_ = result.alpha;
  last_loss_ = result.epoch_mean_loss.back();

  wire::AtomRows reply = rows;
  for (std::size_t k = 0; k < reply.atoms.size(); ++k) {
    reply.atoms[k].features = result.dictionary.atoms[k].features;
    reply.atoms[k].labels = result.dictionary.atoms[k].labels;
  }
  return wire::encode({wire::MessageType::AtomVersion, msg.round, wire::encode_atom_rows(reply)});
}

wire::Bytes ClientNode::handle(std::span<const std::uint8_t> frame) {
  const auto msg = wire::decode(frame);
  switch (msg.type) {
    case wire::MessageType::AtomBatch:
      pending_.reset();
      return train(msg);
    case wire::MessageType::RoundAck:
      if (wire::decode_ack(msg.payload) == wire::AckStatus::Commit && pending_) alpha_ = *pending_;
      pending_.reset();
      return wire::encode(msg);
    case wire::MessageType::Shutdown:
      pending_.reset();
      return wire::encode(msg);
    case wire::MessageType::AtomVersion:
      break;
  }
  throw wire::WireError("client received a message type it never handles");
}

double ClientNode::evaluate(const Dictionary& dict, const LossConfig& loss) const {
  return local_loss(data_.rows(eval_rows_), alpha_, dict, loss);
}

InProcessTransport::InProcessTransport(std::vector<ClientNode*> nodes) : nodes_(std::move(nodes)) {}

wire::Bytes InProcessTransport::exchange(int client_id, const wire::Bytes& request) {
  for (auto* node : nodes_) {
    if (node->id() == client_id) return node->handle(request);
  }
  throw TransportError("no client with id " + std::to_string(client_id));
}

Federation::Federation(ServerState initial, Transport& transport, FederationConfig cfg)
    : state_(std::move(initial)), transport_(transport), cfg_(std::move(cfg)) {
  state_.global.validate();
}

RoundMetrics Federation::run_round() {
  const auto sources = std::count_if(state_.registry.begin(), state_.registry.end(),
                                     [](const ClientInfo& c) { return c.role == DomainRole::Source; });
  const auto targets = static_cast<std::ptrdiff_t>(state_.registry.size()) - sources;
  if (sources < 1 || targets != 1) {
    throw std::invalid_argument("run_round: need at least one source client and exactly one target client");
  }

  ServerState next = state_;
  RoundMetrics metrics;
  metrics.round = next.round + 1;
  metrics.sampled = sample_clients(next.registry, cfg_.client_fraction, next.rng);
  const auto outbound = broadcast_atom_batch(next, metrics.sampled, cfg_.batch_size, next.rng);
  const auto expected = wire::decode_atom_rows(outbound.front().message.payload);

  std::vector<std::future<wire::Bytes>> pending;
  for (const auto& m : outbound) {
    auto frame = wire::encode(m.message);
    metrics.bytes_sent += frame.size();
    pending.push_back(std::async(std::launch::async, [this, id = m.client_id, f = std::move(frame)] {
      return transport_.exchange(id, f);
    }));
  }

  // Barrier: wait for every client before deciding the fate of the round.
  std::vector<wire::AtomRows> versions;
  std::vector<bool> answered(outbound.size(), false);
  std::optional<RoundError> failure;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const int id = outbound[i].client_id;
    try {
      const auto reply = pending[i].get();
      answered[i] = true;
      metrics.bytes_received += reply.size();
      const auto msg = wire::decode(reply);
      if (msg.type != wire::MessageType::AtomVersion || msg.round != metrics.round) {
        throw wire::WireError("unexpected reply to atom batch");
      }
      auto rows = wire::decode_atom_rows(msg.payload);
      check_same_shape(expected, rows);
      versions.push_back(std::move(rows));
    } catch (const std::exception& e) {
      if (!failure) failure.emplace(id, e.what());
    }
  }

  auto acknowledge = [&](wire::AckStatus status) {
    const wire::Bytes frame = wire::encode({wire::MessageType::RoundAck, metrics.round, wire::encode_ack(status)});
    for (std::size_t i = 0; i < outbound.size(); ++i) {
      if (!answered[i]) continue;
      try {
        transport_.exchange(outbound[i].client_id, frame);
      } catch (const std::exception& e) {
        if (status == wire::AckStatus::Commit && !failure) failure.emplace(outbound[i].client_id, e.what());
      }
    }
  };

  if (failure) {
    acknowledge(wire::AckStatus::Abort);
    throw *failure;
  }

  auto aggregated = server_aggregate(next.global, versions, next.rng);
  metrics.selected_client = metrics.sampled[aggregated.selected];
  if (cfg_.track_drift && versions.size() >= 2) {
    std::vector<Dictionary> dicts;
    for (const auto& v : versions) dicts.push_back(rows_to_dictionary(v));
    metrics.drift = compute_drift(dicts, cfg_.drift_cost);
  }
  next.global = std::move(aggregated.global);
  next.round = metrics.round;
  next.global.tag = {next.round, std::nullopt};

  acknowledge(wire::AckStatus::Commit);
  state_ = std::move(next);
  if (failure) throw *failure;
  return metrics;
}

void Federation::shutdown() {
  const wire::Bytes frame = wire::encode({wire::MessageType::Shutdown, state_.round, {}});
  for (const auto& c : state_.registry) transport_.exchange(c.id, frame);
}

}  // namespace feddadil
