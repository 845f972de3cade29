#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "feddadil/dictionary.hpp"
#include "feddadil/wire.hpp"

namespace feddadil {

struct ClientInfo {
  int id = 0;
  DomainRole role = DomainRole::Source;

  bool operator==(const ClientInfo&) const = default;
};

/// Everything the server owns. The generator is part of the state so an
/// aborted round can be rolled back completely.
struct ServerState {
  Dictionary global;
  std::uint32_t round = 0;
  std::vector<ClientInfo> registry;
  std::uint64_t seed = 0;
  std::mt19937_64 rng;

  bool operator==(const ServerState&) const = default;
};

/// Gaussian features scaled by sigma0. Label rows are (1 - label_noise) * uniform
/// + label_noise * Dirichlet(1).
ServerState server_init(std::size_t k, Eigen::Index n_atom, Eigen::Index d, Eigen::Index n_c, double sigma0,
                        std::uint64_t seed, double label_noise = 0.1);

/// ceil(fraction * N) distinct clients, ascending ids. The target, when
/// registered, is always part of the sample.
std::vector<int> sample_clients(std::span<const ClientInfo> registry, double fraction, std::mt19937_64& rng);

/// Draws n_b distinct rows per atom (ascending) and copies them out.
wire::AtomRows sample_atom_rows(const Dictionary& dict, Eigen::Index n_b, std::mt19937_64& rng);
/// The rows at explicit indices.
wire::AtomRows gather_atom_rows(const Dictionary& dict, const std::vector<std::vector<std::uint32_t>>& indices);
/// Mini-batch dictionary made of the transmitted rows.
Dictionary rows_to_dictionary(const wire::AtomRows& rows, VersionTag tag = {});

struct OutboundMessage {
  int client_id = 0;
  wire::RoundMessage message;
};

/// One AtomBatch per sampled client, all carrying the same rows.
std::vector<OutboundMessage> broadcast_atom_batch(const ServerState& state, std::span<const int> clients,
                                                  Eigen::Index n_b, std::mt19937_64& rng);

struct Aggregation {
  Dictionary global;
  std::size_t selected = 0;  ///< position in the versions list
};

/// Picks one version uniformly and writes its rows back into the global atoms.
Aggregation server_aggregate(const Dictionary& global, std::span<const wire::AtomRows> versions,
                             std::mt19937_64& rng);

struct DriftTerm {
  std::size_t first = 0;   ///< position of the first version
  std::size_t second = 0;  ///< position of the second version
  std::size_t atom = 0;
  double distance = 0.0;
};

struct DriftReport {
  double drift = 0.0;
  std::vector<DriftTerm> terms;  ///< every ordered pair and atom
};

/// Sum over ordered pairs of versions of the atom-averaged labeled distance.
DriftReport compute_drift(std::span<const Dictionary> versions,
                          const GroundCost& ground = {CostKind::FeaturesAndLabels, std::nullopt});

struct ClientTrainingConfig {
  ClientUpdateConfig update;
  /// When > 0 the step size follows a cosine decay over this many rounds.
  std::uint32_t total_rounds = 0;
  /// Points used by evaluate(); 0 means the whole dataset.
  Eigen::Index eval_size = 0;
  /// Start from a seeded Dirichlet(1) draw instead of uniform coordinates.
  bool random_alpha_init = false;
};

/// Multiplier applied to both step sizes in a given (1-based) round.
double schedule_factor(const ClientTrainingConfig& cfg, std::uint32_t round);

/// A client behind the wire. It only ever answers frames; its coordinates and
/// data stay inside the object.
class ClientNode {
 public:
  ClientNode(int id, ClientDataset data, std::size_t num_atoms, ClientTrainingConfig cfg);

  /// Consumes one request frame and returns the response frame.
  wire::Bytes handle(std::span<const std::uint8_t> frame);

  int id() const { return id_; }
  DomainRole role() const { return data_.role; }
  const ClientDataset& dataset() const { return data_; }
  const BarycentricCoordinates& alpha() const { return alpha_; }
  /// Mean loss of the last local epoch of the latest round.
  std::optional<double> last_loss() const { return last_loss_; }

  /// Local loss against a full dictionary on the fixed evaluation subset.
  double evaluate(const Dictionary& dict, const LossConfig& loss) const;

 private:
  wire::Bytes train(const wire::RoundMessage& msg);

  int id_;
  ClientDataset data_;
  ClientTrainingConfig cfg_;
  BarycentricCoordinates alpha_;
  std::optional<BarycentricCoordinates> pending_;
  std::optional<double> last_loss_;
  std::vector<Eigen::Index> eval_rows_;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Request/response channel from the server to each client.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual wire::Bytes exchange(int client_id, const wire::Bytes& request) = 0;
};

/// Hands frames straight to the client objects.
class InProcessTransport final : public Transport {
 public:
  explicit InProcessTransport(std::vector<ClientNode*> nodes);
  wire::Bytes exchange(int client_id, const wire::Bytes& request) override;

 private:
  std::vector<ClientNode*> nodes_;
};

/// One stream socket and one serving thread per client.
class StreamTransport final : public Transport {
 public:
  explicit StreamTransport(std::vector<ClientNode*> nodes);
  ~StreamTransport() override;
  StreamTransport(const StreamTransport&) = delete;
  StreamTransport& operator=(const StreamTransport&) = delete;

  wire::Bytes exchange(int client_id, const wire::Bytes& request) override;

 private:
  struct Connection;
  std::vector<std::unique_ptr<Connection>> connections_;
  Connection& find(int client_id);
};

class RoundError : public std::runtime_error {
 public:
  RoundError(int client_id, const std::string& what)
      : std::runtime_error("client " + std::to_string(client_id) + ": " + what), client_id_(client_id) {}
  int client_id() const { return client_id_; }

 private:
  int client_id_;
};

struct FederationConfig {
  double client_fraction = 1.0;
  Eigen::Index batch_size = 32;  ///< atom rows sent per round
  bool track_drift = true;
  GroundCost drift_cost{CostKind::FeaturesAndLabels, std::nullopt};
};

struct RoundMetrics {
  std::uint32_t round = 0;
  std::vector<int> sampled;
  int selected_client = 0;
  std::optional<DriftReport> drift;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
};

/// Drives rounds. Clients answer concurrently; all random draws happen here,
/// in client-id order.
class Federation {
 public:
  Federation(ServerState initial, Transport& transport, FederationConfig cfg);

  /// Runs one round. On any client failure the round is aborted, every
  /// participant is told to discard its pending update, the server state is
  /// left untouched, and RoundError is thrown. A client that fails to
  /// acknowledge a commit is reported after the new state is in place.
  RoundMetrics run_round();
  void shutdown();

  const ServerState& state() const { return state_; }

 private:
  ServerState state_;
  Transport& transport_;
  FederationConfig cfg_;
};

}  // namespace feddadil
