#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <random>

#include "doctest.h"
#include "feddadil/federation.hpp"
#include "feddadil/simplex.hpp"
#include "oracles.hpp"
#include "wire_probe.hpp"

using namespace feddadil;

namespace {

ClientDataset blob_client(std::mt19937_64& rng, const std::string& name, DomainRole role, Eigen::Index n,
                          Eigen::Index d, Eigen::Index nc, double shift) {
  ClientDataset c;
  c.name = name;
  c.role = role;
  c.features = oracle::random_points(rng, n, d);
  c.features.col(0).array() += shift;
  if (role == DomainRole::Source) c.labels = oracle::random_one_hot(rng, n, nc);
  return c;
}

ClientTrainingConfig small_training(double lr = 0.1, int epochs = 1) {
  ClientTrainingConfig cfg;
  cfg.update.epochs = epochs;
  cfg.update.lr = lr;
  cfg.update.batch_size = 8;
  cfg.update.seed = 5;
  cfg.update.loss.barycenter.fixed_point_iters = 3;
  cfg.eval_size = 8;
  return cfg;
}

struct Setup {
  std::vector<std::unique_ptr<ClientNode>> nodes;
  std::vector<ClientNode*> handles;
  ServerState state;
};

Setup make_setup(std::vector<ClientDataset> data, std::size_t k, Eigen::Index n_atom, const ClientTrainingConfig& cfg,
                 std::uint64_t seed = 7) {
  Setup s;
  const auto d = data.front().features.cols();
  Eigen::Index nc = 0;
  for (const auto& c : data) {
    if (c.labels) nc = c.labels->cols();
  }
  s.state = server_init(k, n_atom, d, nc, 1.0, seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.state.registry.push_back({static_cast<int>(i), data[i].role});
    s.nodes.push_back(std::make_unique<ClientNode>(static_cast<int>(i), std::move(data[i]), k, cfg));
    s.handles.push_back(s.nodes.back().get());
  }
  return s;
}

std::vector<ClientDataset> three_clients(std::uint64_t seed, Eigen::Index n = 16) {
  std::mt19937_64 rng(seed);
  return {blob_client(rng, "a", DomainRole::Source, n, 2, 3, 0.0),
          blob_client(rng, "b", DomainRole::Source, n, 2, 3, 1.5),
          blob_client(rng, "t", DomainRole::Target, n, 2, 3, 3.0)};
}

using oracle::contains_bytes;
using oracle::RecordingTransport;

}  // namespace

TEST_CASE("server_init shapes, determinism and zero scale") {
  const auto a = server_init(2, 4, 3, 3, 1.0, 11);
  const auto b = server_init(2, 4, 3, 3, 1.0, 11);
  CHECK(a.global == b.global);
  REQUIRE(a.global.num_atoms() == 2);
  for (const auto& atom : a.global.atoms) {
    CHECK(atom.features.rows() == 4);
    CHECK(atom.features.cols() == 3);
    CHECK(atom.labels.rows() == 4);
    CHECK(atom.labels.cols() == 3);
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(std::abs(atom.labels.row(i).sum() - 1.0) < 1e-12);
      CHECK(atom.labels.row(i).minCoeff() >= 0.0);
    }
  }
  CHECK_FALSE(server_init(2, 4, 3, 3, 1.0, 12).global == a.global);

  const auto z = server_init(3, 5, 2, 4, 0.0, 1);
  for (const auto& atom : z.global.atoms) CHECK((atom.features.array() == 0.0).all());
}

TEST_CASE("client sampling") {
  std::vector<ClientInfo> reg;
  for (int i = 0; i < 6; ++i) reg.push_back({i, i == 4 ? DomainRole::Target : DomainRole::Source});

  std::mt19937_64 rng(3);
  CHECK(sample_clients(reg, 1.0, rng) == std::vector<int>{0, 1, 2, 3, 4, 5});

  for (int trial = 0; trial < 50; ++trial) {
    const auto c = sample_clients(reg, 0.5, rng);
    CHECK(c.size() == 3);
    CHECK(std::is_sorted(c.begin(), c.end()));
    CHECK(std::adjacent_find(c.begin(), c.end()) == c.end());
    CHECK(std::find(c.begin(), c.end(), 4) != c.end());
  }

  std::mt19937_64 r1(9), r2(9);
  for (int trial = 0; trial < 10; ++trial) CHECK(sample_clients(reg, 0.4, r1) == sample_clients(reg, 0.4, r2));
}

TEST_CASE("broadcast sends the same rows to every client") {
  auto st = server_init(2, 10, 3, 4, 1.0, 2);
  st.registry = {{0, DomainRole::Source}, {1, DomainRole::Source}, {2, DomainRole::Target}};
  const std::vector<int> clients{0, 1, 2};
  std::mt19937_64 rng(4);
  const auto out = broadcast_atom_batch(st, clients, 6, rng);
  REQUIRE(out.size() == 3);
  for (const auto& m : out) {
    CHECK(m.message.type == wire::MessageType::AtomBatch);
    CHECK(m.message.round == 1);
    CHECK(m.message.payload == out.front().message.payload);
  }
  const auto rows = wire::decode_atom_rows(out.front().message.payload);
  CHECK(rows.batch_size == 6);
  for (std::size_t k = 0; k < rows.atoms.size(); ++k) {
    const auto& idx = rows.atoms[k].indices;
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      CHECK(rows.atoms[k].features(static_cast<Eigen::Index>(i), 0) ==
            static_cast<double>(static_cast<float>(st.global.atoms[k].features(idx[i], 0))));
    }
  }
  CHECK_THROWS_AS(broadcast_atom_batch(st, clients, 11, rng), std::invalid_argument);
}

TEST_CASE("aggregation examples") {
  const auto st = server_init(2, 8, 2, 3, 1.0, 5);
  std::mt19937_64 rng(1);
  auto rows = sample_atom_rows(st.global, 4, rng);
  for (auto& a : rows.atoms) a.features.array() += 1.0;

  SUBCASE("single version overwrites exactly the sampled rows") {
    const std::vector<wire::AtomRows> versions{rows};
    const auto agg = server_aggregate(st.global, versions, rng);
    CHECK(agg.selected == 0);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& idx = rows.atoms[k].indices;
      for (Eigen::Index i = 0; i < 8; ++i) {
        const auto pos = std::find(idx.begin(), idx.end(), static_cast<std::uint32_t>(i));
        if (pos == idx.end()) {
          CHECK(agg.global.atoms[k].features.row(i) == st.global.atoms[k].features.row(i));
        } else {
          CHECK(agg.global.atoms[k].features.row(i) == rows.atoms[k].features.row(pos - idx.begin()));
        }
      }
    }
  }

  SUBCASE("identical versions give that version") {
    const std::vector<wire::AtomRows> versions{rows, rows, rows};
    const auto single = server_aggregate(st.global, std::span(versions).first(1), rng);
    CHECK(server_aggregate(st.global, versions, rng).global == single.global);
  }

  SUBCASE("selection is roughly uniform over four clients") {
    std::vector<wire::AtomRows> versions(4, rows);
    std::mt19937_64 r(2024);
    std::map<std::size_t, int> counts;
    for (int i = 0; i < 100; ++i) ++counts[server_aggregate(st.global, versions, r).selected];
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(counts[c] / 100.0 - 0.25) <= 0.15);
  }

  SUBCASE("mismatched indices are rejected") {
    auto other = rows;
    other.atoms[0].indices[0] = other.atoms[0].indices[0] == 0 ? 7 : 0;
    std::sort(other.atoms[0].indices.begin(), other.atoms[0].indices.end());
    const std::vector<wire::AtomRows> versions{rows, other};
    CHECK_THROWS(server_aggregate(st.global, versions, rng));
  }
}

TEST_CASE("drift examples") {
  auto point = [](double x) {
    Dictionary d;
    d.atoms.push_back({Matrix::Constant(1, 1, x), Matrix::Ones(1, 1), 0});
    return d;
  };
  const std::vector<Dictionary> apart{point(0.0), point(3.0)};
  CHECK(compute_drift(apart).drift == doctest::Approx(18.0).epsilon(1e-12));
  CHECK(compute_drift(apart).terms.size() == 2);

  const std::vector<Dictionary> same{point(1.0), point(1.0), point(1.0)};
  CHECK(compute_drift(same).drift == 0.0);
}

TEST_CASE("drift equals an explicit loop over ordered pairs") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Dictionary> versions;
    for (int c = 0; c < 3; ++c) {
      Dictionary d;
      for (int k = 0; k < 2; ++k) {
        d.atoms.push_back({oracle::random_points(rng, 5, 2), oracle::random_simplex_rows(rng, 5, 3), k});
      }
      versions.push_back(d);
    }
    const GroundCost ground{CostKind::FeaturesAndLabels, 0.7};
    double expected = 0.0;
    for (std::size_t a = 0; a < versions.size(); ++a) {
      for (std::size_t b = 0; b < versions.size(); ++b) {
        if (a == b) continue;
        for (std::size_t k = 0; k < 2; ++k) {
          expected += wasserstein(versions[a].atoms[k].distribution(), versions[b].atoms[k].distribution(), ground) / 2.0;
        }
      }
    }
    CHECK(compute_drift(versions, ground).drift == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("zero step size leaves the global atoms unchanged") {
  auto s = make_setup(three_clients(1), 2, 8, small_training(0.0));
  InProcessTransport transport(s.handles);
  FederationConfig fc;
  fc.batch_size = 4;
  Federation fed(s.state, transport, fc);
  const auto before = s.state.global;
  fed.run_round();
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(fed.state().global.atoms[k].features.isApprox(before.atoms[k].features, 1e-6));
    CHECK(fed.state().global.atoms[k].labels.isApprox(before.atoms[k].labels, 1e-6));
  }
}

TEST_CASE("identical clients produce identical versions") {
  std::mt19937_64 rng(8);
  const auto src = blob_client(rng, "s", DomainRole::Source, 16, 2, 3, 0.0);
  auto twin = src;
  auto st = server_init(2, 8, 2, 3, 1.0, 3);

  // Same seed and same data: the two sources must answer with the same bytes.
  wire::AtomRows rows = sample_atom_rows(st.global, 4, st.rng);
  const auto frame = wire::encode({wire::MessageType::AtomBatch, 1, wire::encode_atom_rows(rows)});
  ClientTrainingConfig cfg = small_training();
  ClientNode a(0, src, 2, cfg), b(0, twin, 2, cfg);
  const auto ra = a.handle(frame), rb = b.handle(frame);
  CHECK(ra == rb);
  const std::vector<Dictionary> versions{rows_to_dictionary(wire::decode_atom_rows(wire::decode(ra).payload)),
                                         rows_to_dictionary(wire::decode_atom_rows(wire::decode(rb).payload))};
  CHECK(compute_drift(versions).drift == 0.0);
}

TEST_CASE("a failing client aborts the round and leaves the server untouched") {
  auto data = three_clients(2);
  std::mt19937_64 rng(3);
  data[1] = blob_client(rng, "bad", DomainRole::Source, 16, 3, 3, 0.0);  // wrong feature dimension
  auto s = make_setup(data, 2, 8, small_training());
  InProcessTransport transport(s.handles);
  FederationConfig fc;
  fc.batch_size = 4;
  Federation fed(s.state, transport, fc);
  const ServerState before = fed.state();
  try {
    fed.run_round();
    FAIL("round should have failed");
  } catch (const RoundError& e) {
    CHECK(e.client_id() == 1);
    CHECK(std::string(e.what()).rfind("client 1:", 0) == 0);
  }
  CHECK(fed.state() == before);
  // The healthy clients discarded their pending coordinates.
  CHECK(s.nodes[0]->alpha() == BarycentricCoordinates::uniform(2));
}

TEST_CASE("wire frames never carry coordinates or client data") {
  auto data = three_clients(4);
  const auto copy = data;
  auto cfg = small_training(0.5, 2);
  auto s = make_setup(data, 2, 8, cfg);
  InProcessTransport inner(s.handles);
  RecordingTransport rec(inner);
  FederationConfig fc;
  fc.batch_size = 4;
  Federation fed(s.state, rec, fc);
  for (int r = 0; r < 3; ++r) fed.run_round();
  fed.shutdown();
  REQUIRE_FALSE(rec.frames.empty());

  std::size_t checked = 0;
  for (const auto& node : s.nodes) {
    const auto w = node->alpha().weights();
    if (std::all_of(w.begin(), w.end(), [&](double v) { return v == w[0]; })) continue;  // uniform would be ambiguous
    for (double v : w) {
      if (v == 0.0 || v == 1.0) continue;
      const float f = static_cast<float>(v);
      for (const auto& frame : rec.frames) {
        CHECK_FALSE(contains_bytes(frame, &v, sizeof v));
        CHECK_FALSE(contains_bytes(frame, &f, sizeof f));
      }
      ++checked;
    }
  }
  CHECK(checked > 0);

  for (const auto& c : copy) {
    for (Eigen::Index i = 0; i < c.features.rows(); ++i) {
      // A full sample row, as float32 or float64, must never appear.
      float f32[2] = {static_cast<float>(c.features(i, 0)), static_cast<float>(c.features(i, 1))};
      double f64[2] = {c.features(i, 0), c.features(i, 1)};
      for (const auto& frame : rec.frames) {
        CHECK_FALSE(contains_bytes(frame, f32, sizeof f32));
        CHECK_FALSE(contains_bytes(frame, f64, sizeof f64));
      }
    }
  }

  // Every frame is one of the registered message types and decodes cleanly.
  for (const auto& frame : rec.frames) {
    const auto msg = wire::decode(frame);
    if (msg.type == wire::MessageType::AtomBatch || msg.type == wire::MessageType::AtomVersion) {
      const auto rows = wire::decode_atom_rows(msg.payload);
      CHECK(wire::atom_rows_payload_size(rows.num_atoms, rows.batch_size, rows.dim, rows.num_classes) ==
            msg.payload.size());
    } else if (msg.type == wire::MessageType::RoundAck) {
      CHECK(msg.payload.size() == 1);
    } else {
      CHECK(msg.type == wire::MessageType::Shutdown);
      CHECK(msg.payload.empty());
    }
  }
}

TEST_CASE("in-process and stream transports give bit-identical runs") {
  auto run = [](bool stream) {
    auto s = make_setup(three_clients(6), 2, 8, small_training(0.3, 2));
    std::unique_ptr<Transport> t;
    if (stream) {
      t = std::make_unique<StreamTransport>(s.handles);
    } else {
      t = std::make_unique<InProcessTransport>(s.handles);
    }
    FederationConfig fc;
    fc.batch_size = 4;
    Federation fed(s.state, *t, fc);
    std::vector<double> drift;
    for (int r = 0; r < 4; ++r) drift.push_back(fed.run_round().drift->drift);
    fed.shutdown();
    std::vector<BarycentricCoordinates> alphas;
    for (const auto& n : s.nodes) alphas.push_back(n->alpha());
    return std::make_tuple(fed.state().global, drift, alphas);
  };
  const auto [d1, drift1, a1] = run(false);
  const auto [d2, drift2, a2] = run(true);
  CHECK(d1 == d2);
  CHECK(drift1 == drift2);
  CHECK(a1 == a2);
  CHECK(d1.tag.round == 4);
}

TEST_CASE("rounds without a target or without sources are refused") {
  std::mt19937_64 rng(1);
  auto s = make_setup({blob_client(rng, "a", DomainRole::Source, 8, 2, 3, 0.0),
                       blob_client(rng, "b", DomainRole::Source, 8, 2, 3, 0.0)},
                      1, 4, small_training());
  InProcessTransport t(s.handles);
  Federation fed(s.state, t, {});
  CHECK_THROWS_AS(fed.run_round(), std::invalid_argument);
}

TEST_CASE("cosine schedule") {
  ClientTrainingConfig cfg;
  CHECK(schedule_factor(cfg, 1) == 1.0);
  CHECK(schedule_factor(cfg, 50) == 1.0);
  cfg.total_rounds = 10;
  CHECK(schedule_factor(cfg, 1) == doctest::Approx(1.0));
  CHECK(schedule_factor(cfg, 6) == doctest::Approx(0.5));
  CHECK(schedule_factor(cfg, 11) == doctest::Approx(0.0));
  for (std::uint32_t r = 1; r < 12; ++r) CHECK(schedule_factor(cfg, r + 1) <= schedule_factor(cfg, r));
}
