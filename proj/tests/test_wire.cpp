#include <bit>
#include <random>

#include "doctest.h"
#include "feddadil/wire.hpp"
#include "oracles.hpp"

using namespace feddadil;
using namespace feddadil::wire;

namespace {

AtomRows random_rows(std::mt19937_64& rng, std::uint32_t k, std::uint32_t nb, std::uint32_t d, std::uint32_t nc) {
  AtomRows rows{k, nb, d, nc, {}};
  std::uniform_int_distribution<std::uint32_t> idx(0, 1000);
  for (std::uint32_t a = 0; a < k; ++a) {
    AtomRowBlock b;
    for (std::uint32_t i = 0; i < nb; ++i) b.indices.push_back(idx(rng));
    b.features = oracle::random_points(rng, nb, d);
    b.labels = oracle::random_simplex_rows(rng, nb, nc);
    rows.atoms.push_back(std::move(b));
  }
  return rows;
}

std::uint32_t read_u32(const Bytes& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

}  // namespace

TEST_CASE("header layout is byte exact") {
  const Bytes frame = encode({MessageType::AtomVersion, 0x01020304u, {0xaa, 0xbb, 0xcc}});
  const Bytes expected{'F', 'D', 'D', 'L', 1, 0x02, 0x04, 0x03, 0x02, 0x01, 3, 0, 0, 0, 0, 0, 0, 0, 0xaa, 0xbb, 0xcc};
  CHECK(frame == expected);
}

TEST_CASE("every message type round-trips bit-exactly") {
  std::mt19937_64 rng(1);
  const Bytes rows = encode_atom_rows(random_rows(rng, 2, 3, 4, 5));
  const std::vector<RoundMessage> messages{{MessageType::AtomBatch, 7, rows},
                                           {MessageType::AtomVersion, 7, rows},
                                           {MessageType::RoundAck, 7, encode_ack(AckStatus::Commit)},
                                           {MessageType::RoundAck, 9, encode_ack(AckStatus::Abort)},
                                           {MessageType::Shutdown, 0xffffffffu, {}}};
  std::size_t types_seen = 0;
  for (auto type : kAllMessageTypes) {
    for (const auto& m : messages) {
      if (m.type != type) continue;
      ++types_seen;
      const Bytes bytes = encode(m);
      const auto back = decode(bytes);
      CHECK(back == m);
      CHECK(encode(back) == bytes);
    }
  }
  CHECK(types_seen == messages.size());
}

TEST_CASE("malformed frames are rejected") {
  const Bytes good = encode({MessageType::Shutdown, 1, {}});
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode(bad), WireError);
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_AS(decode(bad), WireError);
  for (std::uint8_t t : {0x00, 0x05, 0xff}) {
    bad = good;
    bad[5] = t;
    CHECK_THROWS_AS(decode(bad), WireError);
  }
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode(bad), WireError);
  bad = encode({MessageType::AtomBatch, 1, {1, 2, 3}});
  bad.pop_back();
  CHECK_THROWS_AS(decode(bad), WireError);
  CHECK_THROWS_AS(decode(Bytes(good.begin(), good.begin() + 10)), WireError);
  CHECK_THROWS_AS(encode({static_cast<MessageType>(9), 0, {}}), WireError);
}

TEST_CASE("atom rows payload length follows the closed form") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint32_t k = 1 + trial % 4, nb = 1 + trial % 7, d = 1 + trial % 5, nc = 1 + trial % 3;
    const auto payload = encode_atom_rows(random_rows(rng, k, nb, d, nc));
    const std::uint64_t expected = 16 + k * (4 * nb + 4 * nb * d + 4 * nb * nc);
    CHECK(payload.size() == expected);
    CHECK(atom_rows_payload_size(k, nb, d, nc) == expected);
  }
}

TEST_CASE("batch of 2^18 feature entries per atom") {
  constexpr std::uint32_t k = 2, nb = 128, d = 2048, nc = 10;
  static_assert(nb * d == (1u << 18));
  std::mt19937_64 rng(3);
  const auto rows = random_rows(rng, k, nb, d, nc);
  const auto payload = encode_atom_rows(rows);
  CHECK(payload.size() == 16 + k * (4 * nb + (1u << 20) + 4 * nb * nc));
  // Second atom's first feature sits after the first atom's whole block.
  const std::size_t atom_block = 4 * nb + (1u << 20) + 4 * nb * nc;
  const std::size_t at = 16 + atom_block + 4 * nb;
  CHECK(read_u32(payload, at) == std::bit_cast<std::uint32_t>(static_cast<float>(rows.atoms[1].features(0, 0))));
  CHECK(read_u32(payload, 16 + atom_block) == rows.atoms[1].indices[0]);
  CHECK(encode(RoundMessage{MessageType::AtomBatch, 1, payload}).size() == kHeaderSize + payload.size());
}

TEST_CASE("atom rows encode as little-endian float32") {
  AtomRows rows{1, 1, 2, 2, {}};
  AtomRowBlock b;
  b.indices = {0x0a0b0c0d};
  b.features = Matrix(1, 2);
  b.features << 1.0, -2.5;
  b.labels = Matrix(1, 2);
  b.labels << 0.25, 0.75;
  rows.atoms.push_back(b);
  const auto p = encode_atom_rows(rows);
  const Bytes expected{1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 0x0d, 0x0c, 0x0b, 0x0a,
                       0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0, 0x00, 0x00, 0x80, 0x3e, 0x00, 0x00, 0x40, 0x3f};
  CHECK(p == expected);
}

TEST_CASE("atom rows decode to the float32 values and re-encode identically") {
  std::mt19937_64 rng(4);
  const auto rows = random_rows(rng, 3, 5, 4, 3);
  const auto bytes = encode_atom_rows(rows);
  const auto back = decode_atom_rows(bytes);
  REQUIRE(back.atoms.size() == 3);
  for (std::size_t a = 0; a < 3; ++a) {
    CHECK(back.atoms[a].indices == rows.atoms[a].indices);
    CHECK(back.atoms[a].features == rows.atoms[a].features.cast<float>().cast<double>());
    CHECK(back.atoms[a].labels == rows.atoms[a].labels.cast<float>().cast<double>());
  }
  CHECK(encode_atom_rows(back) == bytes);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_atom_rows(truncated), WireError);
  auto wrong_k = bytes;
  wrong_k[0] = 4;
  CHECK_THROWS_AS(decode_atom_rows(wrong_k), WireError);
}

TEST_CASE("acknowledgement payloads") {
  CHECK(decode_ack(encode_ack(AckStatus::Commit)) == AckStatus::Commit);
  CHECK(decode_ack(encode_ack(AckStatus::Abort)) == AckStatus::Abort);
  CHECK_THROWS_AS(decode_ack(Bytes{2}), WireError);
  CHECK_THROWS_AS(decode_ack(Bytes{}), WireError);
  CHECK_THROWS_AS(decode_ack(Bytes{1, 1}), WireError);
}
