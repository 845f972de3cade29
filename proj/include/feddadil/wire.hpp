#pragma once

// Framed binary messages exchanged between the server and its clients.
//
// Frame = 18-byte header + payload:
//   bytes 0..3   magic "FDDL"
//   byte  4      version (1)
//   byte  5      message type
//   bytes 6..9   round, u32 little-endian
//   bytes 10..17 payload length, u64 little-endian
//
// AtomBatch / AtomVersion payload:
//   K, n_b, d, n_c as u32 LE, then per atom:
//   n_b row indices (u32 LE), n_b*d features (f32 LE), n_b*n_c labels (f32 LE).
// RoundAck payload: one status byte (1 commit, 0 abort). Shutdown: empty.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "feddadil/ot.hpp"

namespace feddadil::wire {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::array<std::uint8_t, 4> kMagic{'F', 'D', 'D', 'L'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 18;

enum class MessageType : std::uint8_t {
  AtomBatch = 0x01,    ///< server -> client
  AtomVersion = 0x02,  ///< client -> server
  RoundAck = 0x03,     ///< server -> client, echoed back
  Shutdown = 0x04,     ///< server -> client, echoed back
};

inline constexpr std::array<MessageType, 4> kAllMessageTypes{MessageType::AtomBatch, MessageType::AtomVersion,
                                                             MessageType::RoundAck, MessageType::Shutdown};

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameHeader {
  MessageType type = MessageType::Shutdown;
  std::uint32_t round = 0;
  std::uint64_t payload_len = 0;
};

struct RoundMessage {
  MessageType type = MessageType::Shutdown;
  std::uint32_t round = 0;
  Bytes payload;

  bool operator==(const RoundMessage&) const = default;
};

Bytes encode(const RoundMessage& msg);
/// Parses and validates a header (magic, version, known type).
FrameHeader decode_header(std::span<const std::uint8_t> header);
/// Strict: the buffer must hold exactly one frame.
RoundMessage decode(std::span<const std::uint8_t> frame);

/// Mini-batch rows of every atom. Values are carried as float32 on the wire;
/// the in-memory matrices hold exactly those float32 values after decoding.
struct AtomRowBlock {
  std::vector<std::uint32_t> indices;
  Matrix features;  ///< n_b x d
  Matrix labels;    ///< n_b x n_c
};

struct AtomRows {
  std::uint32_t num_atoms = 0;
  std::uint32_t batch_size = 0;
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<AtomRowBlock> atoms;
};

std::uint64_t atom_rows_payload_size(std::uint64_t k, std::uint64_t n_b, std::uint64_t d, std::uint64_t n_c);
Bytes encode_atom_rows(const AtomRows& rows);
AtomRows decode_atom_rows(std::span<const std::uint8_t> payload);

enum class AckStatus : std::uint8_t { Abort = 0, Commit = 1 };
Bytes encode_ack(AckStatus status);
AckStatus decode_ack(std::span<const std::uint8_t> payload);

}  // namespace feddadil::wire
