#include "feddadil/wire.hpp"

#include <algorithm>
#include <bit>
#include <string>

namespace feddadil::wire {

namespace {

template <typename T>
void put_le(Bytes& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

void put_f32(Bytes& out, double value) {
  put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return value;
  }

  double f32() { return static_cast<double>(std::bit_cast<float>(le<std::uint32_t>())); }

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw WireError("truncated payload");
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

bool known_type(std::uint8_t t) {
  return std::any_of(kAllMessageTypes.begin(), kAllMessageTypes.end(),
                     [t](MessageType m) { return static_cast<std::uint8_t>(m) == t; });
}

}  // namespace

Bytes encode(const RoundMessage& msg) {
  if (!known_type(static_cast<std::uint8_t>(msg.type))) throw WireError("cannot encode unknown message type");
  Bytes out(kHeaderSize + msg.payload.size());
  std::copy(kMagic.begin(), kMagic.end(), out.begin());
  out[4] = kVersion;
  out[5] = static_cast<std::uint8_t>(msg.type);
  for (std::size_t i = 0; i < 4; ++i) out[6 + i] = static_cast<std::uint8_t>(msg.round >> (8 * i));
  const std::uint64_t len = msg.payload.size();
  for (std::size_t i = 0; i < 8; ++i) out[10 + i] = static_cast<std::uint8_t>(len >> (8 * i));
  std::copy(msg.payload.begin(), msg.payload.end(), out.begin() + kHeaderSize);
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t> header) {
  if (header.size() < kHeaderSize) throw WireError("frame shorter than header");
  if (!std::equal(kMagic.begin(), kMagic.end(), header.begin())) throw WireError("bad magic");
  if (header[4] != kVersion) throw WireError("unsupported protocol version " + std::to_string(header[4]));
  if (!known_type(header[5])) throw WireError("unknown message type " + std::to_string(header[5]));
  Reader r(header.subspan(6, 12));
  FrameHeader h;
  h.type = static_cast<MessageType>(header[5]);
  h.round = r.le<std::uint32_t>();
  h.payload_len = r.le<std::uint64_t>();
  return h;
}

RoundMessage decode(std::span<const std::uint8_t> frame) {
  const auto h = decode_header(frame);
  if (frame.size() - kHeaderSize != h.payload_len) {
    throw WireError("payload length " + std::to_string(h.payload_len) + " does not match " +
                    std::to_string(frame.size() - kHeaderSize) + " bytes received");
  }
  return {h.type, h.round, Bytes(frame.begin() + kHeaderSize, frame.end())};
}

std::uint64_t atom_rows_payload_size(std::uint64_t k, std::uint64_t n_b, std::uint64_t d, std::uint64_t n_c) {
  return 16 + k * (4 * n_b + 4 * n_b * d + 4 * n_b * n_c);
}

Bytes encode_atom_rows(const AtomRows& rows) {
  if (rows.atoms.size() != rows.num_atoms) throw WireError("atom count does not match K");
  Bytes out;
  out.reserve(atom_rows_payload_size(rows.num_atoms, rows.batch_size, rows.dim, rows.num_classes));
  put_le(out, rows.num_atoms);
  put_le(out, rows.batch_size);
  put_le(out, rows.dim);
  put_le(out, rows.num_classes);
  for (const auto& a : rows.atoms) {
    if (a.indices.size() != rows.batch_size || a.features.rows() != rows.batch_size ||
        a.features.cols() != rows.dim || a.labels.rows() != rows.batch_size || a.labels.cols() != rows.num_classes) {
      throw WireError("atom block shape does not match header");
    }
    for (auto idx : a.indices) put_le(out, idx);
    for (Eigen::Index i = 0; i < a.features.size(); ++i) put_f32(out, a.features.data()[i]);
    for (Eigen::Index i = 0; i < a.labels.size(); ++i) put_f32(out, a.labels.data()[i]);
  }
  return out;
}

AtomRows decode_atom_rows(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  AtomRows rows;
  rows.num_atoms = r.le<std::uint32_t>();
  rows.batch_size = r.le<std::uint32_t>();
  rows.dim = r.le<std::uint32_t>();
  rows.num_classes = r.le<std::uint32_t>();
  if (payload.size() != atom_rows_payload_size(rows.num_atoms, rows.batch_size, rows.dim, rows.num_classes)) {
    throw WireError("atom rows payload has " + std::to_string(payload.size()) + " bytes, header implies " +
                    std::to_string(atom_rows_payload_size(rows.num_atoms, rows.batch_size, rows.dim, rows.num_classes)));
  }
  const auto nb = static_cast<Eigen::Index>(rows.batch_size);
  rows.atoms.resize(rows.num_atoms);
  for (auto& a : rows.atoms) {
    a.indices.resize(rows.batch_size);
    for (auto& idx : a.indices) idx = r.le<std::uint32_t>();
    a.features.resize(nb, rows.dim);
    for (Eigen::Index i = 0; i < a.features.size(); ++i) a.features.data()[i] = r.f32();
    a.labels.resize(nb, rows.num_classes);
    for (Eigen::Index i = 0; i < a.labels.size(); ++i) a.labels.data()[i] = r.f32();
  }
  return rows;
}

Bytes encode_ack(AckStatus status) { return {static_cast<std::uint8_t>(status)}; }

AckStatus decode_ack(std::span<const std::uint8_t> payload) {
  if (payload.size() != 1 || payload[0] > 1) throw WireError("malformed round acknowledgement");
  return static_cast<AckStatus>(payload[0]);
}

}  // namespace feddadil::wire
