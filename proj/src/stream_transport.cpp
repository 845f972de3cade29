#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "feddadil/federation.hpp"

namespace feddadil {

namespace {

void write_all(int fd, const wire::Bytes& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::send(fd, data.data() + done, data.size() - done, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw TransportError(std::string("stream write failed: ") + std::strerror(errno));
    done += static_cast<std::size_t>(n);
  }
}

// False on a clean end of stream before the first byte.
bool read_exact(int fd, std::uint8_t* out, std::size_t len) {
  std::size_t done = 0;
  while (done < len) {
    const auto n = ::recv(fd, out + done, len - done, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) throw TransportError(std::string("stream read failed: ") + std::strerror(errno));
    if (n == 0) {
      if (done == 0) return false;
      throw TransportError("stream closed mid-frame");
    }
    done += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<wire::Bytes> read_frame(int fd) {
  wire::Bytes frame(wire::kHeaderSize);
  if (!read_exact(fd, frame.data(), frame.size())) return std::nullopt;
  const auto header = wire::decode_header(frame);
  frame.resize(wire::kHeaderSize + header.payload_len);
  if (header.payload_len > 0 && !read_exact(fd, frame.data() + wire::kHeaderSize, header.payload_len)) {
    throw TransportError("stream closed mid-frame");
  }
  return frame;
}

}  // namespace

struct StreamTransport::Connection {
  int client_id = 0;
  int server_fd = -1;
  int client_fd = -1;
  std::thread worker;
  std::mutex error_mutex;
  std::string error;

  void serve(ClientNode* node) {
    try {
      while (auto frame = read_frame(client_fd)) {
        const auto reply = node->handle(*frame);
        write_all(client_fd, reply);
        if (wire::decode_header(reply).type == wire::MessageType::Shutdown) break;
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(error_mutex);
      error = e.what();
    }
    ::shutdown(client_fd, SHUT_RDWR);
  }

  std::string last_error() {
    std::lock_guard lock(error_mutex);
    return error.empty() ? "connection closed" : error;
  }
};

StreamTransport::StreamTransport(std::vector<ClientNode*> nodes) {
  for (auto* node : nodes) {
    auto c = std::make_unique<Connection>();
    c->client_id = node->id();
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
      throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    c->server_fd = fds[0];
    c->client_fd = fds[1];
    c->worker = std::thread([conn = c.get(), node] { conn->serve(node); });
    connections_.push_back(std::move(c));
  }
}

StreamTransport::~StreamTransport() {
  for (auto& c : connections_) ::shutdown(c->server_fd, SHUT_RDWR);
  for (auto& c : connections_) {
    if (c->worker.joinable()) c->worker.join();
    ::close(c->server_fd);
    ::close(c->client_fd);
  }
}

StreamTransport::Connection& StreamTransport::find(int client_id) {
  for (auto& c : connections_) {
    if (c->client_id == client_id) return *c;
  }
  throw TransportError("no client with id " + std::to_string(client_id));
}

wire::Bytes StreamTransport::exchange(int client_id, const wire::Bytes& request) {
  auto& c = find(client_id);
  try {
    write_all(c.server_fd, request);
    if (auto reply = read_frame(c.server_fd)) return *reply;
  } catch (const TransportError&) {
  }
  throw TransportError(c.last_error());
}

}  // namespace feddadil
