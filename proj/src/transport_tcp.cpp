#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <thread>

#include "adasum/transport.hpp"

namespace adasum {

namespace {

constexpr std::uint32_t kMagic = 0xAD5C0DE1u;
constexpr int kHeaderLen = 16;

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  std::size_t done = 0;
  while (done < len) {
    const ssize_t n = ::write(fd, data + done, len - done);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw transport_error("tcp write failed: " + std::string(strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
}

void read_all(int fd, std::uint8_t* data, std::size_t len) {
  std::size_t done = 0;
  while (done < len) {
    const ssize_t n = ::read(fd, data + done, len - done);
    if (n == 0) throw transport_error("tcp peer closed connection");
    if (n < 0) {
      if (errno == EINTR) continue;
      throw transport_error("tcp read failed: " + std::string(strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
}

void put_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v & 0xFF);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void set_socket_options(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

TcpTransport::TcpTransport(int rank, int size, int base_port,
                           const std::string& host)
    : rank_(rank), size_(size), peer_fds_(static_cast<std::size_t>(size), -1) {
  if (rank < 0 || rank >= size) throw config_error("tcp: rank out of range");
  if (size == 1) return;

  const int listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd < 0) throw transport_error("tcp: socket() failed");
  int one = 1;
  ::setsockopt(listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(static_cast<std::uint16_t>(base_port + rank));
  if (::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(listen_fd);
    throw transport_error("tcp: bind failed on port " +
                          std::to_string(base_port + rank) + ": " +
                          strerror(errno));
  }
  if (::listen(listen_fd, size) < 0) {
    ::close(listen_fd);
    throw transport_error("tcp: listen failed");
  }

  // The lower-rank side connects, so dial every higher rank first; their
  // listeners exist before their accept loops run.
  for (int peer = rank + 1; peer < size; ++peer) {
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::seconds(30);
    int fd = -1;
    for (;;) {
      fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) throw transport_error("tcp: socket() failed");
      sockaddr_in peer_addr{};
      peer_addr.sin_family = AF_INET;
      peer_addr.sin_port = htons(static_cast<std::uint16_t>(base_port + peer));
      if (::inet_pton(AF_INET, host.c_str(), &peer_addr.sin_addr) != 1) {
        ::close(fd);
        throw transport_error("tcp: bad host " + host);
      }
      if (::connect(fd, reinterpret_cast<sockaddr*>(&peer_addr),
                    sizeof(peer_addr)) == 0) {
        break;
      }
      ::close(fd);
      if (std::chrono::steady_clock::now() > deadline) {
        ::close(listen_fd);
        throw transport_error("tcp: could not reach rank " +
                              std::to_string(peer));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    set_socket_options(fd);
    std::uint8_t hello[8] = {0};
    std::uint64_t id = static_cast<std::uint64_t>(rank);
    for (int i = 0; i < 8; ++i) hello[i] = static_cast<std::uint8_t>(id >> (8 * i));
    write_all(fd, hello, 8);
    peer_fds_[static_cast<std::size_t>(peer)] = fd;
  }

  for (int i = 0; i < rank; ++i) {
    const int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd < 0) {
      ::close(listen_fd);
      throw transport_error("tcp: accept failed");
    }
    set_socket_options(fd);
    std::uint8_t hello[8];
    read_all(fd, hello, 8);
    std::uint64_t id = 0;
    for (int b = 0; b < 8; ++b) id |= static_cast<std::uint64_t>(hello[b]) << (8 * b);
    if (id >= static_cast<std::uint64_t>(rank) ||
        peer_fds_[static_cast<std::size_t>(id)] != -1) {
      ::close(fd);
      ::close(listen_fd);
      throw protocol_error("tcp: bad handshake rank id " + std::to_string(id));
    }
    peer_fds_[static_cast<std::size_t>(id)] = fd;
  }

  ::close(listen_fd);
}

TcpTransport::~TcpTransport() {
  for (int fd : peer_fds_) {
    if (fd >= 0) ::close(fd);
  }
}

void TcpTransport::send(int dest, const MessageTags& tags, const Tensor& payload) {
  if (dest < 0 || dest >= size_ || dest == rank_) {
    throw config_error("tcp send: bad destination rank");
  }
  const std::vector<std::uint8_t> body = serialize(payload);
  std::uint8_t header[kHeaderLen];
  header[0] = static_cast<std::uint8_t>(kMagic & 0xFF);
  header[1] = static_cast<std::uint8_t>((kMagic >> 8) & 0xFF);
  header[2] = static_cast<std::uint8_t>((kMagic >> 16) & 0xFF);
  header[3] = static_cast<std::uint8_t>((kMagic >> 24) & 0xFF);
  put_u16(header + 4, static_cast<std::uint16_t>(tags.phase));
  put_u16(header + 6, tags.depth);
  put_u16(header + 8, tags.group);
  const std::uint64_t len = body.size();
  for (int i = 0; i < 6; ++i) {
    header[10 + i] = static_cast<std::uint8_t>(len >> (8 * i));
  }
  const int fd = peer_fds_[static_cast<std::size_t>(dest)];
  write_all(fd, header, kHeaderLen);
  write_all(fd, body.data(), body.size());
}

Tensor TcpTransport::recv(int src, const MessageTags& expected) {
  if (src < 0 || src >= size_ || src == rank_) {
    throw config_error("tcp recv: bad source rank");
  }
  const int fd = peer_fds_[static_cast<std::size_t>(src)];
  std::uint8_t header[kHeaderLen];
  read_all(fd, header, kHeaderLen);
  const std::uint32_t magic = static_cast<std::uint32_t>(header[0]) |
                              (static_cast<std::uint32_t>(header[1]) << 8) |
                              (static_cast<std::uint32_t>(header[2]) << 16) |
                              (static_cast<std::uint32_t>(header[3]) << 24);
  if (magic != kMagic) throw protocol_error("tcp: bad frame magic");
  MessageTags tags;
  tags.phase = static_cast<Phase>(get_u16(header + 4));
  tags.depth = get_u16(header + 6);
  tags.group = get_u16(header + 8);
  std::uint64_t len = 0;
  for (int i = 0; i < 6; ++i) {
    len |= static_cast<std::uint64_t>(header[10 + i]) << (8 * i);
  }
  std::vector<std::uint8_t> body(len);
  read_all(fd, body.data(), len);
  check_tags(tags, expected);
  return deserialize(body);
}

}  // namespace adasum
