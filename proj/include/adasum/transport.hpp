#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <vector>

#include "adasum/errors.hpp"
#include "adasum/tensor.hpp"

namespace adasum {

// Collective phases, carried as message tags so a misrouted or misordered
// message fails deterministically instead of corrupting a reduction.
enum class Phase : std::uint16_t {
  HalfExchange = 1,  // reduce-scatter half swap
  DotAllreduce = 2,  // group sum of partial dot products
  Allgather = 3,     // slice exchange on the way back up
  Control = 4,       // handshakes, hash checks, scalar reductions
};

struct MessageTags {
  Phase phase = Phase::Control;
  std::uint16_t depth = 0;  // recursion level
  std::uint16_t group = 0;  // group id at that level

  bool operator==(const MessageTags&) const = default;
};

// Blocking point-to-point endpoint for one rank. Delivery is reliable and
// FIFO per (sender, receiver) pair. recv checks the expected tags and
// throws protocol_error on mismatch.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;

  virtual void send(int dest, const MessageTags& tags, const Tensor& payload) = 0;
  virtual Tensor recv(int src, const MessageTags& expected_tags) = 0;
};

// Shared in-process network: one FIFO queue per ordered rank pair. With a
// nonzero scheduler seed each message gets a pseudo-random delivery delay,
// permuting cross-pair arrival order while preserving per-pair FIFO.
class InprocNetwork {
 public:
  explicit InprocNetwork(int size, std::uint64_t scheduler_seed = 0);

  int size() const { return size_; }

  // Endpoint for one rank; the network must outlive it.
  std::unique_ptr<Transport> endpoint(int rank);

  // Wakes every blocked receiver with a transport_error. Used when one
  // rank fails so the others do not hang.
  void poison(const std::string& reason);

 private:
  friend class InprocTransport;

  struct Mailbox {
    std::deque<std::pair<MessageTags, Tensor>> q;
  };

  void push(int src, int dst, const MessageTags& tags, const Tensor& payload);
  std::pair<MessageTags, Tensor> pop(int src, int dst);

  int size_;
  std::uint64_t seed_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Mailbox> boxes_;  // indexed src * size + dst
  bool poisoned_ = false;
  std::string poison_reason_;
  std::uint64_t jitter_state_;
};

// TCP full-mesh endpoint. Rank r listens on base_port + r; for every pair
// the lower rank connects and identifies itself with an 8-byte
// little-endian rank id. Each frame is a 16-byte header (magic, tags,
// payload length) followed by a serialized tensor.
class TcpTransport : public Transport {
 public:
  TcpTransport(int rank, int size, int base_port,
               const std::string& host = "127.0.0.1");
  ~TcpTransport() override;

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  int rank() const override { return rank_; }
  int size() const override { return size_; }

  void send(int dest, const MessageTags& tags, const Tensor& payload) override;
  Tensor recv(int src, const MessageTags& expected_tags) override;

 private:
  int rank_;
  int size_;
  std::vector<int> peer_fds_;  // indexed by peer rank, -1 for self
};

void check_tags(const MessageTags& got, const MessageTags& expected);

}  // namespace adasum
