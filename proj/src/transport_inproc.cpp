#include <chrono>
#include <thread>

#include "adasum/transport.hpp"

namespace adasum {

void check_tags(const MessageTags& got, const MessageTags& expected) {
  if (got == expected) return;
  throw protocol_error(
      "collective tag mismatch: got phase=" +
      std::to_string(static_cast<int>(got.phase)) +
      " depth=" + std::to_string(got.depth) + " group=" +
      std::to_string(got.group) + ", expected phase=" +
      std::to_string(static_cast<int>(expected.phase)) +
      " depth=" + std::to_string(expected.depth) +
      " group=" + std::to_string(expected.group));
}

namespace {

class InprocTransportImpl;

}  // namespace

class InprocTransport : public Transport {
 public:
  InprocTransport(InprocNetwork* net, int rank) : net_(net), rank_(rank) {}

  int rank() const override { return rank_; }
  int size() const override { return net_->size(); }

  void send(int dest, const MessageTags& tags, const Tensor& payload) override {
    net_->push(rank_, dest, tags, payload);
  }

  Tensor recv(int src, const MessageTags& expected) override {
    auto [tags, payload] = net_->pop(src, rank_);
    check_tags(tags, expected);
    return std::move(payload);
  }

 private:
  InprocNetwork* net_;
  int rank_;
};

InprocNetwork::InprocNetwork(int size, std::uint64_t scheduler_seed)
    : size_(size),
      seed_(scheduler_seed),
      boxes_(static_cast<std::size_t>(size) * static_cast<std::size_t>(size)),
      jitter_state_(scheduler_seed ? scheduler_seed : 1) {
  if (size < 1) throw config_error("network size must be >= 1");
}

std::unique_ptr<Transport> InprocNetwork::endpoint(int rank) {
  if (rank < 0 || rank >= size_) throw config_error("rank out of range");
  return std::make_unique<InprocTransport>(this, rank);
}

void InprocNetwork::poison(const std::string& reason) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    poisoned_ = true;
    poison_reason_ = reason;
  }
  cv_.notify_all();
}

void InprocNetwork::push(int src, int dst, const MessageTags& tags,
                         const Tensor& payload) {
  if (dst < 0 || dst >= size_ || src < 0 || src >= size_) {
    throw config_error("inproc send: rank out of range");
  }
  if (seed_ != 0) {
    // splitmix64 step; the sender stalls a few microseconds so delivery
    // order across pairs varies per seed while per-pair FIFO holds
    std::uint64_t z;
    {
      std::lock_guard<std::mutex> lock(mu_);
      jitter_state_ += 0x9E3779B97F4A7C15ull;
      z = jitter_state_;
    }
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    const auto us = static_cast<int>(z % 97);
    if (us > 64) {
      std::this_thread::sleep_for(std::chrono::microseconds(us - 64));
    } else if (us > 32) {
      std::this_thread::yield();
    }
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (poisoned_) throw transport_error("network poisoned: " + poison_reason_);
    boxes_[static_cast<std::size_t>(src) * size_ + dst].q.emplace_back(tags,
                                                                       payload);
  }
  cv_.notify_all();
}

std::pair<MessageTags, Tensor> InprocNetwork::pop(int src, int dst) {
  if (dst < 0 || dst >= size_ || src < 0 || src >= size_) {
    throw config_error("inproc recv: rank out of range");
  }
  std::unique_lock<std::mutex> lock(mu_);
  Mailbox& box = boxes_[static_cast<std::size_t>(src) * size_ + dst];
  cv_.wait(lock, [&] { return poisoned_ || !box.q.empty(); });
  if (poisoned_ && box.q.empty()) {
    throw transport_error("network poisoned: " + poison_reason_);
  }
  auto msg = std::move(box.q.front());
  box.q.pop_front();
  return msg;
}

}  // namespace adasum
