#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "adasum/layout.hpp"
#include "adasum/tensor.hpp"
#include "adasum/transport.hpp"

namespace adasum {

// One rank's identity plus its blocking endpoint into the network.
// Collectives are bulk-synchronous: every rank in the world (or group)
// must call the same operation in the same order.
struct RankContext {
  Transport& transport;

  int rank() const { return transport.rank(); }
  int size() const { return transport.size(); }
};

// Elementwise sum across `group`, returned on every member. Communication
// is recursive doubling inside the group (group size must be a power of
// two and contain the caller); the final accumulation runs in group-rank
// order in double so every member gets identical bits.
std::vector<double> sum_allreduce(RankContext& ctx, const std::vector<double>& v,
                                  const std::vector<int>& group,
                                  MessageTags tags = {Phase::Control, 0, 0});

// Concatenation of every member's vector in group order, on every member.
std::vector<double> allgather_doubles(RankContext& ctx,
                                      const std::vector<double>& v,
                                      const std::vector<int>& group,
                                      MessageTags tags = {Phase::Control, 0, 0});

// Adaptive-sum allreduce by recursive vector halving. Every rank passes an
// equal-length tensor and identical layout; every rank returns the same
// combined tensor, equal to adasum_tree over the per-rank inputs with
// per-layer coefficients. World size must be a power of two.
Tensor adasum_rvh(RankContext& ctx, const Tensor& x, const LayerLayout& layout);

// Elementwise-sum baseline on the same schedule and transport.
Tensor sum_rvh(RankContext& ctx, const Tensor& x);

// Groups of node_size consecutive ranks are summed elementwise first; the
// adaptive reduction then runs across groups, and an intra-node allgather
// restores full vectors. node_size=1 degenerates to adasum_rvh and
// node_size=size to sum_rvh, bitwise.
Tensor hierarchical_adasum(RankContext& ctx, const Tensor& x,
                           const LayerLayout& layout, int node_size);

// Fused tensor with recorded per-source boundaries, so one collective call
// serves many layers while dot products stay per layer.
struct FusedBuffer {
  Tensor data;
  LayerLayout layout;
  std::vector<std::uint64_t> source_ids;  // one per layout segment
};

// Packs tensors into fused buffers in ascending-id order (so all ranks
// fuse identically), splitting when a buffer would exceed threshold_bytes.
// Ids must be unique and dtypes uniform.
std::vector<FusedBuffer> fuse(std::vector<std::pair<std::uint64_t, Tensor>> tensors,
                              std::size_t threshold_bytes);

std::vector<std::pair<std::uint64_t, Tensor>> unfuse(const FusedBuffer& buf);

// ADASUM_FUSION_THRESHOLD in bytes; default 4 MiB.
std::size_t fusion_threshold_from_env();

// ADASUM_NODE_SIZE; default 1 (flat reduction).
int node_size_from_env();

}  // namespace adasum
