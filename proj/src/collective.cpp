#include "adasum/collective.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "adasum/combiner.hpp"

namespace adasum {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

int int_log2(std::size_t v) {
  int l = 0;
  while ((std::size_t{1} << (l + 1)) <= v) ++l;
  return l;
}

// Deadlock-free pairwise swap: the lower rank writes first while the
// higher rank drains, then roles flip. Needed because TCP sends block
// once both directions fill their socket buffers.
Tensor exchange(Transport& t, int peer, const MessageTags& tags,
                const Tensor& mine) {
  if (t.rank() < peer) {
    t.send(peer, tags, mine);
    return t.recv(peer, tags);
  }
  Tensor got = t.recv(peer, tags);
  t.send(peer, tags, mine);
  return got;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype()) throw shape_error("concat: dtype mismatch");
  if (a.dtype() == Dtype::F64) {
    std::vector<double> out = a.f64_data();
    const auto& tail = b.f64_data();
    out.insert(out.end(), tail.begin(), tail.end());
    return Tensor::from_f64(std::move(out));
  }
  std::vector<std::uint16_t> out = a.f16_data();
  const auto& tail = b.f16_data();
  out.insert(out.end(), tail.begin(), tail.end());
  return Tensor::from_f16_bits(std::move(out));
}

int position_in_group(int rank, const std::vector<int>& group, int world) {
  int pos = -1;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i] < 0 || group[i] >= world) {
      throw config_error("collective: group member " + std::to_string(group[i]) +
                         " outside world of size " + std::to_string(world));
    }
    if (group[i] == rank) pos = static_cast<int>(i);
  }
  if (pos < 0) throw config_error("collective: caller is not a member of the group");
  return pos;
}

// Recursive vector halving. Levels with distance d < sum_width combine the
// two halves elementwise; higher levels apply per-layer adaptive-sum
// coefficients completed by a group allreduce of partial dot products.
// `offset` is the global position of the local slice x.
Tensor rvh_recurse(RankContext& ctx, const Tensor& x, std::size_t offset,
                   std::size_t d, std::size_t sum_width,
                   const LayerLayout& layout) {
  const int rank = ctx.rank();
  const std::size_t world = static_cast<std::size_t>(ctx.size());
  const std::uint16_t level = static_cast<std::uint16_t>(int_log2(d));
  const std::size_t d2 = 2 * d;
  const std::uint16_t pair_group = static_cast<std::uint16_t>(rank / d2);

  const std::size_t mid = x.size() / 2;
  const bool left = ((static_cast<std::size_t>(rank) / d) % 2) == 0;
  const int nghr = left ? rank + static_cast<int>(d) : rank - static_cast<int>(d);

  const MessageTags half_tags{Phase::HalfExchange, level, pair_group};
  Tensor a, b;
  std::size_t my_offset;
  if (left) {
    Tensor keep = x.slice(0, mid);
    Tensor got = exchange(ctx.transport, nghr, half_tags,
                          x.slice(mid, x.size() - mid));
    a = std::move(keep);
    b = std::move(got);
    my_offset = offset;
  } else {
    Tensor keep = x.slice(mid, x.size() - mid);
    Tensor got = exchange(ctx.transport, nghr, half_tags, x.slice(0, mid));
    a = std::move(got);
    b = std::move(keep);
    my_offset = offset + mid;
  }
  const std::size_t cur = a.size();

  Tensor reduced;
  if (d < sum_width) {
    reduced = axpby(1.0, a, 1.0, b);
  } else {
    // partial dot products for the layer fragments this slice holds
    const std::size_t layers = layout.layer_count();
    std::vector<double> partial(3 * layers, 0.0);
    for (std::size_t l = 0; l < layers; ++l) {
      const LayerSegment& seg = layout.segments()[l];
      const std::size_t lo = std::max(seg.offset, my_offset);
      const std::size_t hi = std::min(seg.offset + seg.length, my_offset + cur);
      if (lo >= hi) continue;
      const DotTriple t = dot_triple_range(a, b, lo - my_offset, hi - lo);
      partial[3 * l] = t.ab;
      partial[3 * l + 1] = t.aa;
      partial[3 * l + 2] = t.bb;
    }

    std::vector<int> group(d2);
    const int base = (rank / static_cast<int>(d2)) * static_cast<int>(d2);
    for (std::size_t i = 0; i < d2; ++i) group[i] = base + static_cast<int>(i);
    const std::vector<double> full = sum_allreduce(
        ctx, partial, group, {Phase::DotAllreduce, level, pair_group});

    reduced = Tensor::zeros(cur, x.dtype());
    for (std::size_t l = 0; l < layers; ++l) {
      const LayerSegment& seg = layout.segments()[l];
      const std::size_t lo = std::max(seg.offset, my_offset);
      const std::size_t hi = std::min(seg.offset + seg.length, my_offset + cur);
      if (lo >= hi) continue;
      const DotTriple t{full[3 * l], full[3 * l + 1], full[3 * l + 2]};
      const AdasumCoefficients c = adasum_coefficients(t);
      for (std::size_t i = lo - my_offset; i < hi - my_offset; ++i) {
        reduced.set(i, c.c1 * a[i] + c.c2 * b[i]);
      }
    }
  }

  if (d2 < world) {
    reduced = rvh_recurse(ctx, reduced, my_offset, d2, sum_width, layout);
  }

  const MessageTags gather_tags{Phase::Allgather, level, pair_group};
  Tensor other = exchange(ctx.transport, nghr, gather_tags, reduced);
  return left ? concat(reduced, other) : concat(other, reduced);
}

Tensor rvh_run(RankContext& ctx, const Tensor& x, std::size_t sum_width,
               const LayerLayout& layout) {
  if (!is_power_of_two(ctx.size())) {
    throw config_error("collective: world size must be a power of two, got " +
                       std::to_string(ctx.size()));
  }
  if (layout.total_len() != x.size()) {
    throw shape_error("collective: layout does not cover the tensor");
  }
  if (ctx.size() == 1) return x;
  return rvh_recurse(ctx, x, 0, 1, sum_width, layout);
}

}  // namespace

std::vector<double> allgather_doubles(RankContext& ctx,
                                      const std::vector<double>& v,
                                      const std::vector<int>& group,
                                      MessageTags tags) {
  const std::size_t n = group.size();
  if (!is_power_of_two(static_cast<int>(n))) {
    throw config_error("allgather: group size must be a power of two");
  }
  const int pos = position_in_group(ctx.rank(), group, ctx.size());
  const std::size_t len = v.size();
  std::vector<double> data(n * len, 0.0);
  std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(pos * len));

  for (std::size_t step = 1; step < n; step *= 2) {
    const std::size_t base = static_cast<std::size_t>(pos) & ~(step - 1);
    const std::size_t peer_base = base ^ step;
    const int peer = group[static_cast<std::size_t>(pos) ^ step];
    std::vector<double> block(data.begin() + static_cast<std::ptrdiff_t>(base * len),
                              data.begin() + static_cast<std::ptrdiff_t>((base + step) * len));
    Tensor got = exchange(ctx.transport, peer, tags,
                          Tensor::from_f64(std::move(block)));
    if (got.size() != step * len) {
      throw protocol_error("allgather: unexpected block size from rank " +
                           std::to_string(peer));
    }
    const std::vector<double>& theirs = got.f64_data();
    std::copy(theirs.begin(), theirs.end(),
              data.begin() + static_cast<std::ptrdiff_t>(peer_base * len));
  }
  return data;
}

std::vector<double> sum_allreduce(RankContext& ctx, const std::vector<double>& v,
                                  const std::vector<int>& group,
                                  MessageTags tags) {
  const std::size_t n = group.size();
  if (n == 1) {
    position_in_group(ctx.rank(), group, ctx.size());
    return v;
  }
  const std::vector<double> all = allgather_doubles(ctx, v, group, tags);
  const std::size_t len = v.size();
  // accumulate in group order so every member computes identical bits
  std::vector<double> out(len, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < len; ++j) out[j] += all[i * len + j];
  }
  return out;
}

Tensor adasum_rvh(RankContext& ctx, const Tensor& x, const LayerLayout& layout) {
  return rvh_run(ctx, x, 1, layout);
}

Tensor sum_rvh(RankContext& ctx, const Tensor& x) {
  return rvh_run(ctx, x, static_cast<std::size_t>(ctx.size()),
                 LayerLayout::single(x.size()));
}

Tensor hierarchical_adasum(RankContext& ctx, const Tensor& x,
                           const LayerLayout& layout, int node_size) {
  if (node_size < 1 || ctx.size() % node_size != 0) {
    throw config_error("hierarchical: node_size must divide the world size");
  }
  if (!is_power_of_two(node_size) || !is_power_of_two(ctx.size() / node_size)) {
    throw config_error("hierarchical: node_size and node count must be powers of two");
  }
  return rvh_run(ctx, x, static_cast<std::size_t>(node_size), layout);
}

std::vector<FusedBuffer> fuse(std::vector<std::pair<std::uint64_t, Tensor>> tensors,
                              std::size_t threshold_bytes) {
  if (tensors.empty()) return {};
  std::sort(tensors.begin(), tensors.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < tensors.size(); ++i) {
    if (tensors[i].first == tensors[i - 1].first) {
      throw argument_error("fuse: duplicate tensor id " +
                           std::to_string(tensors[i].first));
    }
    if (tensors[i].second.dtype() != tensors.front().second.dtype()) {
      throw shape_error("fuse: mixed dtypes in one fusion group");
    }
  }
  const Dtype dt = tensors.front().second.dtype();
  const std::size_t elem_bytes = dt == Dtype::F64 ? 8 : 2;

  std::vector<FusedBuffer> out;
  std::size_t i = 0;
  while (i < tensors.size()) {
    std::size_t bytes = 0;
    std::vector<std::size_t> lengths;
    std::vector<std::uint64_t> ids;
    Tensor data = Tensor::zeros(0, dt);
    // always take at least one tensor, even if it alone exceeds the cap
    do {
      const Tensor& t = tensors[i].second;
      data = concat(data, t);
      lengths.push_back(t.size());
      ids.push_back(tensors[i].first);
      bytes += t.size() * elem_bytes;
      ++i;
    } while (i < tensors.size() &&
             bytes + tensors[i].second.size() * elem_bytes <= threshold_bytes);
    out.push_back(FusedBuffer{std::move(data), LayerLayout::from_lengths(lengths),
                              std::move(ids)});
  }
  return out;
}

std::vector<std::pair<std::uint64_t, Tensor>> unfuse(const FusedBuffer& buf) {
  if (buf.source_ids.size() != buf.layout.layer_count()) {
    throw shape_error("unfuse: ids do not match layout");
  }
  std::vector<std::pair<std::uint64_t, Tensor>> out;
  out.reserve(buf.source_ids.size());
  for (std::size_t l = 0; l < buf.source_ids.size(); ++l) {
    const LayerSegment& seg = buf.layout.segments()[l];
    out.emplace_back(buf.source_ids[l], buf.data.slice(seg.offset, seg.length));
  }
  return out;
}

std::size_t fusion_threshold_from_env() {
  if (const char* s = std::getenv("ADASUM_FUSION_THRESHOLD")) {
    const long long v = std::atoll(s);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 4u * 1024u * 1024u;
}

int node_size_from_env() {
  if (const char* s = std::getenv("ADASUM_NODE_SIZE")) {
    const int v = std::atoi(s);
    if (v > 0) return v;
  }
  return 1;
}

}  // namespace adasum
