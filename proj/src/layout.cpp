#include "adasum/layout.hpp"

#include <algorithm>

namespace adasum {

LayerLayout::LayerLayout(std::vector<LayerSegment> segments)
    : segments_(std::move(segments)) {
  std::size_t expect = 0;
  for (const LayerSegment& s : segments_) {
    if (s.offset != expect) {
      throw shape_error("layout: segments must be contiguous and ordered");
    }
    expect = s.offset + s.length;
  }
  total_len_ = expect;
}

LayerLayout LayerLayout::single(std::size_t total_len) {
  return LayerLayout({{0, total_len}});
}

LayerLayout LayerLayout::from_lengths(const std::vector<std::size_t>& lengths) {
  std::vector<LayerSegment> segs;
  segs.reserve(lengths.size());
  std::size_t off = 0;
  for (std::size_t len : lengths) {
    segs.push_back({off, len});
    off += len;
  }
  return LayerLayout(std::move(segs));
}

std::size_t LayerLayout::layer_of(std::size_t pos) const {
  if (pos >= total_len_) throw shape_error("layout: position out of range");
  auto it = std::upper_bound(
      segments_.begin(), segments_.end(), pos,
      [](std::size_t p, const LayerSegment& s) { return p < s.offset; });
  return static_cast<std::size_t>(it - segments_.begin()) - 1;
}

}  // namespace adasum
