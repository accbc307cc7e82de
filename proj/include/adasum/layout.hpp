#pragma once

#include <cstddef>
#include <vector>

#include "adasum/errors.hpp"

namespace adasum {

struct LayerSegment {
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const LayerSegment&) const = default;
};

// Partition of a flat vector into per-layer segments. Segments are
// contiguous, disjoint, ordered by offset, and cover [0, total_len).
class LayerLayout {
 public:
  LayerLayout() = default;

  // Validates the partition invariants.
  explicit LayerLayout(std::vector<LayerSegment> segments);

  // One segment covering the whole vector.
  static LayerLayout single(std::size_t total_len);

  // Consecutive segments with the given lengths.
  static LayerLayout from_lengths(const std::vector<std::size_t>& lengths);

  const std::vector<LayerSegment>& segments() const { return segments_; }
  std::size_t layer_count() const { return segments_.size(); }
  std::size_t total_len() const { return total_len_; }

  // Index of the layer containing flat position pos.
  std::size_t layer_of(std::size_t pos) const;

  bool operator==(const LayerLayout&) const = default;

 private:
  std::vector<LayerSegment> segments_;
  std::size_t total_len_ = 0;
};

}  // namespace adasum
