#include "adasum/precision.hpp"

#include <algorithm>

namespace adasum {

Tensor scaled_cast(const Tensor& t, const ScaleState& s) {
  std::vector<std::uint16_t> bits;
  bits.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    bits.push_back(f16_from_f64(s.scale * t[i]));
  }
  return Tensor::from_f16_bits(std::move(bits));
}

CheckOutcome check_and_update(const Tensor& result, ScaleState& s) {
  if (!result.all_finite()) {
    s.scale = std::max(s.scale / s.backoff, ScaleState::kMinScale);
    s.good_steps = 0;
    return {false, std::nullopt};
  }
  const double inv = 1.0 / s.scale;  // scale is a power of two, so exact
  std::vector<double> out;
  out.reserve(result.size());
  for (std::size_t i = 0; i < result.size(); ++i) out.push_back(result[i] * inv);
  s.good_steps += 1;
  if (s.good_steps >= s.growth_interval) {
    s.scale = std::min(s.scale * s.growth, ScaleState::kMaxScale);
    s.good_steps = 0;
  }
  return {true, Tensor::from_f64(std::move(out))};
}

}  // namespace adasum
