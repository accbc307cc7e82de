#pragma once

#include <optional>

#include "adasum/tensor.hpp"

namespace adasum {

// Dynamic loss-scale state for low-precision communication. The scale is a
// power of two: halved (backoff) whenever a reduced tensor comes back with
// NaN or inf, grown after growth_interval consecutive clean steps. Scale
// excursions are clamped to [2^-10, 2^30] so a pathological run cannot
// drive it to zero or overflow.
struct ScaleState {
  double scale = 32768.0;  // 2^15
  int good_steps = 0;
  int growth_interval = 2000;
  double backoff = 2.0;
  double growth = 2.0;

  static constexpr double kMinScale = 0x1.0p-10;
  static constexpr double kMaxScale = 0x1.0p30;
};

// quantize_f16(scale * t). Power-of-two scaling is exact until the value
// leaves the binary16 range, where it becomes inf (detectable downstream).
Tensor scaled_cast(const Tensor& t, const ScaleState& s);

struct CheckOutcome {
  bool accepted = false;
  // Result divided by the pre-update scale, widened to f64. Present only
  // when accepted.
  std::optional<Tensor> unscaled;
};

// Inspects a post-allreduce tensor. Any NaN/inf rejects the step: the
// scale backs off, good_steps resets, and the caller must skip the model
// update. Clean results are unscaled and accepted; after growth_interval
// consecutive acceptances the scale grows. Every rank sees the same
// reduced bits, so all ranks take the same branch.
CheckOutcome check_and_update(const Tensor& result, ScaleState& s);

}  // namespace adasum
