#pragma once

#include <cstdint>
#include <vector>

#include "adasum/model.hpp"
#include "adasum/tensor.hpp"

namespace adasum {

enum class OptKind { Sgd, Momentum, Adam, Lamb };

struct LrSchedule {
  enum class Kind { Constant, LinearWarmupDecay };

  Kind kind = Kind::Constant;
  double max_lr = 0.1;
  double warmup_frac = 0.0;
  std::int64_t total_steps = 0;

  static LrSchedule constant(double lr);
  static LrSchedule linear_warmup_decay(double max_lr, double warmup_frac,
                                        std::int64_t total_steps);

  // Learning rate applied at 0-based step index. Linear warmup from zero
  // to max_lr, then linear decay back to zero at total_steps.
  double lr_at(std::int64_t step) const;
};

struct OptimizerState {
  OptKind kind = OptKind::Sgd;
  LrSchedule schedule;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  Tensor m1;  // velocity / first moment
  Tensor m2;  // second moment

  static OptimizerState make(OptKind kind, const LrSchedule& schedule,
                             std::size_t param_count);
};

// Clamped LARS/LAMB-style trust ratio ||w|| / ||update||: 1 when either
// norm vanishes, otherwise clamped to [0.01, 10].
double lamb_trust_ratio(double weight_norm, double update_norm);

// Per-layer trust ratios the Lamb update would apply to `update`.
std::vector<double> lamb_trust_ratios(const Model& m, const Tensor& update);

// Applies one update in place; advances step and moment buffers.
void optimizer_step(OptimizerState& opt, Model& m, const Tensor& grad);

}  // namespace adasum
