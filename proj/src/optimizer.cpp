#include "adasum/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "adasum/errors.hpp"

namespace adasum {

LrSchedule LrSchedule::constant(double lr) {
  LrSchedule s;
  s.kind = Kind::Constant;
  s.max_lr = lr;
  return s;
}

LrSchedule LrSchedule::linear_warmup_decay(double max_lr, double warmup_frac,
                                           std::int64_t total_steps) {
  LrSchedule s;
  s.kind = Kind::LinearWarmupDecay;
  s.max_lr = max_lr;
  s.warmup_frac = warmup_frac;
  s.total_steps = total_steps;
  return s;
}

double LrSchedule::lr_at(std::int64_t step) const {
  if (kind == Kind::Constant) return max_lr;
  if (total_steps <= 0) return max_lr;
  const double t = static_cast<double>(step + 1);
  const double total = static_cast<double>(total_steps);
  const double warm = std::max(1.0, std::round(warmup_frac * total));
  if (t <= warm) return max_lr * t / warm;
  if (t >= total) return 0.0;
  return max_lr * (total - t) / (total - warm);
}

OptimizerState OptimizerState::make(OptKind kind, const LrSchedule& schedule,
                                    std::size_t param_count) {
  OptimizerState s;
  s.kind = kind;
  s.schedule = schedule;
  if (kind != OptKind::Sgd) s.m1 = Tensor::zeros(param_count);
  if (kind == OptKind::Adam || kind == OptKind::Lamb) {
    s.m2 = Tensor::zeros(param_count);
  }
  return s;
}

double lamb_trust_ratio(double weight_norm, double update_norm) {
  if (weight_norm == 0.0 || update_norm == 0.0) return 1.0;
  return std::clamp(weight_norm / update_norm, 0.01, 10.0);
}

namespace {

double segment_norm(const Tensor& t, const LayerSegment& seg) {
  double s = 0.0;
  for (std::size_t i = seg.offset; i < seg.offset + seg.length; ++i) {
    s += t[i] * t[i];
  }
  return std::sqrt(s);
}

// Bias-corrected Adam direction m_hat / (sqrt(v_hat) + eps).
Tensor adam_direction(OptimizerState& opt, const Tensor& grad) {
  const std::size_t n = grad.size();
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  Tensor dir = Tensor::zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    const double m = opt.beta1 * opt.m1[i] + (1.0 - opt.beta1) * g;
    const double v = opt.beta2 * opt.m2[i] + (1.0 - opt.beta2) * g * g;
    opt.m1.set(i, m);
    opt.m2.set(i, v);
    dir.set(i, (m / bc1) / (std::sqrt(v / bc2) + opt.eps));
  }
  return dir;
}

}  // namespace

std::vector<double> lamb_trust_ratios(const Model& m, const Tensor& update) {
  std::vector<double> out;
  out.reserve(m.layout().layer_count());
  for (const LayerSegment& seg : m.layout().segments()) {
    out.push_back(lamb_trust_ratio(segment_norm(m.params(), seg),
                                   segment_norm(update, seg)));
  }
  return out;
}

void optimizer_step(OptimizerState& opt, Model& m, const Tensor& grad) {
  if (grad.size() != m.param_count()) {
    throw shape_error("optimizer_step: gradient shape mismatch");
  }
  if (!grad.all_finite()) {
    throw numeric_error("optimizer_step: non-finite gradient");
  }
  const double lr = opt.schedule.lr_at(opt.step);
  opt.step += 1;
  Tensor& w = m.params();

  switch (opt.kind) {
    case OptKind::Sgd: {
      for (std::size_t i = 0; i < w.size(); ++i) w.set(i, w[i] - lr * grad[i]);
      return;
    }
    case OptKind::Momentum: {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double v = opt.momentum * opt.m1[i] + grad[i];
        opt.m1.set(i, v);
        w.set(i, w[i] - lr * v);
      }
      return;
    }
    case OptKind::Adam: {
      const Tensor dir = adam_direction(opt, grad);
      for (std::size_t i = 0; i < w.size(); ++i) w.set(i, w[i] - lr * dir[i]);
      return;
    }
    case OptKind::Lamb: {
      const Tensor dir = adam_direction(opt, grad);
      const std::vector<double> ratios = lamb_trust_ratios(m, dir);
      const auto& segs = m.layout().segments();
      for (std::size_t l = 0; l < segs.size(); ++l) {
        const double scale = lr * ratios[l];
        for (std::size_t i = segs[l].offset; i < segs[l].offset + segs[l].length; ++i) {
          w.set(i, w[i] - scale * dir[i]);
        }
      }
      return;
    }
  }
}

}  // namespace adasum
