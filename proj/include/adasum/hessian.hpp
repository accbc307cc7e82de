#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adasum/model.hpp"
#include "adasum/tensor.hpp"

namespace adasum {

// Dense Hessian of the batch loss at the current parameters, row-major
// param_count x param_count, symmetrized as (H + H^T)/2. Analytic for
// logistic regression (X^T diag(p(1-p)) X / b plus any ridge term);
// central finite differences of the analytic gradient otherwise.
// Parameter counts above 200 are refused.
std::vector<double> exact_hessian(const Model& m, const Batch& batch);

// Central-difference Hessian of the analytic gradient; the cross-check
// oracle for the analytic path.
std::vector<double> finite_diff_hessian(const Model& m, const Batch& batch,
                                        double step = 1e-5);

// w0 - alpha*(g1 + g2 - alpha*H2*g1): two SGD steps collapsed into one
// update, with the second gradient's staleness removed to first order by
// the Hessian of its own loss.
Tensor sequential_emulation_step(const Tensor& w0, const Tensor& g1,
                                 const Tensor& g2, const std::vector<double>& h2,
                                 double alpha);

// n-gradient generalization: fold left to right, correcting each gradient
// by its Hessian applied to the update accumulated so far.
Tensor sequential_emulation_fold(const Tensor& w0, const std::vector<Tensor>& gs,
                                 const std::vector<std::vector<double>>& hs,
                                 double alpha);

// w0 - alpha*(g1 + g2 - (g2.g1/||g2||^2) g2): the rank-1 outer-product
// stand-in for the Hessian correction at its optimal step size. A zero g2
// falls back to w0 - alpha*g1. Averaging this with its argument swap
// equals w0 - alpha*adasum_pair(g1, g2).
Tensor ggt_approx_step(const Tensor& w0, const Tensor& g1, const Tensor& g2,
                       double alpha);

struct SeqErrorConfig {
  int ranks = 16;
  int steps = 200;
  std::size_t microbatch = 8;
  // the spirals task under a linear model never saturates, so the Hessian
  // stays substantial and the staleness corrections matter; alpha near
  // 1/lambda of that Hessian keeps the corrections first-order valid
  double alpha = 2.0;
  std::uint64_t seed = 1;
  std::string dataset = "two_spirals";
};

struct SeqErrorRow {
  int step = 0;
  double rel_err_adasum = 0.0;
  double rel_err_sum = 0.0;
  double grad_norm_mean = 0.0;
  double orthogonality = 0.0;
  double cum_rel_err_adasum = 0.0;  // running sum of per-step errors
  double cum_rel_err_sum = 0.0;
  bool skipped = false;  // oracle update had zero norm
};

// Single-process replay of a data-parallel logistic run. At every
// communication step, from the same starting point and the same per-rank
// gradients, computes the adaptive-sum update, the synchronous summed
// update, and the exact-Hessian sequential emulation, then reports
// ||update - oracle|| / ||oracle|| for both. The trajectory itself
// advances with the adaptive-sum update.
std::vector<SeqErrorRow> relative_error_experiment(const SeqErrorConfig& cfg);

}  // namespace adasum
