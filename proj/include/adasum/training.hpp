#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adasum/collective.hpp"
#include "adasum/model.hpp"
#include "adasum/optimizer.hpp"
#include "adasum/precision.hpp"

namespace adasum {

enum class Reduction { Sum, Adasum };
enum class Precision { F64, F16 };

struct TrainConfig {
  int ranks = 1;
  std::size_t microbatch = 32;
  int local_steps = 1;
  Reduction reduction = Reduction::Adasum;
  Precision precision = Precision::F64;
  std::uint64_t seed = 1;
  int epochs = 2;
  int node_size = 1;
  // cross-rank equality check of the starting parameters before each
  // communication step
  bool check_param_hash = false;
};

struct StepReport {
  double local_loss_mean = 0.0;  // mean loss over this rank's local steps
  bool accepted = true;          // false when dynamic scaling rejected
  double scale = 1.0;            // loss scale after the step (1 in f64 mode)
  double orthogonality_mean = 0.0;
  std::vector<double> layer_orthogonality;
};

// One communication round: snapshot the parameters, take
// cfg.local_steps optimizer steps on local batches, then reduce the
// post-optimizer parameter delta across ranks and rebase the model as
// start + reduced delta. Sum reduction averages over the world; Adasum
// applies the adaptive sum per model layer. With ranks=1 (ctx null) the
// local steps stand as-is. In f16 mode the delta travels through
// scaled_cast / check_and_update, and a rejected step restores the
// snapshot bitwise.
StepReport distributed_step(RankContext* ctx, Model& m, OptimizerState& opt,
                            const std::vector<Batch>& batches,
                            const TrainConfig& cfg, ScaleState* scale,
                            bool measure_orthogonality);

// FNV-1a over the parameter payload bits.
std::uint64_t param_hash(const Tensor& params);

struct HarnessConfig {
  TrainConfig train;
  std::string model = "mlp";          // "logistic" or "mlp"
  std::string dataset = "two_spirals";
  std::size_t mlp_hidden = 32;
  OptKind optimizer = OptKind::Momentum;
  LrSchedule::Kind schedule_kind = LrSchedule::Kind::LinearWarmupDecay;
  double max_lr = 0.05;
  double warmup_frac = 0.17;
  double loss_scale_init = 32768.0;
  int loss_scale_growth_interval = 2000;
  bool measure_orthogonality = true;
};

struct MetricsRow {
  std::int64_t step = 0;  // communication step, 0-based
  int epoch = 0;
  int rank_count = 1;
  std::string reduction;
  int local_steps = 1;
  double train_loss = 0.0;  // mean over ranks of local mean loss
  double eval_accuracy = 0.0;
  double lr = 0.0;
  double orthogonality_mean = 0.0;
  std::vector<double> layer_orthogonality;
  double scale = 1.0;
};

struct HarnessResult {
  std::vector<MetricsRow> rows;
  Model final_model;
  std::int64_t comm_steps = 0;
  std::int64_t accepted_steps = 0;
  std::int64_t allreduce_calls = 0;
  double final_eval_accuracy = 0.0;
  double final_train_loss = 0.0;  // whole-train-set loss at the final params
};

// Full data-parallel training loop for one rank. Every rank builds the
// same dataset and model from the seed and returns the same metrics.
// ctx is null for single-rank runs. on_row, when given, sees each metrics
// row as soon as it exists, so callers keep partial output if a later
// step diverges.
HarnessResult run_training_rank(
    RankContext* ctx, const HarnessConfig& cfg,
    const std::function<void(const MetricsRow&)>& on_row = nullptr);

// Schedule length the harness will use: local optimizer steps per rank
// over the whole run (drives the warmup/decay schedule).
std::int64_t planned_local_steps(const HarnessConfig& cfg, std::size_t train_rows);

// Spawns one thread per rank over a fresh in-process network, runs fn,
// joins, and rethrows the first failure (poisoning the network so no
// peer hangs).
void run_ranks_inproc(int ranks, std::uint64_t scheduler_seed,
                      const std::function<void(RankContext&)>& fn);

// Same, but every rank gets a loopback TCP mesh endpoint.
void run_ranks_tcp(int ranks, int base_port,
                   const std::function<void(RankContext&)>& fn);

}  // namespace adasum
