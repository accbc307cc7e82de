#include "adasum/training.hpp"

#include <cmath>
#include <cstring>
#include <mutex>
#include <thread>

#include "adasum/combiner.hpp"

namespace adasum {

std::uint64_t param_hash(const Tensor& params) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ull;
    }
  };
  if (params.dtype() == Dtype::F64) {
    for (double v : params.f64_data()) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      mix(bits, 8);
    }
  } else {
    for (std::uint16_t b : params.f16_data()) mix(b, 2);
  }
  return h;
}

namespace {

const std::vector<int>& world_group(RankContext& ctx, std::vector<int>& storage) {
  storage.resize(static_cast<std::size_t>(ctx.size()));
  for (int i = 0; i < ctx.size(); ++i) storage[static_cast<std::size_t>(i)] = i;
  return storage;
}

void check_start_params(RankContext& ctx, const Tensor& params) {
  const std::uint64_t h = param_hash(params);
  std::vector<int> group;
  const std::vector<double> all = allgather_doubles(
      ctx, {static_cast<double>(h >> 32), static_cast<double>(h & 0xFFFFFFFFull)},
      world_group(ctx, group), {Phase::Control, 0, 0});
  for (std::size_t i = 0; i < all.size(); i += 2) {
    if (all[i] != all[0] || all[i + 1] != all[1]) {
      throw consistency_error("ranks disagree on starting parameters");
    }
  }
}

std::vector<double> gathered_layer_orthogonality(RankContext& ctx,
                                                 const Tensor& delta,
                                                 const LayerLayout& layout) {
  std::vector<int> group;
  const std::vector<double> all = allgather_doubles(
      ctx, delta.to_f64_vector(), world_group(ctx, group), {Phase::Control, 0, 1});
  std::vector<Tensor> gs;
  gs.reserve(static_cast<std::size_t>(ctx.size()));
  const std::size_t n = delta.size();
  for (int r = 0; r < ctx.size(); ++r) {
    gs.push_back(Tensor::from_f64(std::vector<double>(
        all.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(r) * n),
        all.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(r) + 1) * n))));
  }
  return orthogonality_per_layer(gs, layout);
}

double nanmean(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t k = 0;
  for (double x : v) {
    if (!std::isnan(x)) {
      s += x;
      ++k;
    }
  }
  return k == 0 ? std::nan("") : s / static_cast<double>(k);
}

// The per-layer slices of the delta travel as fused buffers, so one
// collective call covers many layers while dot products stay per layer.
// Models below the fusion threshold fuse into a single buffer.
Tensor reduce_fused(RankContext& ctx, const Tensor& delta,
                    const LayerLayout& layout, const TrainConfig& cfg) {
  std::vector<std::pair<std::uint64_t, Tensor>> parts;
  parts.reserve(layout.layer_count());
  for (std::size_t l = 0; l < layout.layer_count(); ++l) {
    const LayerSegment& seg = layout.segments()[l];
    parts.emplace_back(static_cast<std::uint64_t>(l),
                       delta.slice(seg.offset, seg.length));
  }
  const std::vector<FusedBuffer> buffers =
      fuse(std::move(parts), fusion_threshold_from_env());

  Tensor out = Tensor::zeros(delta.size(), delta.dtype());
  for (const FusedBuffer& buf : buffers) {
    const Tensor red = cfg.reduction == Reduction::Adasum
                           ? hierarchical_adasum(ctx, buf.data, buf.layout,
                                                 cfg.node_size)
                           : sum_rvh(ctx, buf.data);
    const auto pieces = unfuse(FusedBuffer{red, buf.layout, buf.source_ids});
    for (const auto& [id, piece] : pieces) {
      const LayerSegment& seg = layout.segments()[static_cast<std::size_t>(id)];
      for (std::size_t i = 0; i < seg.length; ++i) {
        out.set(seg.offset + i, piece[i]);
      }
    }
  }
  return out;
}

}  // namespace

StepReport distributed_step(RankContext* ctx, Model& m, OptimizerState& opt,
                            const std::vector<Batch>& batches,
                            const TrainConfig& cfg, ScaleState* scale,
                            bool measure_orthogonality) {
  if (cfg.local_steps < 1) {
    throw argument_error("distributed_step: local_steps must be >= 1");
  }
  if (batches.size() != static_cast<std::size_t>(cfg.local_steps)) {
    throw argument_error("distributed_step: expected one batch per local step");
  }
  StepReport report;
  if (ctx != nullptr && cfg.check_param_hash) check_start_params(*ctx, m.params());

  const Tensor start = m.params();
  double loss_sum = 0.0;
  for (const Batch& b : batches) {
    auto [loss, grad] = loss_and_grad(m, b);
    optimizer_step(opt, m, grad);
    loss_sum += loss;
  }
  report.local_loss_mean = loss_sum / static_cast<double>(batches.size());

  Tensor delta = axpby(1.0, m.params(), -1.0, start);

  if (ctx == nullptr || ctx->size() == 1) {
    // single rank: the local steps already are the update
    report.scale = scale != nullptr ? scale->scale : 1.0;
    report.orthogonality_mean = 1.0;
    report.layer_orthogonality.assign(m.layout().layer_count(), 1.0);
    return report;
  }

  if (measure_orthogonality) {
    report.layer_orthogonality =
        gathered_layer_orthogonality(*ctx, delta, m.layout());
    report.orthogonality_mean = nanmean(report.layer_orthogonality);
  }

  const double world = static_cast<double>(ctx->size());
  Tensor reduced;
  if (cfg.precision == Precision::F64) {
    if (!delta.all_finite()) {
      throw numeric_error("distributed_step: non-finite effective gradient");
    }
    reduced = reduce_fused(*ctx, delta, m.layout(), cfg);
    report.scale = 1.0;
  } else {
    if (scale == nullptr) {
      throw argument_error("distributed_step: f16 mode needs a ScaleState");
    }
    const Tensor cast = scaled_cast(delta, *scale);
    const Tensor wire = reduce_fused(*ctx, cast, m.layout(), cfg);
    CheckOutcome outcome = check_and_update(wire, *scale);
    report.scale = scale->scale;
    if (!outcome.accepted) {
      m.params() = start;  // skipped update, parameters bitwise unchanged
      report.accepted = false;
      return report;
    }
    reduced = std::move(*outcome.unscaled);
  }
  if (cfg.reduction == Reduction::Sum) {
    // averaging semantics; lr scaling is left to the schedule
    for (std::size_t i = 0; i < reduced.size(); ++i) {
      reduced.set(i, reduced[i] / world);
    }
  }

  m.params() = axpby(1.0, start, 1.0, reduced);
  return report;
}

std::int64_t planned_local_steps(const HarnessConfig& cfg, std::size_t train_rows) {
  const std::size_t per_rank = train_rows / static_cast<std::size_t>(cfg.train.ranks);
  const std::size_t micro = per_rank / cfg.train.microbatch;
  const std::size_t comm =
      micro / static_cast<std::size_t>(cfg.train.local_steps);
  return static_cast<std::int64_t>(comm) * cfg.train.local_steps * cfg.train.epochs;
}

HarnessResult run_training_rank(
    RankContext* ctx, const HarnessConfig& cfg,
    const std::function<void(const MetricsRow&)>& on_row) {
  const int rank = ctx != nullptr ? ctx->rank() : 0;
  const int ranks = cfg.train.ranks;
  if (ctx != nullptr && ctx->size() != ranks) {
    throw config_error("harness: transport size does not match configured ranks");
  }

  const DatasetPair data = make_dataset(cfg.dataset, cfg.train.seed);

  Model model = cfg.model == "logistic"
                    ? Model::logistic(data.train.dim)
                    : Model::mlp(data.train.dim, cfg.mlp_hidden, data.train.classes);
  if (cfg.model == "logistic" && data.train.classes != 2) {
    throw config_error("harness: logistic model needs a binary dataset");
  }
  Rng init_rng(cfg.train.seed * 0x2545F4914F6CDD1Dull + 0x9E3779B97F4A7C15ull);
  model.init_random(init_rng);

  const std::int64_t total_local = planned_local_steps(cfg, data.train.rows);
  if (total_local == 0) {
    throw config_error("harness: dataset too small for this rank/batch configuration");
  }
  const LrSchedule schedule =
      cfg.schedule_kind == LrSchedule::Kind::Constant
          ? LrSchedule::constant(cfg.max_lr)
          : LrSchedule::linear_warmup_decay(cfg.max_lr, cfg.warmup_frac, total_local);
  OptimizerState opt = OptimizerState::make(cfg.optimizer, schedule,
                                            model.param_count());
  ScaleState scale;
  scale.scale = cfg.loss_scale_init;
  scale.growth_interval = cfg.loss_scale_growth_interval;

  HarnessResult result;
  std::vector<int> group_storage;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const std::vector<std::size_t> shard = shard_indices(
        data.train.rows, rank, ranks, cfg.train.seed, static_cast<std::uint64_t>(epoch));
    const std::size_t micro_per_epoch = shard.size() / cfg.train.microbatch;
    const std::size_t comm_per_epoch =
        micro_per_epoch / static_cast<std::size_t>(cfg.train.local_steps);
    for (std::size_t cs = 0; cs < comm_per_epoch; ++cs) {
      std::vector<Batch> batches;
      batches.reserve(static_cast<std::size_t>(cfg.train.local_steps));
      for (int ls = 0; ls < cfg.train.local_steps; ++ls) {
        const std::size_t begin =
            (cs * static_cast<std::size_t>(cfg.train.local_steps) +
             static_cast<std::size_t>(ls)) *
            cfg.train.microbatch;
        batches.push_back(gather_batch(data.train, shard, begin, cfg.train.microbatch));
      }
      const double lr_now = opt.schedule.lr_at(opt.step);
      StepReport rep =
          distributed_step(ctx, model, opt, batches, cfg.train,
                           cfg.train.precision == Precision::F16 ? &scale : nullptr,
                           cfg.measure_orthogonality);
      result.comm_steps += 1;
      if (ctx != nullptr && ctx->size() > 1) result.allreduce_calls += 1;
      if (rep.accepted) result.accepted_steps += 1;

      double mean_loss = rep.local_loss_mean;
      if (ctx != nullptr && ctx->size() > 1) {
        const std::vector<double> sum = sum_allreduce(
            *ctx, {rep.local_loss_mean}, world_group(*ctx, group_storage),
            {Phase::Control, 0, 2});
        mean_loss = sum[0] / static_cast<double>(ctx->size());
      }

      MetricsRow row;
      row.step = step;
      row.epoch = epoch;
      row.rank_count = ranks;
      row.reduction = cfg.train.reduction == Reduction::Adasum ? "adasum" : "sum";
      row.local_steps = cfg.train.local_steps;
      row.train_loss = mean_loss;
      row.eval_accuracy = accuracy(model, data.eval);
      row.lr = lr_now;
      row.orthogonality_mean = rep.orthogonality_mean;
      row.layer_orthogonality = std::move(rep.layer_orthogonality);
      row.scale = rep.scale;
      if (on_row) on_row(row);
      result.rows.push_back(std::move(row));
      step += 1;
    }
  }

  result.final_eval_accuracy = accuracy(model, data.eval);
  result.final_train_loss = dataset_loss(model, data.train);
  result.final_model = std::move(model);
  return result;
}

void run_ranks_inproc(int ranks, std::uint64_t scheduler_seed,
                      const std::function<void(RankContext&)>& fn) {
  InprocNetwork net(ranks, scheduler_seed);
  std::vector<std::thread> threads;
  std::mutex mu;
  std::exception_ptr first_error;

  for (int r = 0; r < ranks; ++r) {
    threads.emplace_back([&, r] {
      try {
        auto endpoint = net.endpoint(r);
        RankContext ctx{*endpoint};
        fn(ctx);
      } catch (...) {
        {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
        }
        net.poison("rank " + std::to_string(r) + " failed");
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void run_ranks_tcp(int ranks, int base_port,
                   const std::function<void(RankContext&)>& fn) {
  std::vector<std::thread> threads;
  std::mutex mu;
  std::exception_ptr first_error;

  for (int r = 0; r < ranks; ++r) {
    threads.emplace_back([&, r] {
      try {
        TcpTransport transport(r, ranks, base_port);
        RankContext ctx{transport};
        fn(ctx);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        // destroying the transport closes sockets and unblocks peers
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace adasum
