#include "adasum/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>

#include "adasum/combiner.hpp"

namespace adasum {
namespace cli {

namespace fs = std::filesystem;

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const numeric_error&) {
    return kExitNumeric;
  } catch (const protocol_error&) {
    return kExitTransport;
  } catch (const transport_error&) {
    return kExitTransport;
  } catch (const error&) {
    return kExitUsage;  // argument/config/shape/io
  } catch (const std::exception&) {
    return kExitUsage;
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double percentile95(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t idx = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xCBF29CE484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// Run manifest: one per run directory, key=value, diffable. The config
// hash covers every config line so reruns are attributable.
class Manifest {
 public:
  Manifest(std::string command, std::string out_dir)
      : command_(std::move(command)), out_dir_(std::move(out_dir)) {
    started_ = timestamp_utc();
  }

  void set(const std::string& key, const std::string& value) {
    config_[key] = value;
  }
  void set(const std::string& key, double v) { set(key, format_double(v)); }
  void set(const std::string& key, std::int64_t v) { set(key, std::to_string(v)); }
  void add_output(const std::string& name) { outputs_.push_back(name); }

  void write(int exit_code) const {
    std::uint64_t h = fnv1a(command_);
    for (const auto& [k, v] : config_) h = fnv1a(k + "=" + v, h);
    std::ofstream out(fs::path(out_dir_) / "manifest.txt");
    out << "command=" << command_ << "\n";
    for (const auto& [k, v] : config_) out << k << "=" << v << "\n";
    out << "config_hash=" << hex64(h) << "\n";
    out << "started_at=" << started_ << "\n";
    out << "finished_at=" << timestamp_utc() << "\n";
    for (const std::string& o : outputs_) out << "output=" << o << "\n";
    out << "exit_code=" << exit_code << "\n";
  }

 private:
  std::string command_;
  std::string out_dir_;
  std::string started_;
  std::map<std::string, std::string> config_;
  std::vector<std::string> outputs_;
};

void fill_train_manifest(Manifest& man, const HarnessConfig& cfg) {
  man.set("ranks", static_cast<std::int64_t>(cfg.train.ranks));
  man.set("microbatch", static_cast<std::int64_t>(cfg.train.microbatch));
  man.set("local_steps", static_cast<std::int64_t>(cfg.train.local_steps));
  man.set("reduction",
          cfg.train.reduction == Reduction::Adasum ? "adasum" : "sum");
  man.set("precision", cfg.train.precision == Precision::F16 ? "f16" : "f64");
  man.set("seed", static_cast<std::int64_t>(cfg.train.seed));
  man.set("epochs", static_cast<std::int64_t>(cfg.train.epochs));
  man.set("node_size", static_cast<std::int64_t>(cfg.train.node_size));
  man.set("model", cfg.model);
  man.set("dataset", cfg.dataset);
  man.set("mlp_hidden", static_cast<std::int64_t>(cfg.mlp_hidden));
  switch (cfg.optimizer) {
    case OptKind::Sgd: man.set("optimizer", "sgd"); break;
    case OptKind::Momentum: man.set("optimizer", "momentum"); break;
    case OptKind::Adam: man.set("optimizer", "adam"); break;
    case OptKind::Lamb: man.set("optimizer", "lamb"); break;
  }
  man.set("schedule", cfg.schedule_kind == LrSchedule::Kind::Constant
                          ? "constant"
                          : "linear_warmup_decay");
  man.set("max_lr", cfg.max_lr);
  man.set("warmup_frac", cfg.warmup_frac);
  man.set("loss_scale_init", cfg.loss_scale_init);
  man.set("loss_scale_growth_interval",
          static_cast<std::int64_t>(cfg.loss_scale_growth_interval));
}

void write_metrics_header(std::ofstream& out) {
  out << "step,epoch,rank_count,reduction,local_steps,train_loss,"
         "eval_accuracy,lr,orthogonality_mean,scale\n";
}

void write_metrics_row(std::ofstream& out, const MetricsRow& r) {
  out << r.step << ',' << r.epoch << ',' << r.rank_count << ',' << r.reduction
      << ',' << r.local_steps << ',' << format_double(r.train_loss) << ','
      << format_double(r.eval_accuracy) << ',' << format_double(r.lr) << ','
      << format_double(r.orthogonality_mean) << ',' << format_double(r.scale)
      << '\n';
  out.flush();
}

}  // namespace

int cmd_train(const TrainOptions& opt) {
  // a tcp worker process joining as rank > 0 computes but does not write
  const bool writer = !(opt.transport == "tcp" && opt.tcp_rank > 0);
  Manifest man("train", opt.out_dir);
  fill_train_manifest(man, opt.harness);
  man.set("transport", opt.transport);
  man.add_output("metrics.csv");

  std::ofstream csv;
  if (writer) {
    fs::create_directories(opt.out_dir);
    csv.open(fs::path(opt.out_dir) / "metrics.csv");
    write_metrics_header(csv);
  }
  std::mutex csv_mu;
  HarnessResult rank0_result;

  auto rank_fn = [&](RankContext& ctx) {
    const bool emit = ctx.rank() == 0;
    HarnessResult res = run_training_rank(
        &ctx, opt.harness, [&](const MetricsRow& row) {
          if (!emit) return;
          std::lock_guard<std::mutex> lock(csv_mu);
          write_metrics_row(csv, row);
        });
    if (emit) rank0_result = std::move(res);
  };

  try {
    if (opt.harness.train.ranks == 1) {
      rank0_result = run_training_rank(nullptr, opt.harness,
                                       [&](const MetricsRow& row) {
                                         write_metrics_row(csv, row);
                                       });
    } else if (opt.transport == "tcp" && opt.tcp_rank >= 0) {
      TcpTransport transport(opt.tcp_rank, opt.harness.train.ranks, opt.base_port);
      RankContext ctx{transport};
      rank_fn(ctx);
    } else if (opt.transport == "tcp") {
      run_ranks_tcp(opt.harness.train.ranks, opt.base_port, rank_fn);
    } else if (opt.transport == "inproc") {
      run_ranks_inproc(opt.harness.train.ranks, 0, rank_fn);
    } else {
      throw argument_error("train: unknown transport " + opt.transport);
    }
  } catch (...) {
    const int code = exit_code_for_current_exception();
    if (writer) {
      man.set("allreduce_calls", rank0_result.allreduce_calls);
      man.write(code);
    }
    return code;
  }

  if (writer) {
    man.set("allreduce_calls", rank0_result.allreduce_calls);
    man.set("comm_steps", rank0_result.comm_steps);
    man.set("accepted_steps", rank0_result.accepted_steps);
    man.set("final_eval_accuracy", rank0_result.final_eval_accuracy);
    man.set("final_train_loss", rank0_result.final_train_loss);
    man.write(kExitOk);
  }
  return kExitOk;
}

BenchPoint bench_point(RankContext& ctx, std::size_t total_bytes, int tensors,
                       int trials, std::uint64_t seed) {
  const std::size_t elems = std::max<std::size_t>(
      total_bytes / 8 / static_cast<std::size_t>(tensors), 1);
  Rng rng(seed * 0x9E3779B97F4A7C15ull +
          static_cast<std::uint64_t>(ctx.rank()) * 0xBF58476D1CE4E5B9ull +
          total_bytes);
  std::vector<std::pair<std::uint64_t, Tensor>> parts;
  parts.reserve(static_cast<std::size_t>(tensors));
  for (int t = 0; t < tensors; ++t) {
    std::vector<double> vals(elems);
    for (double& v : vals) v = rng.normal();
    parts.emplace_back(static_cast<std::uint64_t>(t),
                       Tensor::from_f64(std::move(vals)));
  }
  // one fused buffer per point
  std::vector<FusedBuffer> fused =
      fuse(std::move(parts), std::numeric_limits<std::size_t>::max());
  const FusedBuffer& buf = fused.front();

  std::vector<int> group(static_cast<std::size_t>(ctx.size()));
  for (int i = 0; i < ctx.size(); ++i) group[static_cast<std::size_t>(i)] = i;

  BenchPoint point;
  for (int trial = 0; trial < trials; ++trial) {
    sum_allreduce(ctx, {0.0}, group, {Phase::Control, 0, 7});  // barrier
    auto t0 = std::chrono::steady_clock::now();
    Tensor a = adasum_rvh(ctx, buf.data, buf.layout);
    auto t1 = std::chrono::steady_clock::now();
    point.adasum_seconds.push_back(
        std::chrono::duration<double>(t1 - t0).count());

    sum_allreduce(ctx, {0.0}, group, {Phase::Control, 0, 7});
    t0 = std::chrono::steady_clock::now();
    Tensor s = sum_rvh(ctx, buf.data);
    t1 = std::chrono::steady_clock::now();
    point.sum_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

    if (trial == 0) {
      point.adasum_result = std::move(a);
      point.sum_result = std::move(s);
    }
  }
  return point;
}

int cmd_bench(const BenchOptions& opt) {
  fs::create_directories(opt.out_dir);
  Manifest man("bench", opt.out_dir);
  man.set("ranks", static_cast<std::int64_t>(opt.ranks));
  man.set("k_min", static_cast<std::int64_t>(opt.k_min));
  man.set("k_max", static_cast<std::int64_t>(opt.k_max));
  man.set("trials", static_cast<std::int64_t>(opt.trials));
  man.set("tensors", static_cast<std::int64_t>(opt.tensors));
  man.set("transport", opt.transport);
  man.set("seed", static_cast<std::int64_t>(opt.seed));
  man.add_output("bench.csv");

  std::ofstream csv(fs::path(opt.out_dir) / "bench.csv");
  csv << "bytes,op,median_s,p95_s\n";

  std::mutex mu;
  std::map<std::size_t, BenchPoint> points;

  auto rank_fn = [&](RankContext& ctx) {
    for (int k = opt.k_min; k <= opt.k_max; ++k) {
      const std::size_t bytes = std::size_t{1} << k;
      BenchPoint p = bench_point(ctx, bytes, opt.tensors, opt.trials, opt.seed);
      if (ctx.rank() == 0) {
        std::lock_guard<std::mutex> lock(mu);
        points[bytes] = std::move(p);
      }
    }
  };

  try {
    if (opt.transport == "tcp") {
      run_ranks_tcp(opt.ranks, opt.base_port, rank_fn);
    } else {
      run_ranks_inproc(opt.ranks, 0, rank_fn);
    }
  } catch (...) {
    const int code = exit_code_for_current_exception();
    man.write(code);
    return code;
  }

  for (const auto& [bytes, p] : points) {
    csv << bytes << ",adasum_rvh," << format_double(median(p.adasum_seconds))
        << ',' << format_double(percentile95(p.adasum_seconds)) << '\n';
    csv << bytes << ",sum_rvh," << format_double(median(p.sum_seconds)) << ','
        << format_double(percentile95(p.sum_seconds)) << '\n';
  }
  man.write(kExitOk);
  return kExitOk;
}

int cmd_lemma_check(const LemmaOptions& opt) {
  fs::create_directories(opt.out_dir);
  Manifest man("lemma-check", opt.out_dir);
  man.set("trials", static_cast<std::int64_t>(opt.trials));
  man.set("dim_min", static_cast<std::int64_t>(opt.dim_min));
  man.set("dim_max", static_cast<std::int64_t>(opt.dim_max));
  man.set("atoms_min", static_cast<std::int64_t>(opt.atoms_min));
  man.set("atoms_max", static_cast<std::int64_t>(opt.atoms_max));
  man.set("seed", static_cast<std::int64_t>(opt.seed));
  man.add_output("lemmas.csv");

  std::ofstream csv(fs::path(opt.out_dir) / "lemmas.csv");
  csv << "trial,dim,atoms,cos_angle,norm_ratio,eig_min,eig_max,violation\n";

  constexpr double kCosBound = 0.9428 - 1e-9;
  std::int64_t violations = 0;
  Rng rng(opt.seed);
  for (int t = 0; t < opt.trials; ++t) {
    const FiniteDistribution X = random_finite_distribution(
        rng, opt.dim_min, opt.dim_max, opt.atoms_min, opt.atoms_max);
    const LemmaStats s = lemma_checks(X);
    const bool bad = s.cos_angle < kCosBound || s.norm_ratio < 1.0 - 1e-9 ||
                     s.norm_ratio > 2.0 + 1e-9 || s.eig_min < 1.0 - 1e-9 ||
                     s.eig_max > 2.0 + 1e-9;
    if (bad) ++violations;
    csv << t << ',' << X.dim() << ',' << X.atoms.size() << ','
        << format_double(s.cos_angle) << ',' << format_double(s.norm_ratio)
        << ',' << format_double(s.eig_min) << ',' << format_double(s.eig_max)
        << ',' << (bad ? 1 : 0) << '\n';
  }
  man.set("violations", violations);
  man.write(kExitOk);
  return violations == 0 ? kExitOk : kExitNumeric;
}

int cmd_seq_error(const SeqErrorOptions& opt) {
  fs::create_directories(opt.out_dir);
  Manifest man("seq-error", opt.out_dir);
  man.set("ranks", static_cast<std::int64_t>(opt.experiment.ranks));
  man.set("steps", static_cast<std::int64_t>(opt.experiment.steps));
  man.set("microbatch", static_cast<std::int64_t>(opt.experiment.microbatch));
  man.set("alpha", opt.experiment.alpha);
  man.set("seed", static_cast<std::int64_t>(opt.experiment.seed));
  man.set("dataset", opt.experiment.dataset);
  man.add_output("error.csv");

  std::ofstream csv(fs::path(opt.out_dir) / "error.csv");
  csv << "step,rel_err_adasum,rel_err_sum,grad_norm_mean,orthogonality,"
         "cum_rel_err_adasum,cum_rel_err_sum,skipped\n";
  try {
    const std::vector<SeqErrorRow> rows = relative_error_experiment(opt.experiment);
    for (const SeqErrorRow& r : rows) {
      csv << r.step << ',' << format_double(r.rel_err_adasum) << ','
          << format_double(r.rel_err_sum) << ','
          << format_double(r.grad_norm_mean) << ','
          << format_double(r.orthogonality) << ','
          << format_double(r.cum_rel_err_adasum) << ','
          << format_double(r.cum_rel_err_sum) << ',' << (r.skipped ? 1 : 0)
          << '\n';
    }
  } catch (...) {
    const int code = exit_code_for_current_exception();
    man.write(code);
    return code;
  }
  man.write(kExitOk);
  return kExitOk;
}

int cmd_orthogonality(const OrthogonalityOptions& opt) {
  fs::create_directories(opt.out_dir);
  Manifest man("orthogonality", opt.out_dir);
  fill_train_manifest(man, opt.harness);
  man.add_output("orth.csv");

  std::ofstream csv(fs::path(opt.out_dir) / "orth.csv");
  csv << "step,scope,orthogonality\n";
  std::mutex mu;

  HarnessConfig cfg = opt.harness;
  cfg.measure_orthogonality = true;

  std::vector<MetricsRow> rows;
  try {
    run_ranks_inproc(cfg.train.ranks, 0, [&](RankContext& ctx) {
      HarnessResult res = run_training_rank(&ctx, cfg);
      if (ctx.rank() != 0) return;
      std::lock_guard<std::mutex> lock(mu);
      rows = std::move(res.rows);
    });
  } catch (...) {
    const int code = exit_code_for_current_exception();
    man.write(code);
    return code;
  }

  for (const MetricsRow& row : rows) {
    for (std::size_t l = 0; l < row.layer_orthogonality.size(); ++l) {
      csv << row.step << ",layer" << l << ','
          << format_double(row.layer_orthogonality[l]) << '\n';
    }
    csv << row.step << ",mean," << format_double(row.orthogonality_mean) << '\n';
  }
  man.write(kExitOk);
  return kExitOk;
}

}  // namespace cli
}  // namespace adasum
