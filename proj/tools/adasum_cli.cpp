// Command-line driver: train / bench / lemma-check / seq-error /
// orthogonality subcommands, CSV outputs, key=value config files with
// flag override. Exit codes: 0 ok, 2 usage, 3 numeric failure,
// 4 protocol or transport failure.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "adasum/cli.hpp"
#include "adasum/collective.hpp"

namespace {

using adasum::HarnessConfig;
using adasum::LrSchedule;
using adasum::OptKind;
using adasum::Precision;
using adasum::Reduction;

struct HarnessFlags {
  int ranks = 1;
  std::size_t microbatch = 32;
  int local_steps = 1;
  std::string reduction = "adasum";
  std::string precision = "f64";
  std::uint64_t seed = 1;
  int epochs = 2;
  int node_size = 0;  // 0: take ADASUM_NODE_SIZE or 1
  std::string model = "mlp";
  std::string dataset = "two_spirals";
  std::size_t mlp_hidden = 32;
  std::string optimizer = "momentum";
  std::string schedule = "linear";
  double max_lr = 0.05;
  double warmup_frac = 0.17;
  double loss_scale_init = 32768.0;
  int loss_scale_growth_interval = 2000;
};

void add_harness_flags(CLI::App* cmd, HarnessFlags& f) {
  cmd->add_option("--ranks", f.ranks, "simulated world size (power of two)");
  cmd->add_option("--microbatch", f.microbatch, "examples per local step");
  cmd->add_option("--local-steps", f.local_steps,
                  "optimizer steps between communications");
  cmd->add_option("--reduction", f.reduction, "sum|adasum");
  cmd->add_option("--precision", f.precision, "f64|f16");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--node-size", f.node_size,
                  "hierarchical grouping factor (default ADASUM_NODE_SIZE or 1)");
  cmd->add_option("--model", f.model, "logistic|mlp");
  cmd->add_option("--dataset", f.dataset,
                  "gauss_blobs|two_spirals|digits_csv:<path>");
  cmd->add_option("--mlp-hidden", f.mlp_hidden, "hidden units for the mlp model");
  cmd->add_option("--optimizer", f.optimizer, "sgd|momentum|adam|lamb");
  cmd->add_option("--schedule", f.schedule, "constant|linear");
  cmd->add_option("--max-lr", f.max_lr, "peak learning rate");
  cmd->add_option("--warmup-frac", f.warmup_frac, "warmup fraction of total steps");
  cmd->add_option("--loss-scale-init", f.loss_scale_init,
                  "initial dynamic loss scale (f16)");
  cmd->add_option("--loss-scale-growth-interval", f.loss_scale_growth_interval,
                  "clean steps before the scale grows");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Plain key=value config file: keys are long flag names without dashes,
// '#' starts a comment. Values become option defaults, so explicit flags
// always win.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw adasum::io_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw adasum::argument_error("config line is not key=value: " + line);
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void apply_config_defaults(CLI::App* cmd,
                           const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr) {
      throw adasum::argument_error("config key not recognized by '" +
                                   cmd->get_name() + "': " + key);
    }
    opt->default_val(value);
  }
}

// Pulls "--config FILE" (or --config=FILE) out of the argument list before
// CLI11 sees it.
std::string extract_config_path(std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size();) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      ++i;
    }
  }
  return path;
}

HarnessConfig to_harness_config(const HarnessFlags& f) {
  HarnessConfig cfg;
  cfg.train.ranks = f.ranks;
  cfg.train.microbatch = f.microbatch;
  cfg.train.local_steps = f.local_steps;
  if (f.reduction == "sum") {
    cfg.train.reduction = Reduction::Sum;
  } else if (f.reduction == "adasum") {
    cfg.train.reduction = Reduction::Adasum;
  } else {
    throw adasum::argument_error("unknown --reduction " + f.reduction);
  }
  if (f.precision == "f64") {
    cfg.train.precision = Precision::F64;
  } else if (f.precision == "f16") {
    cfg.train.precision = Precision::F16;
  } else {
    throw adasum::argument_error("unknown --precision " + f.precision);
  }
  cfg.train.seed = f.seed;
  cfg.train.epochs = f.epochs;
  cfg.train.node_size = f.node_size > 0 ? f.node_size : adasum::node_size_from_env();
  cfg.model = f.model;
  cfg.dataset = f.dataset;
  cfg.mlp_hidden = f.mlp_hidden;
  if (f.optimizer == "sgd") {
    cfg.optimizer = OptKind::Sgd;
  } else if (f.optimizer == "momentum") {
    cfg.optimizer = OptKind::Momentum;
  } else if (f.optimizer == "adam") {
    cfg.optimizer = OptKind::Adam;
  } else if (f.optimizer == "lamb") {
    cfg.optimizer = OptKind::Lamb;
  } else {
    throw adasum::argument_error("unknown --optimizer " + f.optimizer);
  }
  cfg.schedule_kind = f.schedule == "constant" ? LrSchedule::Kind::Constant
                                               : LrSchedule::Kind::LinearWarmupDecay;
  cfg.max_lr = f.max_lr;
  cfg.warmup_frac = f.warmup_frac;
  cfg.loss_scale_init = f.loss_scale_init;
  cfg.loss_scale_growth_interval = f.loss_scale_growth_interval;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-sum gradient reduction: experiments and benchmarks"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "data-parallel training run");
  HarnessFlags train_flags;
  add_harness_flags(train, train_flags);
  std::string train_transport = "inproc";
  int tcp_rank = -1;
  int world_size = 0;
  int base_port = 29500;
  std::string train_out = "run-train";
  train->add_option("--transport", train_transport, "inproc|tcp");
  train->add_option("--rank", tcp_rank, "join a tcp mesh as this rank");
  train->add_option("--world-size", world_size, "tcp mesh size (defaults to --ranks)");
  train->add_option("--base-port", base_port, "tcp listen port base");
  train->add_option("--out-dir", train_out, "output directory");

  // bench
  auto* bench = app.add_subcommand("bench", "collective latency sweep");
  adasum::cli::BenchOptions bench_opt;
  bench->add_option("--ranks", bench_opt.ranks, "world size");
  bench->add_option("--k-min", bench_opt.k_min, "smallest payload: 2^k bytes");
  bench->add_option("--k-max", bench_opt.k_max, "largest payload: 2^k bytes");
  bench->add_option("--trials", bench_opt.trials, "trials per point");
  bench->add_option("--transport", bench_opt.transport, "inproc|tcp");
  bench->add_option("--base-port", bench_opt.base_port, "tcp listen port base");
  bench->add_option("--seed", bench_opt.seed, "payload seed");
  bench->add_option("--out-dir", bench_opt.out_dir, "output directory");

  // lemma-check
  auto* lemma = app.add_subcommand("lemma-check",
                                   "combiner expectation-bound sweep");
  adasum::cli::LemmaOptions lemma_opt;
  lemma->add_option("--trials", lemma_opt.trials, "random distributions");
  lemma->add_option("--dim-min", lemma_opt.dim_min, "smallest dimension");
  lemma->add_option("--dim-max", lemma_opt.dim_max, "largest dimension");
  lemma->add_option("--atoms-min", lemma_opt.atoms_min, "fewest atoms");
  lemma->add_option("--atoms-max", lemma_opt.atoms_max, "most atoms");
  lemma->add_option("--seed", lemma_opt.seed, "sweep seed");
  lemma->add_option("--out-dir", lemma_opt.out_dir, "output directory");

  // seq-error
  auto* seq = app.add_subcommand(
      "seq-error", "per-step error of reductions vs the exact-Hessian oracle");
  adasum::cli::SeqErrorOptions seq_opt;
  seq->add_option("--ranks", seq_opt.experiment.ranks, "simulated ranks (<= 16)");
  seq->add_option("--steps", seq_opt.experiment.steps, "communication steps");
  seq->add_option("--microbatch", seq_opt.experiment.microbatch,
                  "examples per rank per step");
  seq->add_option("--alpha", seq_opt.experiment.alpha, "step size");
  seq->add_option("--seed", seq_opt.experiment.seed, "run seed");
  seq->add_option("--dataset", seq_opt.experiment.dataset, "binary dataset kind");
  seq->add_option("--out-dir", seq_opt.out_dir, "output directory");

  // orthogonality
  auto* orth = app.add_subcommand(
      "orthogonality", "per-layer orthogonality trace over a training run");
  HarnessFlags orth_flags;
  orth_flags.ranks = 16;
  add_harness_flags(orth, orth_flags);
  std::string orth_out = "run-orthogonality";
  orth->add_option("--out-dir", orth_out, "output directory");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    const std::string config_path = extract_config_path(args);
    if (!config_path.empty()) {
      if (args.empty()) {
        throw adasum::argument_error("--config requires a subcommand");
      }
      CLI::App* cmd = app.get_subcommand_no_throw(args.front());
      if (cmd == nullptr) {
        throw adasum::argument_error("unknown subcommand: " + args.front());
      }
      apply_config_defaults(cmd, read_config_file(config_path));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return adasum::cli::kExitUsage;
  }

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : adasum::cli::kExitUsage;
  }

  try {
    if (*train) {
      adasum::cli::TrainOptions opt;
      opt.harness = to_harness_config(train_flags);
      if (world_size > 0) opt.harness.train.ranks = world_size;
      opt.transport = train_transport;
      opt.tcp_rank = tcp_rank;
      opt.base_port = base_port;
      opt.out_dir = train_out;
      return adasum::cli::cmd_train(opt);
    }
    if (*bench) return adasum::cli::cmd_bench(bench_opt);
    if (*lemma) return adasum::cli::cmd_lemma_check(lemma_opt);
    if (*seq) return adasum::cli::cmd_seq_error(seq_opt);
    if (*orth) {
      adasum::cli::OrthogonalityOptions opt;
      opt.harness = to_harness_config(orth_flags);
      opt.out_dir = orth_out;
      return adasum::cli::cmd_orthogonality(opt);
    }
  } catch (...) {
    try {
      throw;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
    } catch (...) {
      std::cerr << "error: unknown failure\n";
    }
    return adasum::cli::exit_code_for_current_exception();
  }
  return adasum::cli::kExitUsage;
}
