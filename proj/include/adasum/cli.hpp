#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "adasum/hessian.hpp"
#include "adasum/training.hpp"

namespace adasum {
namespace cli {

// Exit codes shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitTransport = 4;

int exit_code_for_current_exception();

struct TrainOptions {
  HarnessConfig harness;
  std::string transport = "inproc";  // "inproc" or "tcp"
  int tcp_rank = -1;                 // >= 0: join an existing mesh as this rank
  int base_port = 29500;
  std::string out_dir = "run-train";
};

struct BenchOptions {
  int ranks = 8;
  int k_min = 10;  // payload sizes 2^k bytes
  int k_max = 26;
  int trials = 20;
  int tensors = 64;  // fused tensors per size point
  std::string transport = "inproc";
  int base_port = 29600;
  std::uint64_t seed = 1;
  std::string out_dir = "run-bench";
};

struct LemmaOptions {
  int trials = 1000;
  std::size_t dim_min = 2;
  std::size_t dim_max = 16;
  std::size_t atoms_min = 2;
  std::size_t atoms_max = 64;
  std::uint64_t seed = 1;
  std::string out_dir = "run-lemmas";
};

struct SeqErrorOptions {
  SeqErrorConfig experiment;
  std::string out_dir = "run-seq-error";
};

struct OrthogonalityOptions {
  HarnessConfig harness;
  std::string out_dir = "run-orthogonality";
};

int cmd_train(const TrainOptions& opt);
int cmd_bench(const BenchOptions& opt);
int cmd_lemma_check(const LemmaOptions& opt);
int cmd_seq_error(const SeqErrorOptions& opt);
int cmd_orthogonality(const OrthogonalityOptions& opt);

// Wall-clock seconds per trial for one fused payload on an existing rank
// context: first the adaptive reduction, then the elementwise-sum
// baseline, timed around the collective call only.
struct BenchPoint {
  std::vector<double> adasum_seconds;
  std::vector<double> sum_seconds;
  Tensor adasum_result;  // for cross-transport value checks
  Tensor sum_result;
};
BenchPoint bench_point(RankContext& ctx, std::size_t total_bytes, int tensors,
                       int trials, std::uint64_t seed);

double median(std::vector<double> v);
double percentile95(std::vector<double> v);

// Formats a double so equal values always produce equal bytes and parsing
// them back is lossless.
std::string format_double(double v);

}  // namespace cli
}  // namespace adasum
