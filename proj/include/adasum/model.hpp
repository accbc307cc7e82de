#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adasum/layout.hpp"
#include "adasum/rng.hpp"
#include "adasum/tensor.hpp"

namespace adasum {

struct Batch {
  std::vector<double> inputs;  // row-major rows x dim
  std::vector<int> labels;     // rows entries in [0, classes)
  std::size_t rows = 0;
  std::size_t dim = 0;
};

enum class ModelKind { LogisticRegression, Mlp };

// Tiny differentiable models with analytic gradients. Parameters live in
// one flat tensor; the layout keeps weights and biases of each layer in
// separate segments so per-layer reductions see the natural partition.
class Model {
 public:
  // Binary classifier: w (dim) + bias (1). Optional L2 penalty.
  static Model logistic(std::size_t dim, double l2 = 0.0);

  // One hidden tanh layer, softmax output:
  // W1 (hidden x dim), b1, W2 (classes x hidden), b2.
  static Model mlp(std::size_t dim, std::size_t hidden, std::size_t classes);

  ModelKind kind() const { return kind_; }
  std::size_t input_dim() const { return dim_; }
  std::size_t hidden_dim() const { return hidden_; }
  std::size_t classes() const { return classes_; }
  double l2() const { return l2_; }

  const LayerLayout& layout() const { return layout_; }
  std::size_t param_count() const { return params_.size(); }

  Tensor& params() { return params_; }
  const Tensor& params() const { return params_; }

  void init_random(Rng& rng);

  // Class index predicted for one input row.
  int predict(const double* x) const;

 private:
  ModelKind kind_ = ModelKind::LogisticRegression;
  std::size_t dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t classes_ = 2;
  double l2_ = 0.0;
  Tensor params_;
  LayerLayout layout_;
};

// Mean cross-entropy loss and its exact gradient via analytic backprop.
// Throws numeric_error if the loss comes out non-finite.
std::pair<double, Tensor> loss_and_grad(const Model& m, const Batch& batch);

struct Dataset {
  std::vector<double> inputs;  // row-major rows x dim
  std::vector<int> labels;
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::size_t classes = 2;
};

struct DatasetPair {
  Dataset train;
  Dataset eval;
};

// Deterministic per (kind, seed). Kinds: "gauss_blobs", "two_spirals", or
// "digits_csv:<path>" (label first, comma separated, no header).
DatasetPair make_dataset(const std::string& kind, std::uint64_t seed);

Dataset load_digits_csv(const std::string& path);

// Epoch shuffle with a rank-independent seed, then contiguous equal shards
// (floor(n/ranks) rows each); every index appears in at most one shard.
std::vector<std::size_t> shard_indices(std::size_t n, int rank, int ranks,
                                       std::uint64_t seed, std::uint64_t epoch);

Batch gather_batch(const Dataset& d, const std::vector<std::size_t>& idx,
                   std::size_t begin, std::size_t count);

double accuracy(const Model& m, const Dataset& d);
double dataset_loss(const Model& m, const Dataset& d);

}  // namespace adasum
