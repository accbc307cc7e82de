#include "adasum/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "adasum/errors.hpp"

namespace adasum {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + exp(z)) without overflow
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

}  // namespace

Model Model::logistic(std::size_t dim, double l2) {
  Model m;
  m.kind_ = ModelKind::LogisticRegression;
  m.dim_ = dim;
  m.classes_ = 2;
  m.l2_ = l2;
  m.params_ = Tensor::zeros(dim + 1);
  m.layout_ = LayerLayout::from_lengths({dim, 1});
  return m;
}

Model Model::mlp(std::size_t dim, std::size_t hidden, std::size_t classes) {
  Model m;
  m.kind_ = ModelKind::Mlp;
  m.dim_ = dim;
  m.hidden_ = hidden;
  m.classes_ = classes;
  m.params_ = Tensor::zeros(hidden * dim + hidden + classes * hidden + classes);
  m.layout_ = LayerLayout::from_lengths(
      {hidden * dim, hidden, classes * hidden, classes});
  return m;
}

void Model::init_random(Rng& rng) {
  if (kind_ == ModelKind::LogisticRegression) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      params_.set(i, rng.normal(0.0, 0.1));
    }
    return;
  }
  // scaled normal init per layer, biases zero
  const double s1 = 1.0 / std::sqrt(static_cast<double>(dim_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  std::size_t i = 0;
  for (std::size_t k = 0; k < hidden_ * dim_; ++k) params_.set(i++, rng.normal(0.0, s1));
  for (std::size_t k = 0; k < hidden_; ++k) params_.set(i++, 0.0);
  for (std::size_t k = 0; k < classes_ * hidden_; ++k) params_.set(i++, rng.normal(0.0, s2));
  for (std::size_t k = 0; k < classes_; ++k) params_.set(i++, 0.0);
}

int Model::predict(const double* x) const {
  if (kind_ == ModelKind::LogisticRegression) {
    double z = params_[dim_];
    for (std::size_t j = 0; j < dim_; ++j) z += params_[j] * x[j];
    return z >= 0.0 ? 1 : 0;
  }
  const std::size_t w1 = 0;
  const std::size_t b1 = hidden_ * dim_;
  const std::size_t w2 = b1 + hidden_;
  const std::size_t b2 = w2 + classes_ * hidden_;
  std::vector<double> act(hidden_);
  for (std::size_t h = 0; h < hidden_; ++h) {
    double u = params_[b1 + h];
    for (std::size_t j = 0; j < dim_; ++j) u += params_[w1 + h * dim_ + j] * x[j];
    act[h] = std::tanh(u);
  }
  int best = 0;
  double best_z = -1e300;
  for (std::size_t c = 0; c < classes_; ++c) {
    double z = params_[b2 + c];
    for (std::size_t h = 0; h < hidden_; ++h) z += params_[w2 + c * hidden_ + h] * act[h];
    if (z > best_z) {
      best_z = z;
      best = static_cast<int>(c);
    }
  }
  return best;
}

namespace {

std::pair<double, Tensor> logistic_loss_grad(const Model& m, const Batch& batch) {
  const std::size_t d = m.input_dim();
  if (batch.dim != d) throw shape_error("loss_and_grad: batch dimension mismatch");
  const Tensor& w = m.params();
  std::vector<double> grad(d + 1, 0.0);
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.rows);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const double* x = batch.inputs.data() + r * d;
    const int y = batch.labels[r];
    double z = w[d];
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
    loss += softplus(z) - (y == 1 ? z : 0.0);
    const double dz = (sigmoid(z) - (y == 1 ? 1.0 : 0.0)) * inv_b;
    for (std::size_t j = 0; j < d; ++j) grad[j] += dz * x[j];
    grad[d] += dz;
  }
  loss *= inv_b;
  if (m.l2() > 0.0) {
    for (std::size_t j = 0; j <= d; ++j) {
      loss += 0.5 * m.l2() * w[j] * w[j];
      grad[j] += m.l2() * w[j];
    }
  }
  return {loss, Tensor::from_f64(std::move(grad))};
}

std::pair<double, Tensor> mlp_loss_grad(const Model& m, const Batch& batch) {
  const std::size_t d = m.input_dim();
  const std::size_t h = m.hidden_dim();
  const std::size_t c = m.classes();
  if (batch.dim != d) throw shape_error("loss_and_grad: batch dimension mismatch");
  const Tensor& w = m.params();
  const std::size_t w1 = 0;
  const std::size_t b1 = h * d;
  const std::size_t w2 = b1 + h;
  const std::size_t b2 = w2 + c * h;

  std::vector<double> grad(m.param_count(), 0.0);
  std::vector<double> act(h), du(h), logits(c), p(c);
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.rows);

  for (std::size_t r = 0; r < batch.rows; ++r) {
    const double* x = batch.inputs.data() + r * d;
    const int y = batch.labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw argument_error("loss_and_grad: label out of class range");
    }
    for (std::size_t i = 0; i < h; ++i) {
      double u = w[b1 + i];
      for (std::size_t j = 0; j < d; ++j) u += w[w1 + i * d + j] * x[j];
      act[i] = std::tanh(u);
    }
    double zmax = -1e300;
    for (std::size_t k = 0; k < c; ++k) {
      double z = w[b2 + k];
      for (std::size_t i = 0; i < h; ++i) z += w[w2 + k * h + i] * act[i];
      logits[k] = z;
      zmax = std::max(zmax, z);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) denom += std::exp(logits[k] - zmax);
    loss += (std::log(denom) + zmax - logits[static_cast<std::size_t>(y)]) * inv_b;

    for (std::size_t k = 0; k < c; ++k) {
      p[k] = std::exp(logits[k] - zmax) / denom;
    }
    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      const double dz = (p[k] - (static_cast<std::size_t>(y) == k ? 1.0 : 0.0)) * inv_b;
      grad[b2 + k] += dz;
      for (std::size_t i = 0; i < h; ++i) {
        grad[w2 + k * h + i] += dz * act[i];
        du[i] += dz * w[w2 + k * h + i];
      }
    }
    for (std::size_t i = 0; i < h; ++i) {
      const double g = du[i] * (1.0 - act[i] * act[i]);
      grad[b1 + i] += g;
      for (std::size_t j = 0; j < d; ++j) grad[w1 + i * d + j] += g * x[j];
    }
  }
  return {loss, Tensor::from_f64(std::move(grad))};
}

}  // namespace

std::pair<double, Tensor> loss_and_grad(const Model& m, const Batch& batch) {
  if (batch.rows == 0) throw argument_error("loss_and_grad: empty batch");
  auto out = m.kind() == ModelKind::LogisticRegression
                 ? logistic_loss_grad(m, batch)
                 : mlp_loss_grad(m, batch);
  if (!std::isfinite(out.first)) {
    throw numeric_error("loss_and_grad: non-finite loss " +
                        std::to_string(out.first));
  }
  return out;
}

namespace {

DatasetPair gauss_blobs(std::uint64_t seed) {
  constexpr std::size_t kTrain = 4096;
  constexpr std::size_t kEval = 1024;
  constexpr std::size_t kDim = 10;
  constexpr std::size_t kClasses = 2;
  Rng rng(seed * 0x9E3779B97F4A7C15ull + 0xB5297A4D3F84D5B5ull);
  std::vector<std::vector<double>> centers(kClasses, std::vector<double>(kDim));
  for (auto& ctr : centers) {
    for (double& v : ctr) v = rng.normal(0.0, 1.5);
  }
  auto fill = [&](Dataset& d, std::size_t n) {
    d.rows = n;
    d.dim = kDim;
    d.classes = kClasses;
    d.inputs.resize(n * kDim);
    d.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t y = r % kClasses;  // balanced
      d.labels[r] = static_cast<int>(y);
      for (std::size_t j = 0; j < kDim; ++j) {
        d.inputs[r * kDim + j] = centers[y][j] + rng.normal(0.0, 1.0);
      }
    }
  };
  DatasetPair pair;
  fill(pair.train, kTrain);
  fill(pair.eval, kEval);
  return pair;
}

DatasetPair two_spirals(std::uint64_t seed) {
  constexpr std::size_t kTrain = 2048;
  constexpr std::size_t kEval = 512;
  constexpr double kNoise = 0.05;
  Rng rng(seed * 0x9E3779B97F4A7C15ull + 0x6A09E667F3BCC909ull);
  auto fill = [&](Dataset& d, std::size_t n) {
    d.rows = n;
    d.dim = 2;
    d.classes = 2;
    d.inputs.resize(n * 2);
    d.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      const int y = static_cast<int>(r % 2);
      const double t = (0.25 + 0.75 * rng.uniform()) * 3.0 * M_PI;
      const double sign = y == 0 ? 1.0 : -1.0;
      const double scale = t / (3.0 * M_PI);
      d.labels[r] = y;
      d.inputs[r * 2] = sign * scale * std::cos(t) + kNoise * rng.normal();
      d.inputs[r * 2 + 1] = sign * scale * std::sin(t) + kNoise * rng.normal();
    }
  };
  DatasetPair pair;
  fill(pair.train, kTrain);
  fill(pair.eval, kEval);
  return pair;
}

}  // namespace

Dataset load_digits_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open dataset file: " + path);
  Dataset d;
  std::string line;
  int max_label = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) throw io_error("bad csv row in " + path);
    const int label = std::stoi(cell);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (d.rows == 0) {
      d.dim = row.size();
    } else if (row.size() != d.dim) {
      throw io_error("ragged csv row in " + path);
    }
    d.labels.push_back(label);
    d.inputs.insert(d.inputs.end(), row.begin(), row.end());
    d.rows += 1;
    max_label = std::max(max_label, label);
  }
  if (d.rows == 0) throw io_error("empty dataset file: " + path);
  d.classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

DatasetPair make_dataset(const std::string& kind, std::uint64_t seed) {
  if (kind == "gauss_blobs") return gauss_blobs(seed);
  if (kind == "two_spirals") return two_spirals(seed);
  if (kind.rfind("digits_csv:", 0) == 0) {
    Dataset full = load_digits_csv(kind.substr(11));
    // deterministic shuffle, then 80/20 split
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 0x3C6EF372FE94F82Bull);
    std::vector<std::size_t> order(full.rows);
    for (std::size_t i = 0; i < full.rows; ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_train = full.rows - full.rows / 5;
    DatasetPair pair;
    auto take = [&](Dataset& d, std::size_t begin, std::size_t count) {
      d.dim = full.dim;
      d.classes = full.classes;
      d.rows = count;
      d.inputs.resize(count * full.dim);
      d.labels.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[begin + i];
        std::copy_n(full.inputs.begin() + static_cast<std::ptrdiff_t>(src * full.dim),
                    full.dim, d.inputs.begin() + static_cast<std::ptrdiff_t>(i * full.dim));
        d.labels[i] = full.labels[src];
      }
    };
    take(pair.train, 0, n_train);
    take(pair.eval, n_train, full.rows - n_train);
    return pair;
  }
  throw argument_error("unknown dataset kind: " + kind);
}

std::vector<std::size_t> shard_indices(std::size_t n, int rank, int ranks,
                                       std::uint64_t seed, std::uint64_t epoch) {
  if (ranks < 1 || rank < 0 || rank >= ranks) {
    throw argument_error("shard_indices: bad rank");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed ^ (0xD1B54A32D192ED03ull + epoch * 0x9E3779B97F4A7C15ull));
  rng.shuffle(order);
  const std::size_t per = n / static_cast<std::size_t>(ranks);
  const std::size_t begin = per * static_cast<std::size_t>(rank);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin),
          order.begin() + static_cast<std::ptrdiff_t>(begin + per)};
}

Batch gather_batch(const Dataset& d, const std::vector<std::size_t>& idx,
                   std::size_t begin, std::size_t count) {
  if (begin + count > idx.size()) throw argument_error("gather_batch: range out of bounds");
  Batch b;
  b.rows = count;
  b.dim = d.dim;
  b.inputs.resize(count * d.dim);
  b.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = idx[begin + i];
    std::copy_n(d.inputs.begin() + static_cast<std::ptrdiff_t>(src * d.dim), d.dim,
                b.inputs.begin() + static_cast<std::ptrdiff_t>(i * d.dim));
    b.labels[i] = d.labels[src];
  }
  return b;
}

double accuracy(const Model& m, const Dataset& d) {
  std::size_t hit = 0;
  for (std::size_t r = 0; r < d.rows; ++r) {
    if (m.predict(d.inputs.data() + r * d.dim) == d.labels[r]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(d.rows);
}

double dataset_loss(const Model& m, const Dataset& d) {
  Batch b;
  b.inputs = d.inputs;
  b.labels = d.labels;
  b.rows = d.rows;
  b.dim = d.dim;
  return loss_and_grad(m, b).first;
}

}  // namespace adasum
