#include "adasum/hessian.hpp"

#include <cmath>

#include "adasum/combiner.hpp"
#include "adasum/errors.hpp"

namespace adasum {

namespace {

constexpr std::size_t kMaxHessianParams = 200;

std::vector<double> logistic_hessian(const Model& m, const Batch& batch) {
  const std::size_t d = m.input_dim();
  const std::size_t n = d + 1;
  const Tensor& w = m.params();
  std::vector<double> h(n * n, 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.rows);
  std::vector<double> xt(n);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const double* x = batch.inputs.data() + r * d;
    double z = w[d];
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double c = p * (1.0 - p) * inv_b;
    for (std::size_t j = 0; j < d; ++j) xt[j] = x[j];
    xt[d] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        h[i * n + j] += c * xt[i] * xt[j];
      }
    }
  }
  if (m.l2() > 0.0) {
    for (std::size_t i = 0; i < n; ++i) h[i * n + i] += m.l2();
  }
  return h;
}

void symmetrize(std::vector<double>& h, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (h[i * n + j] + h[j * n + i]);
      h[i * n + j] = v;
      h[j * n + i] = v;
    }
  }
}

std::vector<double> matvec(const std::vector<double>& h, const Tensor& v) {
  const std::size_t n = v.size();
  if (h.size() != n * n) throw shape_error("matvec: matrix/vector mismatch");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * v[j];
    out[i] = acc;
  }
  return out;
}

}  // namespace

std::vector<double> finite_diff_hessian(const Model& m, const Batch& batch,
                                        double step) {
  const std::size_t n = m.param_count();
  if (n > kMaxHessianParams) {
    throw config_error("finite_diff_hessian: too many parameters (" +
                       std::to_string(n) + ")");
  }
  Model probe = m;
  std::vector<double> h(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double w0 = probe.params()[j];
    probe.params().set(j, w0 + step);
    const Tensor gp = loss_and_grad(probe, batch).second;
    probe.params().set(j, w0 - step);
    const Tensor gm = loss_and_grad(probe, batch).second;
    probe.params().set(j, w0);
    for (std::size_t i = 0; i < n; ++i) {
      h[i * n + j] = (gp[i] - gm[i]) / (2.0 * step);
    }
  }
  symmetrize(h, n);
  return h;
}

std::vector<double> exact_hessian(const Model& m, const Batch& batch) {
  if (m.param_count() > kMaxHessianParams) {
    throw config_error("exact_hessian: too many parameters (" +
                       std::to_string(m.param_count()) + ")");
  }
  if (m.kind() == ModelKind::LogisticRegression) {
    std::vector<double> h = logistic_hessian(m, batch);
    symmetrize(h, m.param_count());
    return h;
  }
  return finite_diff_hessian(m, batch);
}

Tensor sequential_emulation_step(const Tensor& w0, const Tensor& g1,
                                 const Tensor& g2, const std::vector<double>& h2,
                                 double alpha) {
  if (w0.size() != g1.size() || w0.size() != g2.size()) {
    throw shape_error("sequential_emulation_step: shape mismatch");
  }
  const std::vector<double> hg = matvec(h2, g1);
  Tensor out = Tensor::zeros(w0.size());
  for (std::size_t i = 0; i < w0.size(); ++i) {
    out.set(i, w0[i] - alpha * (g1[i] + g2[i] - alpha * hg[i]));
  }
  return out;
}

Tensor sequential_emulation_fold(const Tensor& w0, const std::vector<Tensor>& gs,
                                 const std::vector<std::vector<double>>& hs,
                                 double alpha) {
  if (gs.empty()) throw argument_error("sequential_emulation_fold: no gradients");
  if (gs.size() != hs.size()) {
    throw shape_error("sequential_emulation_fold: gradient/Hessian count mismatch");
  }
  const std::size_t n = w0.size();
  std::vector<double> total(n, 0.0);  // accumulated corrected gradient sum
  for (std::size_t k = 0; k < gs.size(); ++k) {
    if (gs[k].size() != n) throw shape_error("sequential_emulation_fold: shape mismatch");
    // gradient k evaluated at w0 - alpha*total, to first order
    std::vector<double> corrected(n);
    const std::vector<double> hg = matvec(hs[k], Tensor::from_f64(total));
    for (std::size_t i = 0; i < n; ++i) {
      corrected[i] = gs[k][i] - alpha * hg[i];
    }
    for (std::size_t i = 0; i < n; ++i) total[i] += corrected[i];
  }
  Tensor out = Tensor::zeros(n);
  for (std::size_t i = 0; i < n; ++i) out.set(i, w0[i] - alpha * total[i]);
  return out;
}

Tensor ggt_approx_step(const Tensor& w0, const Tensor& g1, const Tensor& g2,
                       double alpha) {
  if (w0.size() != g1.size() || w0.size() != g2.size()) {
    throw shape_error("ggt_approx_step: shape mismatch");
  }
  const DotTriple t = dot_triple(g2, g1);  // t.aa = ||g2||^2, t.ab = g2.g1
  Tensor out = Tensor::zeros(w0.size());
  if (t.aa == 0.0) {
    for (std::size_t i = 0; i < w0.size(); ++i) out.set(i, w0[i] - alpha * g1[i]);
    return out;
  }
  const double proj = t.ab / t.aa;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    out.set(i, w0[i] - alpha * (g1[i] + g2[i] - proj * g2[i]));
  }
  return out;
}

std::vector<SeqErrorRow> relative_error_experiment(const SeqErrorConfig& cfg) {
  if (cfg.ranks < 2 || cfg.ranks > 16) {
    throw config_error("relative_error_experiment: ranks must be in [2, 16]");
  }
  const DatasetPair data = make_dataset(cfg.dataset, cfg.seed);
  if (data.train.classes != 2) {
    throw config_error("relative_error_experiment: needs a binary dataset");
  }
  Model model = Model::logistic(data.train.dim);
  Rng init_rng(cfg.seed * 0x2545F4914F6CDD1Dull + 0x9E3779B97F4A7C15ull);
  model.init_random(init_rng);

  const std::size_t rows_per_step =
      static_cast<std::size_t>(cfg.ranks) * cfg.microbatch;
  std::vector<SeqErrorRow> rows;
  rows.reserve(static_cast<std::size_t>(cfg.steps));
  double cum_adasum = 0.0;
  double cum_sum = 0.0;
  std::uint64_t epoch = 0;
  std::size_t cursor = 0;
  std::vector<std::size_t> order = shard_indices(data.train.rows, 0, 1, cfg.seed, epoch);

  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor + rows_per_step > order.size()) {
      epoch += 1;
      order = shard_indices(data.train.rows, 0, 1, cfg.seed, epoch);
      cursor = 0;
    }
    std::vector<Tensor> gs;
    std::vector<std::vector<double>> hs;
    gs.reserve(static_cast<std::size_t>(cfg.ranks));
    hs.reserve(static_cast<std::size_t>(cfg.ranks));
    double grad_norm_sum = 0.0;
    for (int r = 0; r < cfg.ranks; ++r) {
      const Batch b = gather_batch(data.train, order, cursor, cfg.microbatch);
      cursor += cfg.microbatch;
      Tensor g = loss_and_grad(model, b).second;
      hs.push_back(exact_hessian(model, b));
      grad_norm_sum += std::sqrt(dot_triple(g, g).aa);
      gs.push_back(std::move(g));
    }

    const Tensor& w0 = model.params();
    const Tensor w_oracle = sequential_emulation_fold(w0, gs, hs, cfg.alpha);
    const Tensor combined = adasum_tree(gs, model.layout());

    SeqErrorRow row;
    row.step = step;
    row.grad_norm_mean = grad_norm_sum / static_cast<double>(cfg.ranks);
    row.orthogonality = orthogonality(gs);

    double oracle_norm2 = 0.0;
    double err_adasum2 = 0.0;
    double err_sum2 = 0.0;
    for (std::size_t i = 0; i < w0.size(); ++i) {
      const double d_oracle = w_oracle[i] - w0[i];
      double g_total = 0.0;
      for (const Tensor& g : gs) g_total += g[i];
      const double d_adasum = -cfg.alpha * combined[i];
      const double d_sum = -cfg.alpha * g_total;
      oracle_norm2 += d_oracle * d_oracle;
      err_adasum2 += (d_adasum - d_oracle) * (d_adasum - d_oracle);
      err_sum2 += (d_sum - d_oracle) * (d_sum - d_oracle);
    }
    if (oracle_norm2 == 0.0) {
      row.skipped = true;
    } else {
      row.rel_err_adasum = std::sqrt(err_adasum2 / oracle_norm2);
      row.rel_err_sum = std::sqrt(err_sum2 / oracle_norm2);
      cum_adasum += row.rel_err_adasum;
      cum_sum += row.rel_err_sum;
    }
    row.cum_rel_err_adasum = cum_adasum;
    row.cum_rel_err_sum = cum_sum;
    rows.push_back(row);

    // advance the trajectory with the adaptive-sum update
    Tensor& w = model.params();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w.set(i, w[i] - cfg.alpha * combined[i]);
    }
  }
  return rows;
}

}  // namespace adasum
