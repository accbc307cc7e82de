#include "adasum/combiner.hpp"

#include <algorithm>
#include <cmath>

namespace adasum {

AdasumCoefficients adasum_coefficients(const DotTriple& t) {
  AdasumCoefficients c;
  c.c1 = (t.aa == 0.0) ? 0.0 : 1.0 - t.ab / (2.0 * t.aa);
  c.c2 = (t.bb == 0.0) ? 0.0 : 1.0 - t.ab / (2.0 * t.bb);
  if (t.aa == 0.0 && t.bb != 0.0) c.c2 = 1.0;
  if (t.bb == 0.0 && t.aa != 0.0) c.c1 = 1.0;
  return c;
}

Tensor adasum_pair(const Tensor& g1, const Tensor& g2,
                   const std::optional<LayerLayout>& layout) {
  if (g1.size() != g2.size()) throw shape_error("adasum_pair: length mismatch");
  if (!layout.has_value()) {
    const AdasumCoefficients c = adasum_coefficients(dot_triple(g1, g2));
    return axpby(c.c1, g1, c.c2, g2);
  }
  if (layout->total_len() != g1.size()) {
    throw shape_error("adasum_pair: layout does not cover the vectors");
  }
  Tensor out = Tensor::zeros(g1.size(), g1.dtype());
  for (const LayerSegment& seg : layout->segments()) {
    const AdasumCoefficients c =
        adasum_coefficients(dot_triple_range(g1, g2, seg.offset, seg.length));
    for (std::size_t i = seg.offset; i < seg.offset + seg.length; ++i) {
      out.set(i, c.c1 * g1[i] + c.c2 * g2[i]);
    }
  }
  return out;
}

Tensor adasum_linear(const std::vector<Tensor>& gs,
                     const std::optional<LayerLayout>& layout) {
  if (gs.empty()) throw argument_error("adasum_linear: empty input list");
  Tensor acc = gs.front();
  for (std::size_t i = 1; i < gs.size(); ++i) {
    acc = adasum_pair(acc, gs[i], layout);
  }
  return acc;
}

namespace {

Tensor adasum_tree_rec(const std::vector<Tensor>& gs, std::size_t lo,
                       std::size_t hi, const std::optional<LayerLayout>& layout) {
  if (hi - lo == 1) return gs[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return adasum_pair(adasum_tree_rec(gs, lo, mid, layout),
                     adasum_tree_rec(gs, mid, hi, layout), layout);
}

}  // namespace

Tensor adasum_tree(const std::vector<Tensor>& gs,
                   const std::optional<LayerLayout>& layout) {
  if (gs.empty()) throw argument_error("adasum_tree: empty input list");
  return adasum_tree_rec(gs, 0, gs.size(), layout);
}

double orthogonality(const std::vector<Tensor>& gs) {
  if (gs.empty()) throw argument_error("orthogonality: empty input list");
  double denom = 0.0;
  for (const Tensor& g : gs) denom += dot_triple(g, g).aa;
  if (denom == 0.0) {
    throw numeric_error("orthogonality: undefined for all-zero gradients");
  }
  const Tensor combined = adasum_tree(gs);
  return dot_triple(combined, combined).aa / denom;
}

std::vector<double> orthogonality_per_layer(const std::vector<Tensor>& gs,
                                            const LayerLayout& layout) {
  if (gs.empty()) throw argument_error("orthogonality: empty input list");
  const Tensor combined = adasum_tree(gs, layout);
  std::vector<double> out;
  out.reserve(layout.layer_count());
  for (const LayerSegment& seg : layout.segments()) {
    double denom = 0.0;
    for (const Tensor& g : gs) {
      denom += dot_triple_range(g, g, seg.offset, seg.length).aa;
    }
    const double num =
        dot_triple_range(combined, combined, seg.offset, seg.length).aa;
    out.push_back(denom == 0.0 ? std::nan("") : num / denom);
  }
  return out;
}

void FiniteDistribution::validate() const {
  if (atoms.empty()) throw argument_error("distribution: no atoms");
  const std::size_t d = atoms.front().size();
  for (const auto& x : atoms) {
    if (x.size() != d) throw shape_error("distribution: mixed dimensions");
    double n2 = 0.0;
    for (double v : x) n2 += v * v;
    if (n2 == 0.0) throw argument_error("distribution: zero-norm atom");
  }
}

std::vector<double> FiniteDistribution::mean() const {
  const std::size_t d = dim();
  std::vector<double> m(d, 0.0);
  for (const auto& x : atoms) {
    for (std::size_t i = 0; i < d; ++i) m[i] += x[i];
  }
  for (double& v : m) v /= static_cast<double>(atoms.size());
  return m;
}

std::vector<double> normalized_outer_mean(const FiniteDistribution& X) {
  X.validate();
  const std::size_t d = X.dim();
  std::vector<double> m(d * d, 0.0);
  for (const auto& x : X.atoms) {
    double n2 = 0.0;
    for (double v : x) n2 += v * v;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        m[i * d + j] += x[i] * x[j] / n2;
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(X.atoms.size());
  for (double& v : m) v *= inv_n;
  return m;
}

std::vector<double> expected_combined(const FiniteDistribution& X) {
  const std::vector<double> m = normalized_outer_mean(X);
  const std::vector<double> ex = X.mean();
  const std::size_t d = X.dim();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 2.0 * ex[i];
    for (std::size_t j = 0; j < d; ++j) acc -= m[i * d + j] * ex[j];
    out[i] = acc;
  }
  return out;
}

LemmaStats lemma_checks(const FiniteDistribution& X) {
  const std::vector<double> ex = X.mean();
  double ex_norm2 = 0.0;
  for (double v : ex) ex_norm2 += v * v;
  if (ex_norm2 == 0.0) {
    throw argument_error("lemma_checks: degenerate distribution with zero mean");
  }
  const std::vector<double> ey = expected_combined(X);
  double ey_norm2 = 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    ey_norm2 += ey[i] * ey[i];
    dot += ex[i] * ey[i];
  }

  const std::size_t d = X.dim();
  std::vector<double> a = normalized_outer_mean(X);
  // 2I - M
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      a[i * d + j] = (i == j ? 2.0 : 0.0) - a[i * d + j];
    }
  }
  const std::vector<double> eigs = symmetric_eigenvalues(std::move(a), d);

  LemmaStats s;
  s.cos_angle = dot / std::sqrt(ex_norm2 * ey_norm2);
  s.norm_ratio = std::sqrt(ey_norm2 / ex_norm2);
  s.eig_min = eigs.front();
  s.eig_max = eigs.back();
  return s;
}

std::vector<double> symmetric_eigenvalues(std::vector<double> m, std::size_t dim) {
  if (m.size() != dim * dim) throw shape_error("eigenvalues: bad matrix size");
  if (dim == 0) return {};
  constexpr double kTol = 1e-12;
  constexpr int kMaxSweeps = 100;

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = i + 1; j < dim; ++j) {
        s += m[i * dim + j] * m[i * dim + j];
      }
    }
    return std::sqrt(2.0 * s);
  };

  for (int sweep = 0; sweep < kMaxSweeps && off_norm() > kTol; ++sweep) {
    for (std::size_t p = 0; p < dim; ++p) {
      for (std::size_t q = p + 1; q < dim; ++q) {
        const double apq = m[p * dim + q];
        if (apq == 0.0) continue;
        const double app = m[p * dim + p];
        const double aqq = m[q * dim + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0)
                             ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                             : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < dim; ++k) {
          const double akp = m[k * dim + p];
          const double akq = m[k * dim + q];
          m[k * dim + p] = c * akp - s * akq;
          m[k * dim + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < dim; ++k) {
          const double apk = m[p * dim + k];
          const double aqk = m[q * dim + k];
          m[p * dim + k] = c * apk - s * aqk;
          m[q * dim + k] = s * apk + c * aqk;
        }
      }
    }
  }

  std::vector<double> eigs(dim);
  for (std::size_t i = 0; i < dim; ++i) eigs[i] = m[i * dim + i];
  std::sort(eigs.begin(), eigs.end());
  return eigs;
}

FiniteDistribution random_finite_distribution(Rng& rng, std::size_t dim_min,
                                              std::size_t dim_max,
                                              std::size_t atoms_min,
                                              std::size_t atoms_max) {
  const std::size_t dim = dim_min + rng.below(dim_max - dim_min + 1);
  const std::size_t n = atoms_min + rng.below(atoms_max - atoms_min + 1);
  for (int attempt = 0; attempt < 64; ++attempt) {
    FiniteDistribution X;
    X.atoms.reserve(n);
    const int flavor = static_cast<int>(rng.below(3));
    std::vector<double> base(dim);
    for (double& v : base) v = rng.normal();
    const double spread = flavor == 1 ? 0.05 + 0.2 * rng.uniform() : 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> x(dim);
      if (flavor == 0) {
        for (double& v : x) v = rng.normal();
      } else if (flavor == 1) {
        // near-parallel cluster around a shared direction
        const double gain = 0.5 + rng.uniform();
        for (std::size_t j = 0; j < dim; ++j) {
          x[j] = gain * base[j] + spread * rng.normal();
        }
      } else {
        // two opposed clusters with unequal weights
        const double sign = rng.uniform() < 0.7 ? 1.0 : -1.0;
        for (std::size_t j = 0; j < dim; ++j) {
          x[j] = sign * base[j] + 0.3 * rng.normal();
        }
      }
      X.atoms.push_back(std::move(x));
    }
    double mean2 = 0.0;
    for (double v : X.mean()) mean2 += v * v;
    bool ok = mean2 > 1e-12;
    for (const auto& x : X.atoms) {
      double n2 = 0.0;
      for (double v : x) n2 += v * v;
      if (n2 < 1e-12) ok = false;
    }
    if (ok) return X;
  }
  throw argument_error("random_finite_distribution: could not draw a valid set");
}

}  // namespace adasum
