#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "adasum/layout.hpp"
#include "adasum/rng.hpp"
#include "adasum/tensor.hpp"

namespace adasum {

// Coefficients of the adaptive sum c1*g1 + c2*g2 for one completed triple:
// c1 = 1 - ab/(2*aa), c2 = 1 - ab/(2*bb). A zero squared norm means that
// operand is identically zero, so its coefficient is taken as 0 and the
// other as 1; the pair then reduces to the nonzero operand.
struct AdasumCoefficients {
  double c1 = 0.0;
  double c2 = 0.0;
};
AdasumCoefficients adasum_coefficients(const DotTriple& t);

// Adaptive sum of two gradients. Interpolates between the elementwise sum
// (orthogonal inputs) and the average (parallel inputs). With a layout the
// triple and coefficients are computed independently per layer segment;
// otherwise over the whole vector. NaN in the inputs propagates.
Tensor adasum_pair(const Tensor& g1, const Tensor& g2,
                   const std::optional<LayerLayout>& layout = std::nullopt);

// Left fold of adasum_pair over the list.
Tensor adasum_linear(const std::vector<Tensor>& gs,
                     const std::optional<LayerLayout>& layout = std::nullopt);

// Balanced binary recursion, splitting at floor(n/2). Reference for the
// rank-parallel collective.
Tensor adasum_tree(const std::vector<Tensor>& gs,
                   const std::optional<LayerLayout>& layout = std::nullopt);

// ||adasum_tree(gs)||^2 / sum_i ||g_i||^2. Equals 1 for mutually orthogonal
// gradients and 1/n for identical equal-norm ones. Throws numeric_error if
// every input is zero.
double orthogonality(const std::vector<Tensor>& gs);

// Per-layer variant. Layers whose inputs are all zero yield NaN entries.
std::vector<double> orthogonality_per_layer(const std::vector<Tensor>& gs,
                                            const LayerLayout& layout);

// Uniformly weighted finite set of vectors of equal dimension.
struct FiniteDistribution {
  std::vector<std::vector<double>> atoms;

  std::size_t dim() const { return atoms.empty() ? 0 : atoms.front().size(); }
  void validate() const;  // nonempty, equal dims, no zero-norm atom
  std::vector<double> mean() const;
};

// Row-major dim x dim matrix M = (1/N) sum_i x_i x_i^T / ||x_i||^2.
std::vector<double> normalized_outer_mean(const FiniteDistribution& X);

// (2I - M) * mean(X): the expected pairwise adaptive sum over independent
// draws, equal to the exact average of adasum_pair over all N^2 ordered
// pairs of atoms.
std::vector<double> expected_combined(const FiniteDistribution& X);

struct LemmaStats {
  double cos_angle = 0.0;   // cosine between mean(X) and expected_combined(X)
  double norm_ratio = 0.0;  // ||expected_combined|| / ||mean||
  double eig_min = 0.0;     // extreme eigenvalues of 2I - M
  double eig_max = 0.0;
};

// Measures the combiner's expectation guarantees on one distribution:
// cos_angle >= 2*sqrt(2)/3 ~= 0.9428, norm_ratio in [1, 2], and the
// eigenvalues of 2I - M in [1, 2]. Throws argument_error on a zero mean.
LemmaStats lemma_checks(const FiniteDistribution& X);

// Eigenvalues of a dense symmetric matrix (row-major, dim <= 64) by cyclic
// Jacobi rotations to off-diagonal tolerance 1e-12. Ascending order.
std::vector<double> symmetric_eigenvalues(std::vector<double> m, std::size_t dim);

// Random distribution for sweep checks: dimension and atom count drawn
// from the given ranges, atoms from a mixture of iid normals, near-parallel
// clusters, and sign-flipped cluster blends. Guaranteed nonzero atoms and
// nonzero mean.
FiniteDistribution random_finite_distribution(Rng& rng, std::size_t dim_min,
                                              std::size_t dim_max,
                                              std::size_t atoms_min,
                                              std::size_t atoms_max);

}  // namespace adasum
