#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "adasum/combiner.hpp"
#include "adasum/rng.hpp"

using namespace adasum;

namespace {

Tensor vec(std::vector<double> v) { return Tensor::from_f64(std::move(v)); }

Tensor random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor::from_f64(std::move(v));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) { return a == b; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]));
  }
  return m;
}

// brute-force oracle: average adasum_pair over all N^2 ordered atom pairs
std::vector<double> pair_average_oracle(const FiniteDistribution& X) {
  const std::size_t d = X.dim();
  const std::size_t n = X.atoms.size();
  std::vector<double> acc(d, 0.0);
  for (const auto& a : X.atoms) {
    for (const auto& b : X.atoms) {
      const Tensor r = adasum_pair(vec(a), vec(b));
      for (std::size_t i = 0; i < d; ++i) acc[i] += r[i];
    }
  }
  for (double& v : acc) v /= static_cast<double>(n * n);
  return acc;
}

}  // namespace

TEST_CASE("orthogonal gradients add bitwise") {
  const Tensor r = adasum_pair(vec({1.0, 0.0}), vec({0.0, 1.0}));
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 1.0);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + 2 * rng.below(50);
    std::vector<double> a(n, 0.0), b(n, 0.0);
    for (std::size_t i = 0; i < n / 2; ++i) a[i] = rng.normal();
    for (std::size_t i = n / 2; i < n; ++i) b[i] = rng.normal();
    const Tensor sum = axpby(1.0, vec(a), 1.0, vec(b));
    REQUIRE(bitwise_equal(adasum_pair(vec(a), vec(b)), sum));
  }
}

TEST_CASE("identical gradients average to the input") {
  const Tensor r = adasum_pair(vec({2.0, 0.0}), vec({2.0, 0.0}));
  CHECK(r[0] == 2.0);
  CHECK(r[1] == 0.0);

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor g = random_vec(rng, 1 + rng.below(40));
    REQUIRE(bitwise_equal(adasum_pair(g, g), g));
  }
}

TEST_CASE("hand-derived mixed pair") {
  // ab=1, aa=1, bb=2: coefficients 0.5 and 0.75
  const Tensor r = adasum_pair(vec({1.0, 0.0}), vec({1.0, 1.0}));
  CHECK(r[0] == 1.25);
  CHECK(r[1] == 0.75);
}

TEST_CASE("doubled operand gives one and a half times the input") {
  Rng rng(9);
  const Tensor g = random_vec(rng, 16);
  const Tensor g2 = axpby(2.0, g, 0.0, g);
  // ab = 2||g||^2: coefficients 0 and 3/4, so the result is 1.5 g
  const Tensor r = adasum_pair(g, g2);
  const Tensor expect = axpby(1.5, g, 0.0, g);
  CHECK(max_abs_diff(r, expect) == 0.0);
}

TEST_CASE("zero operand passes the other through") {
  Rng rng(11);
  const Tensor g = random_vec(rng, 20);
  const Tensor zero = Tensor::zeros(20);
  CHECK(bitwise_equal(adasum_pair(zero, g), g));
  CHECK(bitwise_equal(adasum_pair(g, zero), g));
  CHECK(bitwise_equal(adasum_pair(zero, zero), zero));
}

TEST_CASE("pair is symmetric") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(64);
    const Tensor a = random_vec(rng, n);
    const Tensor b = random_vec(rng, n);
    REQUIRE(bitwise_equal(adasum_pair(a, b), adasum_pair(b, a)));
  }
}

TEST_CASE("pair is scale equivariant") {
  Rng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(32);
    const Tensor a = random_vec(rng, n);
    const Tensor b = random_vec(rng, n);
    // power-of-two scaling keeps every product exact
    const double c = std::ldexp(1.0, 1 + static_cast<int>(rng.below(6)));
    const Tensor scaled =
        adasum_pair(axpby(c, a, 0.0, a), axpby(c, b, 0.0, b));
    REQUIRE(bitwise_equal(scaled, axpby(c, adasum_pair(a, b), 0.0, a)));

    const double cr = 0.1 + 3.0 * rng.uniform();
    const Tensor scaled_r =
        adasum_pair(axpby(cr, a, 0.0, a), axpby(cr, b, 0.0, b));
    const Tensor expect = axpby(cr, adasum_pair(a, b), 0.0, a);
    REQUIRE(max_abs_diff(scaled_r, expect) < 1e-12 * (1.0 + cr) * 10.0);
  }
}

TEST_CASE("nan in inputs propagates") {
  const Tensor bad = vec({1.0, std::nan("")});
  const Tensor r = adasum_pair(bad, vec({1.0, 1.0}));
  CHECK_FALSE(r.all_finite());
}

TEST_CASE("per-layer coefficients are independent per segment") {
  const LayerLayout layout = LayerLayout::from_lengths({2, 2});
  const Tensor g1 = vec({1.0, 0.0, 1.0, 0.0});
  const Tensor g2 = vec({0.0, 1.0, 1.0, 0.0});
  // layer 0 orthogonal -> sum; layer 1 identical -> average
  const Tensor r = adasum_pair(g1, g2, layout);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 1.0);
  CHECK(r[2] == 1.0);
  CHECK(r[3] == 0.0);

  // whole-vector coefficients differ
  const Tensor w = adasum_pair(g1, g2);
  CHECK(w[0] != r[0]);

  // per-layer result equals concatenated per-segment pairs
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor a = random_vec(rng, 10);
    const Tensor b = random_vec(rng, 10);
    const LayerLayout lay = LayerLayout::from_lengths({3, 4, 3});
    const Tensor whole = adasum_pair(a, b, lay);
    std::size_t off = 0;
    for (std::size_t len : {3u, 4u, 3u}) {
      const Tensor part = adasum_pair(a.slice(off, len), b.slice(off, len));
      for (std::size_t i = 0; i < len; ++i) REQUIRE(whole[off + i] == part[i]);
      off += len;
    }
  }
}

TEST_CASE("layout validation") {
  const LayerLayout lay = LayerLayout::from_lengths({2, 5, 1});
  CHECK(lay.total_len() == 8);
  CHECK(lay.layer_of(0) == 0);
  CHECK(lay.layer_of(1) == 0);
  CHECK(lay.layer_of(2) == 1);
  CHECK(lay.layer_of(6) == 1);
  CHECK(lay.layer_of(7) == 2);
  CHECK_THROWS_AS(lay.layer_of(8), shape_error);

  // gaps and overlaps are rejected
  CHECK_THROWS_AS(LayerLayout({{0, 3}, {4, 2}}), shape_error);
  CHECK_THROWS_AS(LayerLayout({{0, 3}, {2, 2}}), shape_error);
  CHECK_THROWS_AS(LayerLayout({{1, 3}}), shape_error);

  // layout must cover the operands
  CHECK_THROWS_AS(
      adasum_pair(Tensor::zeros(4), Tensor::zeros(4), LayerLayout::single(3)),
      shape_error);
}

TEST_CASE("linear fold identities") {
  Rng rng(19);
  const Tensor v = random_vec(rng, 8);
  CHECK(bitwise_equal(adasum_linear({v}), v));
  CHECK(bitwise_equal(adasum_linear({v, v, v, v}), v));

  const std::vector<Tensor> basis = {vec({1, 0, 0, 0}), vec({0, 1, 0, 0}),
                                     vec({0, 0, 1, 0}), vec({0, 0, 0, 1})};
  const Tensor ones = vec({1, 1, 1, 1});
  CHECK(bitwise_equal(adasum_linear(basis), ones));
  CHECK(bitwise_equal(adasum_tree(basis), ones));
  CHECK_THROWS_AS(adasum_linear({}), argument_error);
  CHECK_THROWS_AS(adasum_tree({}), argument_error);
}

TEST_CASE("tree base cases") {
  Rng rng(21);
  const Tensor v = random_vec(rng, 12);
  CHECK(bitwise_equal(adasum_tree({v, v, v, v}), v));

  const Tensor a = random_vec(rng, 12);
  const Tensor b = random_vec(rng, 12);
  CHECK(bitwise_equal(adasum_tree({a, b}), adasum_pair(a, b)));

  // non-power-of-two splits at floor(n/2)
  const Tensor c = random_vec(rng, 12);
  const Tensor expect = adasum_pair(a, adasum_pair(b, c));
  CHECK(bitwise_equal(adasum_tree({a, b, c}), expect));
}

TEST_CASE("tree and linear agree with the sum on orthogonal sets") {
  Rng rng(23);
  const std::size_t n = 8;
  std::vector<Tensor> gs;
  std::vector<double> total(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> g(n, 0.0);
    g[k] = rng.normal(0.0, 2.0);
    total[k] = g[k];
    gs.push_back(vec(g));
  }
  CHECK(bitwise_equal(adasum_tree(gs), vec(total)));
  CHECK(bitwise_equal(adasum_linear(gs), vec(total)));
}

TEST_CASE("orthogonality metric limits") {
  // 64 identical equal-norm gradients: minimum 1/64
  Rng rng(25);
  const Tensor g = random_vec(rng, 32);
  const std::vector<Tensor> identical(64, g);
  CHECK(orthogonality(identical) == doctest::Approx(1.0 / 64).epsilon(1e-12));

  std::vector<Tensor> basis;
  for (int k = 0; k < 6; ++k) {
    std::vector<double> v(6, 0.0);
    v[static_cast<std::size_t>(k)] = 1.0 + rng.uniform();
    basis.push_back(vec(v));
  }
  CHECK(orthogonality(basis) == doctest::Approx(1.0).epsilon(1e-12));

  const double mixed = orthogonality({vec({1, 0}), vec({1, 1})});
  CHECK(mixed == doctest::Approx(2.125 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(orthogonality({Tensor::zeros(4), Tensor::zeros(4)}),
                  numeric_error);
}

TEST_CASE("orthogonality stays within its bounds for equal-norm inputs") {
  // the [1/n, 1] range is a statement about gradient-like families; with
  // negatively correlated vectors cancellation can push the metric below
  // 1/n (adasum_pair(g, -g) is zero), so draw from the nonnegative orthant
  // where every pairwise dot is >= 0
  Rng rng(27);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(15);
    const std::size_t d = 2 + rng.below(15);
    std::vector<Tensor> gs;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> v(d);
      for (auto& x : v) x = std::fabs(rng.normal());
      Tensor g = vec(v);
      const double norm = std::sqrt(dot_triple(g, g).aa);
      gs.push_back(axpby(1.0 / norm, g, 0.0, g));
    }
    const double o = orthogonality(gs);
    REQUIRE(o >= 1.0 / static_cast<double>(n) - 1e-12);
    REQUIRE(o <= 1.0 + 1e-9);
  }

  // the upper bound needs no correlation restriction
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(15);
    const std::size_t d = 2 + rng.below(15);
    std::vector<Tensor> gs;
    for (std::size_t k = 0; k < n; ++k) {
      Tensor g = random_vec(rng, d);
      const double norm = std::sqrt(dot_triple(g, g).aa);
      gs.push_back(axpby(1.0 / norm, g, 0.0, g));
    }
    REQUIRE(orthogonality(gs) <= 1.0 + 1e-9);
  }
}

TEST_CASE("expected_combined hand values") {
  FiniteDistribution X;
  X.atoms = {{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<double> ey = expected_combined(X);
  CHECK(ey[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(ey[1] == doctest::Approx(0.75).epsilon(1e-15));

  FiniteDistribution single;
  single.atoms = {{3.0, -4.0, 1.0}};
  const std::vector<double> ey1 = expected_combined(single);
  CHECK(ey1[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(ey1[1] == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(ey1[2] == doctest::Approx(1.0).epsilon(1e-12));

  FiniteDistribution bad;
  bad.atoms = {{0.0, 0.0}};
  CHECK_THROWS_AS(expected_combined(bad), argument_error);
}

TEST_CASE("expected_combined equals the ordered-pair average") {
  Rng rng(29);
  for (int trial = 0; trial < 60; ++trial) {
    const FiniteDistribution X = random_finite_distribution(rng, 2, 8, 2, 12);
    const std::vector<double> fast = expected_combined(X);
    const std::vector<double> slow = pair_average_oracle(X);
    for (std::size_t i = 0; i < fast.size(); ++i) {
      REQUIRE(fast[i] == doctest::Approx(slow[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("jacobi eigenvalues against constructed spectra") {
  // [[2,1],[1,2]] has eigenvalues 1 and 3
  std::vector<double> m = {2, 1, 1, 2};
  const std::vector<double> e = symmetric_eigenvalues(m, 2);
  CHECK(e[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(3.0).epsilon(1e-12));

  // random orthogonal basis via Gram-Schmidt, known diagonal
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.below(7);
    std::vector<std::vector<double>> q;
    while (q.size() < d) {
      std::vector<double> v(d);
      for (auto& x : v) x = rng.normal();
      for (const auto& u : q) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += u[i] * v[i];
        for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      if (norm < 1e-6) continue;
      norm = std::sqrt(norm);
      for (auto& x : v) x /= norm;
      q.push_back(v);
    }
    std::vector<double> eig(d);
    for (auto& x : eig) x = rng.uniform(-3.0, 3.0);
    std::sort(eig.begin(), eig.end());
    std::vector<double> a(d * d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          a[i * d + j] += eig[k] * q[k][i] * q[k][j];
        }
      }
    }
    const std::vector<double> got = symmetric_eigenvalues(a, d);
    for (std::size_t k = 0; k < d; ++k) {
      REQUIRE(got[k] == doctest::Approx(eig[k]).epsilon(1e-9));
    }
  }
}

TEST_CASE("lemma stats hand values") {
  FiniteDistribution X;
  X.atoms = {{1.0, 0.0}, {0.0, 1.0}};
  const LemmaStats s = lemma_checks(X);
  CHECK(s.cos_angle == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.norm_ratio == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(s.eig_min == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(s.eig_max == doctest::Approx(1.5).epsilon(1e-9));

  FiniteDistribution single;
  single.atoms = {{2.0, 1.0}};
  const LemmaStats s1 = lemma_checks(single);
  CHECK(s1.cos_angle == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s1.norm_ratio == doctest::Approx(1.0).epsilon(1e-12));

  FiniteDistribution degenerate;
  degenerate.atoms = {{1.0, 0.0}, {-1.0, 0.0}};
  CHECK_THROWS_AS(lemma_checks(degenerate), argument_error);
}

TEST_CASE("lemma bounds hold over random distributions") {
  Rng rng(33);
  for (int trial = 0; trial < 300; ++trial) {
    const FiniteDistribution X = random_finite_distribution(rng, 2, 16, 2, 64);
    const LemmaStats s = lemma_checks(X);
    CAPTURE(trial);
    REQUIRE(s.cos_angle >= 0.9428 - 1e-9);
    REQUIRE(s.norm_ratio >= 1.0 - 1e-9);
    REQUIRE(s.norm_ratio <= 2.0 + 1e-9);
    REQUIRE(s.eig_min >= 1.0 - 1e-9);
    REQUIRE(s.eig_max <= 2.0 + 1e-9);
  }
}
