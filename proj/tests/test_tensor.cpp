#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "adasum/rng.hpp"
#include "adasum/tensor.hpp"

using namespace adasum;

namespace {

// Independent binary16 rounding oracle: decode every finite bit pattern
// with the plain textbook formula, then round by nearest-value search with
// ties to the even mantissa. Values at or past the overflow midpoint go to
// infinity.
struct HalfTable {
  std::vector<std::pair<double, std::uint16_t>> values;  // sorted nonnegative

  HalfTable() {
    for (std::uint32_t bits = 0; bits < 0x7C00; ++bits) {
      const int exp = static_cast<int>(bits >> 10) & 0x1F;
      const int man = static_cast<int>(bits & 0x3FF);
      const double v = exp == 0
                           ? std::ldexp(man, -24)
                           : std::ldexp(1.0 + man / 1024.0, exp - 15);
      values.emplace_back(v, static_cast<std::uint16_t>(bits));
    }
    std::sort(values.begin(), values.end());
  }

  std::uint16_t round(double x) const {
    if (std::isnan(x)) {
      return static_cast<std::uint16_t>((std::signbit(x) ? 0x8000u : 0u) | 0x7E00u);
    }
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
    const double ax = std::fabs(x);
    if (ax >= 65520.0) return static_cast<std::uint16_t>(sign | 0x7C00u);
    auto it = std::lower_bound(
        values.begin(), values.end(), std::make_pair(ax, std::uint16_t{0}));
    std::uint16_t best;
    if (it == values.begin()) {
      best = it->second;
    } else {
      const auto lo = std::prev(it);
      const double d_lo = ax - lo->first;
      const double d_hi = it->first - ax;
      if (d_lo < d_hi) {
        best = lo->second;
      } else if (d_hi < d_lo) {
        best = it->second;
      } else {
        best = (lo->second & 1) == 0 ? lo->second : it->second;
      }
    }
    return static_cast<std::uint16_t>(sign | best);
  }
};

}  // namespace

TEST_CASE("binary16 quantization matches the table oracle") {
  const HalfTable table;

  CHECK(f16_from_f64(1.0) == table.round(1.0));
  CHECK(f16_to_f64(f16_from_f64(1.0)) == 1.0);

  // 65504 is the largest finite half; the midpoint 65520 overflows to inf
  CHECK(f16_to_f64(f16_from_f64(65504.0)) == 65504.0);
  CHECK(std::isinf(f16_to_f64(f16_from_f64(65520.0))));
  CHECK(f16_to_f64(f16_from_f64(65519.9)) == 65504.0);
  CHECK(std::isinf(f16_to_f64(f16_from_f64(-65520.0))));
  CHECK(f16_to_f64(f16_from_f64(-65520.0)) < 0);

  // below half the smallest subnormal rounds to zero
  CHECK(f16_from_f64(std::ldexp(0.9, -25)) == 0);
  CHECK(f16_from_f64(std::ldexp(1.0, -25)) == 0);  // tie to even (zero)
  CHECK(f16_to_f64(f16_from_f64(std::ldexp(1.1, -25))) == std::ldexp(1.0, -24));

  CHECK(std::isnan(f16_to_f64(f16_from_f64(std::nan("")))));
  CHECK(std::isinf(f16_to_f64(f16_from_f64(
      std::numeric_limits<double>::infinity()))));

  Rng rng(11);
  for (int i = 0; i < 100000; ++i) {
    double x;
    switch (i % 4) {
      case 0: x = rng.normal(0.0, 1.0); break;
      case 1: x = rng.normal(0.0, 1e4); break;
      case 2: x = rng.normal(0.0, 1e-6); break;
      default: x = std::ldexp(rng.uniform(-2.0, 2.0), static_cast<int>(rng.below(40)) - 20);
    }
    CAPTURE(x);
    REQUIRE(f16_from_f64(x) == table.round(x));
  }
}

TEST_CASE("binary16 round trip is idempotent") {
  Rng rng(17);
  for (int i = 0; i < 100000; ++i) {
    const double x = rng.normal(0.0, std::ldexp(1.0, static_cast<int>(rng.below(36)) - 18));
    const std::uint16_t once = f16_from_f64(x);
    const std::uint16_t twice = f16_from_f64(f16_to_f64(once));
    REQUIRE(once == twice);
  }
}

TEST_CASE("dot_triple hand values") {
  const Tensor e1 = Tensor::from_f64({1.0, 0.0});
  const Tensor e2 = Tensor::from_f64({0.0, 1.0});
  DotTriple t = dot_triple(e1, e2);
  CHECK(t.ab == 0.0);
  CHECK(t.aa == 1.0);
  CHECK(t.bb == 1.0);

  const Tensor v34 = Tensor::from_f64({3.0, 4.0});
  t = dot_triple(v34, v34);
  CHECK(t.ab == 25.0);
  CHECK(t.aa == 25.0);
  CHECK(t.bb == 25.0);

  t = dot_triple(Tensor::from_f64({1.0, 1.0}), Tensor::from_f64({1.0, 0.0}));
  CHECK(t.ab == 1.0);
  CHECK(t.aa == 2.0);
  CHECK(t.bb == 1.0);
}

TEST_CASE("dot_triple properties on random vectors") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    std::vector<double> av(n), bv(n);
    for (auto& v : av) v = rng.normal();
    for (auto& v : bv) v = rng.normal();
    const Tensor a = Tensor::from_f64(av);
    const Tensor b = Tensor::from_f64(bv);

    const DotTriple self = dot_triple(a, a);
    CHECK(self.ab == self.aa);  // identical accumulation order, same bits
    CHECK(self.ab == self.bb);

    const DotTriple ab = dot_triple(a, b);
    const DotTriple ba = dot_triple(b, a);
    CHECK(ab.ab == ba.ab);
    CHECK(ab.aa == ba.bb);
    CHECK(ab.bb == ba.aa);

    // Cauchy-Schwarz within rounding
    CHECK(std::fabs(ab.ab) <= std::sqrt(ab.aa * ab.bb) * (1.0 + 1e-9) + 1e-300);
  }
}

TEST_CASE("dot_triple rejects mismatched lengths") {
  CHECK_THROWS_AS(dot_triple(Tensor::zeros(3), Tensor::zeros(4)), shape_error);
}

TEST_CASE("zero-length tensors reduce to zeros") {
  const Tensor empty = Tensor::zeros(0);
  const DotTriple t = dot_triple(empty, empty);
  CHECK(t.ab == 0.0);
  CHECK(t.aa == 0.0);
  CHECK(t.bb == 0.0);
  CHECK(axpby(2.0, empty, 3.0, empty).size() == 0);
}

TEST_CASE("axpby hand values") {
  const Tensor r1 = axpby(1.0, Tensor::from_f64({1.0, 0.0}), 1.0,
                          Tensor::from_f64({0.0, 1.0}));
  CHECK(r1[0] == 1.0);
  CHECK(r1[1] == 1.0);

  const Tensor r2 = axpby(0.5, Tensor::from_f64({1.0, 0.0}), 0.75,
                          Tensor::from_f64({1.0, 1.0}));
  CHECK(r2[0] == 1.25);
  CHECK(r2[1] == 0.75);

  const Tensor r3 = axpby(0.0, Tensor::from_f64({5.0, -2.0}), 0.0,
                          Tensor::from_f64({7.0, 9.0}));
  CHECK(r3[0] == 0.0);
  CHECK(r3[1] == 0.0);
}

TEST_CASE("f16 axpby computes in double and quantizes once") {
  // 1/3 quantizes; the double-precision combination of the quantized
  // inputs is what must be stored, not a twice-rounded value
  const Tensor a = quantize_f16(Tensor::from_f64({1.0 / 3.0}));
  const Tensor b = quantize_f16(Tensor::from_f64({2.0 / 3.0}));
  const Tensor r = axpby(1.0, a, 1.0, b);
  CHECK(r.dtype() == Dtype::F16emu);
  CHECK(r[0] == f16_to_f64(f16_from_f64(a[0] + b[0])));
}

TEST_CASE("quantize and dequantize convert dtype") {
  const Tensor t = Tensor::from_f64({1.0, -2.5, 0.1});
  const Tensor q = quantize_f16(t);
  CHECK(q.dtype() == Dtype::F16emu);
  CHECK(q[0] == 1.0);
  CHECK(q[1] == -2.5);
  const Tensor d = dequantize_f16(q);
  CHECK(d.dtype() == Dtype::F64);
  CHECK(d[2] == f16_to_f64(f16_from_f64(0.1)));
}

TEST_CASE("serialization layout is bit exact") {
  const Tensor t = Tensor::from_f64({1.5, -3.0});
  const std::vector<std::uint8_t> bytes = serialize(t);
  REQUIRE(bytes.size() == 1 + 8 + 16);
  CHECK(bytes[0] == 0);  // F64 tag
  CHECK(bytes[1] == 2);  // length LE
  for (int i = 2; i <= 8; ++i) CHECK(bytes[static_cast<std::size_t>(i)] == 0);
  // 1.5 = 0x3FF8000000000000 little-endian
  CHECK(bytes[9] == 0x00);
  CHECK(bytes[15] == 0xF8);
  CHECK(bytes[16] == 0x3F);

  const Tensor back = deserialize(bytes);
  CHECK(back == t);

  const Tensor h = quantize_f16(Tensor::from_f64({1.0}));
  const std::vector<std::uint8_t> hb = serialize(h);
  REQUIRE(hb.size() == 1 + 8 + 2);
  CHECK(hb[0] == 1);
  CHECK(hb[9] == 0x00);
  CHECK(hb[10] == 0x3C);  // binary16 1.0 = 0x3C00
  CHECK(deserialize(hb) == h);
}

TEST_CASE("serialization round trip on random tensors") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = rng.below(100);
    std::vector<double> vals(n);
    for (auto& v : vals) v = rng.normal(0.0, 100.0);
    const Tensor t = trial % 2 == 0
                         ? Tensor::from_f64(vals)
                         : quantize_f16(Tensor::from_f64(vals));
    CHECK(deserialize(serialize(t)) == t);
  }
}

TEST_CASE("all_finite flags inf and nan in both dtypes") {
  CHECK(Tensor::from_f64({1.0, 2.0}).all_finite());
  CHECK_FALSE(Tensor::from_f64({1.0, std::nan("")}).all_finite());
  CHECK_FALSE(quantize_f16(Tensor::from_f64({1e6})).all_finite());  // overflows
  CHECK(quantize_f16(Tensor::from_f64({1.0})).all_finite());
}
