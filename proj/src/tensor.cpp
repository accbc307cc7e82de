#include "adasum/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace adasum {

std::uint16_t f16_from_f64(double x) {
  const std::uint64_t b = std::bit_cast<std::uint64_t>(x);
  const std::uint16_t sign = static_cast<std::uint16_t>((b >> 48) & 0x8000u);
  const int exp_bits = static_cast<int>((b >> 52) & 0x7FF);
  const std::uint64_t man = b & 0xFFFFFFFFFFFFFull;

  if (exp_bits == 0x7FF) {
    if (man != 0) return static_cast<std::uint16_t>(sign | 0x7E00u);  // NaN
    return static_cast<std::uint16_t>(sign | 0x7C00u);                // inf
  }
  if (exp_bits == 0) {
    // double subnormal: far below the binary16 subnormal range
    return sign;
  }

  const int e = exp_bits - 1023;
  if (e >= 16) return static_cast<std::uint16_t>(sign | 0x7C00u);
  // value = sig * 2^(e-52) with the implicit bit set
  const std::uint64_t sig = man | (1ull << 52);
  // target ulp is 2^q: normals use e-10, subnormals saturate at 2^-24
  const int q = (e >= -14) ? (e - 10) : -24;
  const int rshift = q - (e - 52);  // in [42, 63] for anything that can round up
  if (rshift >= 64) return sign;

  std::uint64_t keep = sig >> rshift;
  const std::uint64_t round_bit = (sig >> (rshift - 1)) & 1ull;
  const bool sticky = (sig & ((1ull << (rshift - 1)) - 1ull)) != 0;
  if (round_bit && (sticky || (keep & 1ull))) keep += 1;

  if (e >= -14) {
    // keep in [1024, 2048]; 2048 means the mantissa carried into the exponent
    int he = e;
    if (keep == 2048) {
      keep = 1024;
      he += 1;
    }
    if (he > 15) return static_cast<std::uint16_t>(sign | 0x7C00u);
    return static_cast<std::uint16_t>(
        sign | static_cast<std::uint16_t>((he + 15) << 10) |
        static_cast<std::uint16_t>(keep - 1024));
  }
  // subnormal result; keep == 1024 promotes to the smallest normal
  return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(keep));
}

double f16_to_f64(std::uint16_t bits) {
  const bool neg = (bits & 0x8000u) != 0;
  const int exp = (bits >> 10) & 0x1F;
  const int man = bits & 0x3FF;
  double v;
  if (exp == 0x1F) {
    v = man ? std::numeric_limits<double>::quiet_NaN()
            : std::numeric_limits<double>::infinity();
  } else if (exp == 0) {
    v = std::ldexp(static_cast<double>(man), -24);
  } else {
    v = std::ldexp(static_cast<double>(man + 1024), exp - 25);
  }
  return neg ? -v : v;
}

Tensor Tensor::zeros(std::size_t len, Dtype dt) {
  Tensor t;
  t.dtype_ = dt;
  if (dt == Dtype::F64) {
    t.f64_.assign(len, 0.0);
  } else {
    t.f16_.assign(len, 0);
  }
  return t;
}

Tensor Tensor::from_f64(std::vector<double> values) {
  Tensor t;
  t.dtype_ = Dtype::F64;
  t.f64_ = std::move(values);
  return t;
}

Tensor Tensor::from_f64(const std::vector<double>& values, Dtype dt) {
  if (dt == Dtype::F64) return from_f64(values);
  Tensor t;
  t.dtype_ = Dtype::F16emu;
  t.f16_.reserve(values.size());
  for (double v : values) t.f16_.push_back(f16_from_f64(v));
  return t;
}

Tensor Tensor::from_f16_bits(std::vector<std::uint16_t> bits) {
  Tensor t;
  t.dtype_ = Dtype::F16emu;
  t.f16_ = std::move(bits);
  return t;
}

const std::vector<double>& Tensor::f64_data() const {
  if (dtype_ != Dtype::F64) throw shape_error("tensor is not F64");
  return f64_;
}

const std::vector<std::uint16_t>& Tensor::f16_data() const {
  if (dtype_ != Dtype::F16emu) throw shape_error("tensor is not F16emu");
  return f16_;
}

std::vector<double> Tensor::to_f64_vector() const {
  if (dtype_ == Dtype::F64) return f64_;
  std::vector<double> out;
  out.reserve(f16_.size());
  for (std::uint16_t b : f16_) out.push_back(f16_to_f64(b));
  return out;
}

Tensor Tensor::slice(std::size_t offset, std::size_t len) const {
  if (offset + len > size()) throw shape_error("slice out of range");
  Tensor t;
  t.dtype_ = dtype_;
  if (dtype_ == Dtype::F64) {
    t.f64_.assign(f64_.begin() + static_cast<std::ptrdiff_t>(offset),
                  f64_.begin() + static_cast<std::ptrdiff_t>(offset + len));
  } else {
    t.f16_.assign(f16_.begin() + static_cast<std::ptrdiff_t>(offset),
                  f16_.begin() + static_cast<std::ptrdiff_t>(offset + len));
  }
  return t;
}

bool Tensor::all_finite() const {
  if (dtype_ == Dtype::F64) {
    for (double v : f64_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
  for (std::uint16_t b : f16_) {
    if (((b >> 10) & 0x1F) == 0x1F) return false;  // inf or NaN exponent
  }
  return true;
}

bool Tensor::operator==(const Tensor& other) const {
  if (dtype_ != other.dtype_) return false;
  if (dtype_ == Dtype::F64) {
    if (f64_.size() != other.f64_.size()) return false;
    // bitwise comparison, so NaN == NaN and -0 != +0
    return std::memcmp(f64_.data(), other.f64_.data(),
                       f64_.size() * sizeof(double)) == 0;
  }
  return f16_ == other.f16_;
}

DotTriple dot_triple(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw shape_error("dot_triple: length mismatch");
  return dot_triple_range(a, b, 0, a.size());
}

DotTriple dot_triple_range(const Tensor& a, const Tensor& b,
                           std::size_t offset, std::size_t len) {
  if (a.size() != b.size()) throw shape_error("dot_triple: length mismatch");
  if (offset + len > a.size()) throw shape_error("dot_triple: range out of bounds");
  DotTriple t;
  if (a.dtype() == Dtype::F64 && b.dtype() == Dtype::F64) {
    const double* pa = a.f64_data().data() + offset;
    const double* pb = b.f64_data().data() + offset;
    for (std::size_t i = 0; i < len; ++i) {
      t.ab += pa[i] * pb[i];
      t.aa += pa[i] * pa[i];
      t.bb += pb[i] * pb[i];
    }
  } else {
    for (std::size_t i = offset; i < offset + len; ++i) {
      const double x = a[i];
      const double y = b[i];
      t.ab += x * y;
      t.aa += x * x;
      t.bb += y * y;
    }
  }
  return t;
}

Tensor axpby(double alpha, const Tensor& a, double beta, const Tensor& b) {
  if (a.size() != b.size()) throw shape_error("axpby: length mismatch");
  if (a.dtype() != b.dtype()) throw shape_error("axpby: dtype mismatch");
  const std::size_t n = a.size();
  if (a.dtype() == Dtype::F64) {
    const double* pa = a.f64_data().data();
    const double* pb = b.f64_data().data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * pa[i] + beta * pb[i];
    return Tensor::from_f64(std::move(out));
  }
  std::vector<std::uint16_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f16_from_f64(alpha * a[i] + beta * b[i]);
  }
  return Tensor::from_f16_bits(std::move(out));
}

Tensor quantize_f16(const Tensor& t) {
  if (t.dtype() == Dtype::F16emu) return t;
  std::vector<std::uint16_t> bits;
  bits.reserve(t.size());
  for (double v : t.f64_data()) bits.push_back(f16_from_f64(v));
  return Tensor::from_f16_bits(std::move(bits));
}

Tensor dequantize_f16(const Tensor& t) {
  if (t.dtype() == Dtype::F64) return t;
  return Tensor::from_f64(t.to_f64_vector());
}

namespace {

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Tensor& t) {
  std::vector<std::uint8_t> out;
  const std::size_t n = t.size();
  out.reserve(9 + n * (t.dtype() == Dtype::F64 ? 8 : 2));
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  put_u64_le(out, n);
  if (t.dtype() == Dtype::F64) {
    for (double v : t.f64_data()) put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  } else {
    for (std::uint16_t b : t.f16_data()) {
      out.push_back(static_cast<std::uint8_t>(b & 0xFF));
      out.push_back(static_cast<std::uint8_t>(b >> 8));
    }
  }
  return out;
}

Tensor deserialize(const std::uint8_t* data, std::size_t size) {
  if (size < 9) throw shape_error("deserialize: truncated header");
  const std::uint8_t tag = data[0];
  const std::uint64_t n = get_u64_le(data + 1);
  if (tag == 0) {
    if (size != 9 + n * 8) throw shape_error("deserialize: bad f64 payload size");
    std::vector<double> vals(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      vals[i] = std::bit_cast<double>(get_u64_le(data + 9 + i * 8));
    }
    return Tensor::from_f64(std::move(vals));
  }
  if (tag == 1) {
    if (size != 9 + n * 2) throw shape_error("deserialize: bad f16 payload size");
    std::vector<std::uint16_t> bits(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      bits[i] = static_cast<std::uint16_t>(data[9 + i * 2]) |
                static_cast<std::uint16_t>(data[9 + i * 2 + 1]) << 8;
    }
    return Tensor::from_f16_bits(std::move(bits));
  }
  throw shape_error("deserialize: unknown dtype tag");
}

}  // namespace adasum
