#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "adasum/errors.hpp"

namespace adasum {

enum class Dtype : std::uint8_t { F64 = 0, F16emu = 1 };

// IEEE-754 binary16 conversion, round-to-nearest-even. Values above the
// binary16 range map to infinity; NaN is preserved. The 16-bit payload is
// the exact storage format; widening back to double is lossless.
std::uint16_t f16_from_f64(double x);
double f16_to_f64(std::uint16_t bits);

// Flat numeric vector, the unit of reduction. F64 tensors store doubles;
// F16emu tensors store raw binary16 payloads and widen to double on read,
// so a stored value always round-trips bit-exactly.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t len, Dtype dt = Dtype::F64);
  static Tensor from_f64(std::vector<double> values);           // dtype F64
  static Tensor from_f64(const std::vector<double>& values, Dtype dt);
  static Tensor from_f16_bits(std::vector<std::uint16_t> bits); // dtype F16emu

  Dtype dtype() const { return dtype_; }
  std::size_t size() const {
    return dtype_ == Dtype::F64 ? f64_.size() : f16_.size();
  }

  // Widening read; exact for both dtypes.
  double operator[](std::size_t i) const {
    return dtype_ == Dtype::F64 ? f64_[i] : f16_to_f64(f16_[i]);
  }

  // Quantizing write for F16emu.
  void set(std::size_t i, double v) {
    if (dtype_ == Dtype::F64) {
      f64_[i] = v;
    } else {
      f16_[i] = f16_from_f64(v);
    }
  }

  const std::vector<double>& f64_data() const;
  const std::vector<std::uint16_t>& f16_data() const;

  std::vector<double> to_f64_vector() const;

  // Contiguous sub-tensor [offset, offset+len). len may be zero.
  Tensor slice(std::size_t offset, std::size_t len) const;

  bool all_finite() const;

  bool operator==(const Tensor& other) const;

 private:
  Dtype dtype_ = Dtype::F64;
  std::vector<double> f64_;
  std::vector<std::uint16_t> f16_;
};

// Partial sums exchanged to complete adaptive-sum coefficients across a
// rank group: ab = sum a_i*b_i, aa = sum a_i^2, bb = sum b_i^2.
struct DotTriple {
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;

  DotTriple& operator+=(const DotTriple& o) {
    ab += o.ab;
    aa += o.aa;
    bb += o.bb;
    return *this;
  }
};

// All three sums accumulate in double, strict left-to-right, regardless of
// dtype, so a given input yields the same bits on every transport.
DotTriple dot_triple(const Tensor& a, const Tensor& b);

// Same, restricted to the index range [offset, offset+len).
DotTriple dot_triple_range(const Tensor& a, const Tensor& b,
                           std::size_t offset, std::size_t len);

// Elementwise alpha*a + beta*b. The multiply-add runs in double; F16emu
// results are quantized once at the end. Inputs must share length and dtype.
Tensor axpby(double alpha, const Tensor& a, double beta, const Tensor& b);

Tensor quantize_f16(const Tensor& t);   // -> F16emu
Tensor dequantize_f16(const Tensor& t); // -> F64

// Wire format: dtype tag (1 byte: 0=F64, 1=F16emu), element count as 8-byte
// little-endian unsigned, then the payload in little-endian IEEE-754
// (8 bytes per f64 element, 2 bytes per f16 element).
std::vector<std::uint8_t> serialize(const Tensor& t);
Tensor deserialize(const std::uint8_t* data, std::size_t size);
inline Tensor deserialize(const std::vector<std::uint8_t>& bytes) {
  return deserialize(bytes.data(), bytes.size());
}

}  // namespace adasum
