#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nmtdec/tensor.hpp"

namespace nmtdec {

inline constexpr int kDefaultWeightFracBits = 10;
inline constexpr int kDefaultActivationFracBits = 10;
inline constexpr float kWeightClip = 1.0f;
inline constexpr float kActivationClip = 16.0f;

// Weight layout: rows grouped into panels of 8; inside a panel the k axis is
// walked in pairs and each pair stores (w[r][2q], w[r][2q+1]) for r = 0..7.
// One 256-bit load then feeds a pairwise multiply-add for all 8 rows.
inline constexpr uint32_t kLayoutPanel8Pair2 = 0x00080002u;
inline constexpr std::size_t kPanelRows = 8;

/// 16-bit fixed-point weight matrix, stored in the packed panel layout.
/// Values are clip(w, -1, 1) · 2^frac_bits rounded to nearest even.
class QuantMatrix {
 public:
  QuantMatrix() = default;

  // Adopts an already packed payload (used by the model loader).
  static QuantMatrix from_packed(std::size_t rows, std::size_t cols, int frac_bits,
                                 uint32_t layout_tag, std::vector<int16_t> payload);
  static std::size_t packed_size(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t padded_cols() const { return padded_cols_; }
  int frac_bits() const { return frac_bits_; }
  uint32_t layout_tag() const { return kLayoutPanel8Pair2; }
  std::span<const int16_t> payload() const { return data_; }

  int16_t at(std::size_t r, std::size_t c) const { return data_[index(r, c)]; }
  Tensor dequantize() const;

  QuantMatrix gather_rows(std::span<const int32_t> ids) const;
  static QuantMatrix vstack(std::span<const QuantMatrix* const> parts);

  bool operator==(const QuantMatrix&) const = default;

 private:
  friend QuantMatrix quantize_weights(const Tensor& w, int frac_bits_w);
  QuantMatrix(std::size_t rows, std::size_t cols, int frac_bits);

  std::size_t index(std::size_t r, std::size_t c) const {
    return (r / kPanelRows) * (kPanelRows * padded_cols_) + (c / 2) * (2 * kPanelRows) +
           (r % kPanelRows) * 2 + (c % 2);
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t padded_cols_ = 0;
  int frac_bits_ = kDefaultWeightFracBits;
  std::vector<int16_t> data_;
};

/// A batch of quantized activation vectors, one per row. Rows are padded to an
/// even length with zeros so the kernel can read pairs.
class QuantBatch {
 public:
  QuantBatch() = default;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t stride() const { return stride_; }
  int frac_bits() const { return frac_bits_; }
  const int16_t* row(std::size_t r) const { return data_.data() + r * stride_; }
  int16_t at(std::size_t r, std::size_t c) const { return data_[r * stride_ + c]; }
  Tensor dequantize() const;

  // Resizes in place; keeps capacity for reuse across decode steps.
  void assign(const float* x, std::size_t rows, std::size_t cols, int frac_bits);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t stride_ = 0;
  int frac_bits_ = kDefaultActivationFracBits;
  std::vector<int16_t> data_;
};

// frac_bits_w must be in [8, 14].
QuantMatrix quantize_weights(const Tensor& w, int frac_bits_w = kDefaultWeightFracBits);

// frac_bits_a must be in [8, 11]. Inputs are clipped to [-16, 16]; at 11 bits
// the +16 end saturates to 32767.
QuantBatch quantize_activations(const Tensor& v, int frac_bits_a = kDefaultActivationFracBits);

// Y[n×m] = dequant(X·Wᵀ). Products accumulate in 32-bit integers and the sum is
// scaled by 2^-(frac_bits_w + frac_bits_a). Deterministic: integer sums are exact.
Tensor linear_i16(const QuantMatrix& w, const QuantBatch& x);
void linear_i16(const QuantMatrix& w, const QuantBatch& x, float* y);

// Column convention: X holds n inputs (one per row of the batch), result is m×n.
Tensor gemm_i16(const QuantMatrix& w, const QuantBatch& x);

// True if any 32-bit accumulator in linear_i16(w, x) would wrap. Debug builds
// assert this is false on every kernel call.
bool i16_accumulator_overflows(const QuantMatrix& w, const QuantBatch& x);

}  // namespace nmtdec
