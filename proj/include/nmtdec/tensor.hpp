#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace nmtdec {

/// Dense row-major float matrix. Vectors are 1×n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols);
  Tensor(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor row_vector(std::span<const float> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  Tensor transposed() const;
  Tensor gather_rows(std::span<const int32_t> ids) const;
  // Rows of `parts` stacked top to bottom; all parts must share a column count.
  static Tensor vstack(std::span<const Tensor* const> parts);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Same shape and same bit patterns (distinguishes -0.0 from 0.0).
bool bitwise_equal(const Tensor& a, const Tensor& b);
float max_abs_diff(const Tensor& a, const Tensor& b);

// C = A·B. Every output cell is summed left to right over the inner index,
// so the result is reproducible and matches a naive triple loop bit for bit.
Tensor gemm_f32(const Tensor& a, const Tensor& b);

// Y = X·Wᵀ with X holding one input per row. Bitwise equal to
// gemm_f32(w, x.transposed()).transposed(); each cell depends only on its own
// weight row and input row, so batching never changes a result.
Tensor linear_f32(const Tensor& w, const Tensor& x);
void linear_f32(const Tensor& w, const float* x, std::size_t n, float* y);

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& v);
void softmax_inplace(std::span<float> v);
void log_softmax_inplace(std::span<float> v);

enum class ActivationKind : uint8_t { kSigmoid, kTanh, kReluClipped };
enum class EvalMode : uint8_t { kExact, kLut };

inline constexpr float kReluClipMax = 10.0f;

float sigmoid_exact(float x);
float tanh_exact(float x);
float relu_clipped(float x);

/// Piecewise-linear table for sigmoid or tanh over [domain_lo, domain_hi].
/// Inputs outside the domain clamp to the boundary value.
class LookupTable {
 public:
  static constexpr std::size_t kDefaultEntries = 4096;

  LookupTable(ActivationKind kind, float domain_lo, float domain_hi,
              std::size_t entries = kDefaultEntries);

  // Shared default tables: sigmoid over [-16, 16], tanh over [-8, 8].
  static const LookupTable& standard(ActivationKind kind);

  ActivationKind kind() const { return kind_; }
  float domain_lo() const { return lo_; }
  float domain_hi() const { return hi_; }
  float step() const { return step_; }
  std::span<const float> entries() const { return entries_; }

  float operator()(float x) const;
  void apply(std::span<float> v) const;

 private:
  ActivationKind kind_;
  float lo_;
  float hi_;
  float step_;
  float inv_step_;
  float center_;
  float half_;
  std::vector<float> entries_;
};

void activate_inplace(ActivationKind kind, std::span<float> v, EvalMode mode);
Tensor activate(ActivationKind kind, const Tensor& v, EvalMode mode);

enum class BinaryOp : uint8_t { kAdd, kMul };
// kVector uses SIMD when the build has it; kScalar never vectorizes.
// Both produce identical bits.
enum class VecPath : uint8_t { kScalar, kVector };

void vec_binary(BinaryOp op, std::span<const float> a, std::span<const float> b,
                std::span<float> out, VecPath path);
Tensor vec_binary(BinaryOp op, const Tensor& a, const Tensor& b,
                  VecPath path = VecPath::kVector);

// out[i] += alpha * x[i], in the given path. Used for attention-weighted sums.
void axpy(float alpha, std::span<const float> x, std::span<float> out, VecPath path);

}  // namespace nmtdec
