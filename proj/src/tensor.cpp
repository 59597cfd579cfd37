#include "nmtdec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "nmtdec/errors.hpp"
#include "simd.hpp"

namespace nmtdec {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::row_vector(std::span<const float> values) {
  return Tensor(1, values.size(), std::vector<float>(values.begin(), values.end()));
}

Tensor Tensor::transposed() const {
  Tensor out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

Tensor Tensor::gather_rows(std::span<const int32_t> ids) const {
  Tensor out(ids.size(), cols_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows_) {
      throw InputError("row id " + std::to_string(ids[i]) + " out of range for " +
                       shape_str(*this));
    }
    std::copy_n(data_.data() + ids[i] * cols_, cols_, out.data() + i * cols_);
  }
  return out;
}

Tensor Tensor::vstack(std::span<const Tensor* const> parts) {
  std::size_t rows = 0;
  const std::size_t cols = parts.empty() ? 0 : parts.front()->cols();
  for (const Tensor* p : parts) {
    if (p->cols() != cols) throw ShapeError("vstack column mismatch");
    rows += p->rows();
  }
  std::vector<float> data;
  data.reserve(rows * cols);
  for (const Tensor* p : parts) data.insert(data.end(), p->data(), p->data() + p->size());
  return Tensor(rows, cols, std::move(data));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Float GEMM. Per-cell summation is strictly t = 0, 1, ..., k-1 starting from
// +0.0f, with a separately rounded multiply and add (no FMA contraction).

namespace {

#if NMTDEC_HAVE_AVX2

inline void transpose8(__m256& r0, __m256& r1, __m256& r2, __m256& r3, __m256& r4,
                       __m256& r5, __m256& r6, __m256& r7) {
  const __m256 t0 = _mm256_unpacklo_ps(r0, r1);
  const __m256 t1 = _mm256_unpackhi_ps(r0, r1);
  const __m256 t2 = _mm256_unpacklo_ps(r2, r3);
  const __m256 t3 = _mm256_unpackhi_ps(r2, r3);
  const __m256 t4 = _mm256_unpacklo_ps(r4, r5);
  const __m256 t5 = _mm256_unpackhi_ps(r4, r5);
  const __m256 t6 = _mm256_unpacklo_ps(r6, r7);
  const __m256 t7 = _mm256_unpackhi_ps(r6, r7);
  const __m256 s0 = _mm256_shuffle_ps(t0, t2, _MM_SHUFFLE(1, 0, 1, 0));
  const __m256 s1 = _mm256_shuffle_ps(t0, t2, _MM_SHUFFLE(3, 2, 3, 2));
  const __m256 s2 = _mm256_shuffle_ps(t1, t3, _MM_SHUFFLE(1, 0, 1, 0));
  const __m256 s3 = _mm256_shuffle_ps(t1, t3, _MM_SHUFFLE(3, 2, 3, 2));
  const __m256 s4 = _mm256_shuffle_ps(t4, t6, _MM_SHUFFLE(1, 0, 1, 0));
  const __m256 s5 = _mm256_shuffle_ps(t4, t6, _MM_SHUFFLE(3, 2, 3, 2));
  const __m256 s6 = _mm256_shuffle_ps(t5, t7, _MM_SHUFFLE(1, 0, 1, 0));
  const __m256 s7 = _mm256_shuffle_ps(t5, t7, _MM_SHUFFLE(3, 2, 3, 2));
  r0 = _mm256_permute2f128_ps(s0, s4, 0x20);
  r1 = _mm256_permute2f128_ps(s1, s5, 0x20);
  r2 = _mm256_permute2f128_ps(s2, s6, 0x20);
  r3 = _mm256_permute2f128_ps(s3, s7, 0x20);
  r4 = _mm256_permute2f128_ps(s0, s4, 0x31);
  r5 = _mm256_permute2f128_ps(s1, s5, 0x31);
  r6 = _mm256_permute2f128_ps(s2, s6, 0x31);
  r7 = _mm256_permute2f128_ps(s3, s7, 0x31);
}

// Eight weight rows against NB inputs. Columns of the 8x8 weight block are
// produced by an in-register transpose so each lane walks its own row in order.
template <int NB>
void panel_f32(const float* w, std::size_t k, const float* x, float* y, std::size_t m) {
  __m256 acc[NB];
  for (int j = 0; j < NB; ++j) acc[j] = _mm256_setzero_ps();
  std::size_t t = 0;
  for (; t + 8 <= k; t += 8) {
    __m256 c0 = _mm256_loadu_ps(w + 0 * k + t);
    __m256 c1 = _mm256_loadu_ps(w + 1 * k + t);
    __m256 c2 = _mm256_loadu_ps(w + 2 * k + t);
    __m256 c3 = _mm256_loadu_ps(w + 3 * k + t);
    __m256 c4 = _mm256_loadu_ps(w + 4 * k + t);
    __m256 c5 = _mm256_loadu_ps(w + 5 * k + t);
    __m256 c6 = _mm256_loadu_ps(w + 6 * k + t);
    __m256 c7 = _mm256_loadu_ps(w + 7 * k + t);
    transpose8(c0, c1, c2, c3, c4, c5, c6, c7);
#pragma GCC unroll 8
    for (int j = 0; j < NB; ++j) {
      const float* xj = x + j * k + t;
      __m256 a = acc[j];
      a = _mm256_add_ps(a, _mm256_mul_ps(c0, _mm256_broadcast_ss(xj + 0)));
      a = _mm256_add_ps(a, _mm256_mul_ps(c1, _mm256_broadcast_ss(xj + 1)));
      a = _mm256_add_ps(a, _mm256_mul_ps(c2, _mm256_broadcast_ss(xj + 2)));
      a = _mm256_add_ps(a, _mm256_mul_ps(c3, _mm256_broadcast_ss(xj + 3)));
      a = _mm256_add_ps(a, _mm256_mul_ps(c4, _mm256_broadcast_ss(xj + 4)));
      a = _mm256_add_ps(a, _mm256_mul_ps(c5, _mm256_broadcast_ss(xj + 5)));
      a = _mm256_add_ps(a, _mm256_mul_ps(c6, _mm256_broadcast_ss(xj + 6)));
      a = _mm256_add_ps(a, _mm256_mul_ps(c7, _mm256_broadcast_ss(xj + 7)));
      acc[j] = a;
    }
  }
  for (; t < k; ++t) {
    const __m256 col = _mm256_setr_ps(w[0 * k + t], w[1 * k + t], w[2 * k + t], w[3 * k + t],
                                      w[4 * k + t], w[5 * k + t], w[6 * k + t], w[7 * k + t]);
    for (int j = 0; j < NB; ++j) {
      acc[j] = _mm256_add_ps(acc[j], _mm256_mul_ps(col, _mm256_broadcast_ss(x + j * k + t)));
    }
  }
  for (int j = 0; j < NB; ++j) _mm256_storeu_ps(y + j * m, acc[j]);
}

#endif

inline float dot_in_order(const float* w, const float* x, std::size_t k) {
  float acc = 0.0f;
  for (std::size_t t = 0; t < k; ++t) acc = acc + w[t] * x[t];
  return acc;
}

}  // namespace

void linear_f32(const Tensor& w, const float* x, std::size_t n, float* y) {
  const std::size_t m = w.rows();
  const std::size_t k = w.cols();
  const float* wd = w.data();
  std::size_t i0 = 0;
#if NMTDEC_HAVE_AVX2
  // Panel results are written to a scratch row so the output keeps its n×m layout.
  alignas(32) float scratch[4 * 8];
  for (; i0 + 8 <= m; i0 += 8) {
    const float* wp = wd + i0 * k;
    std::size_t j = 0;
    while (j < n) {
      const std::size_t nb = std::min<std::size_t>(4, n - j);
      const float* xj = x + j * k;
      switch (nb) {
        case 4: panel_f32<4>(wp, k, xj, scratch, 8); break;
        case 3: panel_f32<3>(wp, k, xj, scratch, 8); break;
        case 2: panel_f32<2>(wp, k, xj, scratch, 8); break;
        default: panel_f32<1>(wp, k, xj, scratch, 8); break;
      }
      for (std::size_t jj = 0; jj < nb; ++jj) {
        std::memcpy(y + (j + jj) * m + i0, scratch + jj * 8, 8 * sizeof(float));
      }
      j += nb;
    }
  }
#endif
  for (; i0 < m; ++i0) {
    for (std::size_t j = 0; j < n; ++j) y[j * m + i0] = dot_in_order(wd + i0 * k, x + j * k, k);
  }
}

Tensor linear_f32(const Tensor& w, const Tensor& x) {
  if (x.cols() != w.cols()) {
    throw ShapeError("linear_f32: weight " + shape_str(w) + " vs input " + shape_str(x));
  }
  Tensor y(x.rows(), w.rows());
  linear_f32(w, x.data(), x.rows(), y.data());
  return y;
}

Tensor gemm_f32(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("gemm_f32: inner dimensions differ, " + shape_str(a) + " · " + shape_str(b));
  }
  return linear_f32(a, b.transposed()).transposed();
}

// ---------------------------------------------------------------------------

void softmax_inplace(std::span<float> v) {
  if (v.empty()) throw ShapeError("softmax of empty vector");
  const float mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (float& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (float& x : v) x *= inv;
}

void log_softmax_inplace(std::span<float> v) {
  if (v.empty()) throw ShapeError("log_softmax of empty vector");
  const float mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (float x : v) sum += std::exp(static_cast<double>(x - mx));
  const float log_z = static_cast<float>(std::log(sum));
  for (float& x : v) x = (x - mx) - log_z;
}

Tensor softmax(const Tensor& v) {
  if (v.empty()) throw ShapeError("softmax of empty tensor");
  Tensor out = v;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

// ---------------------------------------------------------------------------

float sigmoid_exact(float x) { return 1.0f / (1.0f + std::exp(-x)); }
float tanh_exact(float x) { return std::tanh(x); }
float relu_clipped(float x) { return std::min(std::max(x, 0.0f), kReluClipMax); }

LookupTable::LookupTable(ActivationKind kind, float domain_lo, float domain_hi,
                         std::size_t entries)
    : kind_(kind), lo_(domain_lo), hi_(domain_hi) {
  if (kind == ActivationKind::kReluClipped) {
    throw std::invalid_argument("relu-clipped has no lookup table");
  }
  if (entries < 2 || !(domain_hi > domain_lo)) {
    throw std::invalid_argument("lookup table needs >= 2 entries and a non-empty domain");
  }
  step_ = (hi_ - lo_) / static_cast<float>(entries - 1);
  inv_step_ = 1.0f / step_;
  center_ = 0.5f * (lo_ + hi_);
  half_ = 0.5f * static_cast<float>(entries - 1);
  // Grid points mirror around the center, so odd functions get odd tables.
  const double step = (static_cast<double>(hi_) - lo_) / static_cast<double>(entries - 1);
  entries_.resize(entries);
  for (std::size_t i = 0; i < entries; ++i) {
    const double x = static_cast<double>(center_) + step * (static_cast<double>(i) - static_cast<double>(half_));
    entries_[i] = kind == ActivationKind::kSigmoid ? static_cast<float>(1.0 / (1.0 + std::exp(-x)))
                                                   : static_cast<float>(std::tanh(x));
  }
}

const LookupTable& LookupTable::standard(ActivationKind kind) {
  static const LookupTable sigmoid(ActivationKind::kSigmoid, -16.0f, 16.0f);
  static const LookupTable tanh(ActivationKind::kTanh, -8.0f, 8.0f);
  if (kind == ActivationKind::kSigmoid) return sigmoid;
  if (kind == ActivationKind::kTanh) return tanh;
  throw std::invalid_argument("relu-clipped has no lookup table");
}

float LookupTable::operator()(float x) const {
  x = std::min(std::max(x, lo_), hi_);
  const float pos = std::max((x - center_) * inv_step_ + half_, 0.0f);
  const int last = static_cast<int>(entries_.size()) - 2;
  const int i = std::min(static_cast<int>(pos), last);
  const float frac = pos - static_cast<float>(i);
  const float e0 = entries_[i];
  return e0 + frac * (entries_[i + 1] - e0);
}

void LookupTable::apply(std::span<float> v) const {
  std::size_t i = 0;
#if NMTDEC_HAVE_AVX2
  const __m256 lo = _mm256_set1_ps(lo_);
  const __m256 hi = _mm256_set1_ps(hi_);
  const __m256 inv = _mm256_set1_ps(inv_step_);
  const __m256 center = _mm256_set1_ps(center_);
  const __m256 half = _mm256_set1_ps(half_);
  const __m256 zero = _mm256_setzero_ps();
  const __m256i last = _mm256_set1_epi32(static_cast<int>(entries_.size()) - 2);
  const float* e = entries_.data();
  for (; i + 8 <= v.size(); i += 8) {
    __m256 x = _mm256_loadu_ps(v.data() + i);
    x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);
    const __m256 pos = _mm256_max_ps(_mm256_add_ps(_mm256_mul_ps(_mm256_sub_ps(x, center), inv), half), zero);
    const __m256i idx = _mm256_min_epi32(_mm256_cvttps_epi32(pos), last);
    const __m256 frac = _mm256_sub_ps(pos, _mm256_cvtepi32_ps(idx));
    const __m256 e0 = _mm256_i32gather_ps(e, idx, 4);
    const __m256 e1 = _mm256_i32gather_ps(e + 1, idx, 4);
    _mm256_storeu_ps(v.data() + i, _mm256_add_ps(e0, _mm256_mul_ps(frac, _mm256_sub_ps(e1, e0))));
  }
#endif
  for (; i < v.size(); ++i) v[i] = (*this)(v[i]);
}

void activate_inplace(ActivationKind kind, std::span<float> v, EvalMode mode) {
  if (kind == ActivationKind::kReluClipped) {
    for (float& x : v) x = relu_clipped(x);
    return;
  }
  if (mode == EvalMode::kLut) {
    LookupTable::standard(kind).apply(v);
    return;
  }
  if (kind == ActivationKind::kSigmoid) {
    for (float& x : v) x = sigmoid_exact(x);
  } else {
    for (float& x : v) x = tanh_exact(x);
  }
}

Tensor activate(ActivationKind kind, const Tensor& v, EvalMode mode) {
  Tensor out = v;
  activate_inplace(kind, out.values(), mode);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

NMTDEC_NO_VECTORIZE void binary_scalar(BinaryOp op, const float* a, const float* b, float* out,
                                       std::size_t n) {
  if (op == BinaryOp::kAdd) {
    NMTDEC_SCALAR_LOOP
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
  } else {
    NMTDEC_SCALAR_LOOP
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  }
}

NMTDEC_NO_VECTORIZE void axpy_scalar(float alpha, const float* x, float* out, std::size_t n) {
  NMTDEC_SCALAR_LOOP
  for (std::size_t i = 0; i < n; ++i) out[i] = out[i] + alpha * x[i];
}

}  // namespace

void vec_binary(BinaryOp op, std::span<const float> a, std::span<const float> b,
                std::span<float> out, VecPath path) {
  if (a.size() != b.size() || a.size() != out.size()) {
    throw ShapeError("vec_binary: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  std::size_t i = 0;
#if NMTDEC_HAVE_AVX2
  if (path == VecPath::kVector) {
    if (op == BinaryOp::kAdd) {
      for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out.data() + i, _mm256_add_ps(_mm256_loadu_ps(a.data() + i),
                                                       _mm256_loadu_ps(b.data() + i)));
      }
    } else {
      for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out.data() + i, _mm256_mul_ps(_mm256_loadu_ps(a.data() + i),
                                                       _mm256_loadu_ps(b.data() + i)));
      }
    }
  }
#endif
  binary_scalar(op, a.data() + i, b.data() + i, out.data() + i, n - i);
}

Tensor vec_binary(BinaryOp op, const Tensor& a, const Tensor& b, VecPath path) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("vec_binary: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  Tensor out(a.rows(), a.cols());
  vec_binary(op, a.values(), b.values(), out.values(), path);
  return out;
}

void axpy(float alpha, std::span<const float> x, std::span<float> out, VecPath path) {
  if (x.size() != out.size()) throw ShapeError("axpy: length mismatch");
  const std::size_t n = x.size();
  std::size_t i = 0;
#if NMTDEC_HAVE_AVX2
  if (path == VecPath::kVector) {
    const __m256 a = _mm256_set1_ps(alpha);
    for (; i + 8 <= n; i += 8) {
      const __m256 o = _mm256_loadu_ps(out.data() + i);
      _mm256_storeu_ps(out.data() + i,
                       _mm256_add_ps(o, _mm256_mul_ps(a, _mm256_loadu_ps(x.data() + i))));
    }
  }
#endif
  axpy_scalar(alpha, x.data() + i, out.data() + i, n - i);
}

}  // namespace nmtdec
