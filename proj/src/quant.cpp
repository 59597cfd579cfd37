#include "nmtdec/quant.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "nmtdec/errors.hpp"
#include "simd.hpp"

namespace nmtdec {

namespace {

std::size_t round_up(std::size_t v, std::size_t to) { return (v + to - 1) / to * to; }

int16_t to_fixed(float v, float clip, float scale) {
  const float c = std::min(std::max(v, -clip), clip);
  // nearbyint honours the default rounding mode: nearest, ties to even.
  const float r = std::nearbyint(c * scale);
  return static_cast<int16_t>(std::min(r, 32767.0f));
}

}  // namespace

QuantMatrix::QuantMatrix(std::size_t rows, std::size_t cols, int frac_bits)
    : rows_(rows),
      cols_(cols),
      padded_cols_(round_up(cols, 2)),
      frac_bits_(frac_bits),
      data_(packed_size(rows, cols), 0) {}

std::size_t QuantMatrix::packed_size(std::size_t rows, std::size_t cols) {
  return round_up(rows, kPanelRows) * round_up(cols, 2);
}

QuantMatrix QuantMatrix::from_packed(std::size_t rows, std::size_t cols, int frac_bits,
                                     uint32_t layout_tag, std::vector<int16_t> payload) {
  if (layout_tag != kLayoutPanel8Pair2) {
    throw FormatError("unknown quantized layout tag " + std::to_string(layout_tag));
  }
  if (frac_bits < 8 || frac_bits > 14) {
    throw FormatError("weight fractional bits " + std::to_string(frac_bits) + " outside [8, 14]");
  }
  if (payload.size() != packed_size(rows, cols)) {
    throw FormatError("quantized payload has " + std::to_string(payload.size()) +
                      " values, layout needs " + std::to_string(packed_size(rows, cols)));
  }
  QuantMatrix q(rows, cols, frac_bits);
  q.data_ = std::move(payload);
  return q;
}

Tensor QuantMatrix::dequantize() const {
  Tensor out(rows_, cols_);
  const float inv = std::ldexp(1.0f, -frac_bits_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(r, c) = static_cast<float>(at(r, c)) * inv;
  return out;
}

QuantMatrix QuantMatrix::gather_rows(std::span<const int32_t> ids) const {
  QuantMatrix out(ids.size(), cols_, frac_bits_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows_) {
      throw InputError("row id " + std::to_string(ids[i]) + " out of range");
    }
    for (std::size_t c = 0; c < cols_; ++c) out.data_[out.index(i, c)] = at(ids[i], c);
  }
  return out;
}

QuantMatrix QuantMatrix::vstack(std::span<const QuantMatrix* const> parts) {
  if (parts.empty()) return {};
  std::size_t rows = 0;
  const std::size_t cols = parts.front()->cols();
  const int fb = parts.front()->frac_bits();
  for (const QuantMatrix* p : parts) {
    if (p->cols() != cols || p->frac_bits() != fb) {
      throw ShapeError("QuantMatrix::vstack: parts differ in width or scale");
    }
    rows += p->rows();
  }
  QuantMatrix out(rows, cols, fb);
  std::size_t r0 = 0;
  for (const QuantMatrix* p : parts) {
    for (std::size_t r = 0; r < p->rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) out.data_[out.index(r0 + r, c)] = p->at(r, c);
    r0 += p->rows();
  }
  return out;
}

QuantMatrix quantize_weights(const Tensor& w, int frac_bits_w) {
  if (frac_bits_w < 8 || frac_bits_w > 14) {
    throw InputError("frac_bits_w must be in [8, 14], got " + std::to_string(frac_bits_w));
  }
  QuantMatrix q(w.rows(), w.cols(), frac_bits_w);
  const float scale = std::ldexp(1.0f, frac_bits_w);
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c)
      q.data_[q.index(r, c)] = to_fixed(w(r, c), kWeightClip, scale);
  return q;
}

void QuantBatch::assign(const float* x, std::size_t rows, std::size_t cols, int frac_bits) {
  if (frac_bits < 8 || frac_bits > 11) {
    throw InputError("frac_bits_a must be in [8, 11], got " + std::to_string(frac_bits));
  }
  rows_ = rows;
  cols_ = cols;
  stride_ = round_up(cols, 2);
  frac_bits_ = frac_bits;
  data_.resize(rows * stride_);
  const float scale = std::ldexp(1.0f, frac_bits);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* src = x + r * cols;
    int16_t* dst = data_.data() + r * stride_;
    std::size_t c = 0;
#if NMTDEC_HAVE_AVX2
    const __m256 lo = _mm256_set1_ps(-kActivationClip);
    const __m256 hi = _mm256_set1_ps(kActivationClip);
    const __m256 sc = _mm256_set1_ps(scale);
    for (; c + 16 <= cols; c += 16) {
      const __m256 a = _mm256_min_ps(_mm256_max_ps(_mm256_loadu_ps(src + c), lo), hi);
      const __m256 b = _mm256_min_ps(_mm256_max_ps(_mm256_loadu_ps(src + c + 8), lo), hi);
      // cvtps rounds with MXCSR (nearest even); packs saturates like to_fixed.
      const __m256i ia = _mm256_cvtps_epi32(_mm256_mul_ps(a, sc));
      const __m256i ib = _mm256_cvtps_epi32(_mm256_mul_ps(b, sc));
      const __m256i packed = _mm256_permute4x64_epi64(_mm256_packs_epi32(ia, ib), 0xD8);
      _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + c), packed);
    }
#endif
    for (; c < cols; ++c) dst[c] = to_fixed(src[c], kActivationClip, scale);
    if (stride_ != cols) dst[cols] = 0;
  }
}

Tensor QuantBatch::dequantize() const {
  Tensor out(rows_, cols_);
  const float inv = std::ldexp(1.0f, -frac_bits_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(r, c) = static_cast<float>(at(r, c)) * inv;
  return out;
}

QuantBatch quantize_activations(const Tensor& v, int frac_bits_a) {
  QuantBatch b;
  b.assign(v.data(), v.rows(), v.cols(), frac_bits_a);
  return b;
}

// ---------------------------------------------------------------------------

namespace {

#if NMTDEC_HAVE_AVX2

template <int NB>
void panel_i16(const int16_t* panel, std::size_t pairs, const QuantBatch& x, std::size_t j0,
               int32_t* out /* NB × 8 */) {
  __m256i acc[NB];
  const int32_t* xr[NB];
  for (int j = 0; j < NB; ++j) {
    acc[j] = _mm256_setzero_si256();
    xr[j] = reinterpret_cast<const int32_t*>(x.row(j0 + j));
  }
  const __m256i* wp = reinterpret_cast<const __m256i*>(panel);
  for (std::size_t q = 0; q < pairs; ++q) {
    const __m256i w = _mm256_loadu_si256(wp + q);
#pragma GCC unroll 8
    for (int j = 0; j < NB; ++j) {
      int32_t pair;
      std::memcpy(&pair, xr[j] + q, sizeof(pair));
      acc[j] = _mm256_add_epi32(acc[j], _mm256_madd_epi16(w, _mm256_set1_epi32(pair)));
    }
  }
  for (int j = 0; j < NB; ++j) _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + 8 * j), acc[j]);
}

#endif

[[maybe_unused]] void panel_i16_scalar(const int16_t* panel, std::size_t pairs, const QuantBatch& x, std::size_t j,
                      int32_t* out /* 8 */) {
  uint32_t acc[kPanelRows] = {};
  const int16_t* xr = x.row(j);
  for (std::size_t q = 0; q < pairs; ++q) {
    const int16_t* wq = panel + q * 2 * kPanelRows;
    for (std::size_t r = 0; r < kPanelRows; ++r) {
      const int32_t pair = static_cast<int32_t>(wq[2 * r]) * xr[2 * q] +
                           static_cast<int32_t>(wq[2 * r + 1]) * xr[2 * q + 1];
      acc[r] += static_cast<uint32_t>(pair);
    }
  }
  for (std::size_t r = 0; r < kPanelRows; ++r) out[r] = static_cast<int32_t>(acc[r]);
}

}  // namespace

bool i16_accumulator_overflows(const QuantMatrix& w, const QuantBatch& x) {
  constexpr int64_t lo = std::numeric_limits<int32_t>::min();
  constexpr int64_t hi = std::numeric_limits<int32_t>::max();
  for (std::size_t j = 0; j < x.rows(); ++j) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      int64_t acc = 0;
      for (std::size_t t = 0; t < w.cols(); ++t) {
        acc += static_cast<int64_t>(w.at(i, t)) * x.at(j, t);
      }
      if (acc < lo || acc > hi) return true;
    }
  }
  return false;
}

void linear_i16(const QuantMatrix& w, const QuantBatch& x, float* y) {
  if (w.cols() != x.cols()) {
    throw ShapeError("linear_i16: weight has " + std::to_string(w.cols()) + " columns, input has " +
                     std::to_string(x.cols()));
  }
  assert(!i16_accumulator_overflows(w, x));
  const std::size_t m = w.rows();
  const std::size_t n = x.rows();
  const std::size_t pairs = w.padded_cols() / 2;
  const std::size_t panel_stride = kPanelRows * w.padded_cols();
  const float scale = std::ldexp(1.0f, -(w.frac_bits() + x.frac_bits()));
  alignas(32) int32_t acc[8 * kPanelRows];
  for (std::size_t p = 0; p * kPanelRows < m; ++p) {
    const int16_t* panel = w.payload().data() + p * panel_stride;
    const std::size_t i0 = p * kPanelRows;
    const std::size_t rows_here = std::min(kPanelRows, m - i0);
    std::size_t j = 0;
    while (j < n) {
      std::size_t nb = std::min<std::size_t>(8, n - j);
#if NMTDEC_HAVE_AVX2
      switch (nb) {
        case 8: panel_i16<8>(panel, pairs, x, j, acc); break;
        case 7: panel_i16<7>(panel, pairs, x, j, acc); break;
        case 6: panel_i16<6>(panel, pairs, x, j, acc); break;
        case 5: panel_i16<5>(panel, pairs, x, j, acc); break;
        case 4: panel_i16<4>(panel, pairs, x, j, acc); break;
        case 3: panel_i16<3>(panel, pairs, x, j, acc); break;
        case 2: panel_i16<2>(panel, pairs, x, j, acc); break;
        default: panel_i16<1>(panel, pairs, x, j, acc); break;
      }
#else
      for (std::size_t jj = 0; jj < nb; ++jj) panel_i16_scalar(panel, pairs, x, j + jj, acc + 8 * jj);
#endif
      for (std::size_t jj = 0; jj < nb; ++jj) {
        float* yr = y + (j + jj) * m + i0;
        for (std::size_t r = 0; r < rows_here; ++r) yr[r] = static_cast<float>(acc[8 * jj + r]) * scale;
      }
      j += nb;
    }
  }
}

Tensor linear_i16(const QuantMatrix& w, const QuantBatch& x) {
  Tensor y(x.rows(), w.rows());
  linear_i16(w, x, y.data());
  return y;
}

Tensor gemm_i16(const QuantMatrix& w, const QuantBatch& x) { return linear_i16(w, x).transposed(); }

}  // namespace nmtdec
