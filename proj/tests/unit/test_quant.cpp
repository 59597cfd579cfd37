#include <cmath>
#include <random>

#include "doctest.h"
#include "nmtdec/errors.hpp"
#include "nmtdec/quant.hpp"
#include "oracle.hpp"

using namespace nmtdec;

TEST_CASE("weight quantization examples") {
  const Tensor w = Tensor::from_rows({{1.0f, -1.0f, 0.5f, 1.7f, -3.0f, 0.0f}});
  const QuantMatrix q = quantize_weights(w, 10);
  CHECK(q.at(0, 0) == 1024);
  CHECK(q.at(0, 1) == -1024);
  CHECK(q.at(0, 2) == 512);
  CHECK(q.at(0, 3) == 1024);
  CHECK(q.at(0, 4) == -1024);
  CHECK(q.at(0, 5) == 0);
  CHECK(q.layout_tag() == kLayoutPanel8Pair2);
  // Ties round to even.
  const QuantMatrix t = quantize_weights(Tensor::from_rows({{0.5f / 1024, 1.5f / 1024}}), 10);
  CHECK(t.at(0, 0) == 0);
  CHECK(t.at(0, 1) == 2);
}

TEST_CASE("weight roundtrip error is at most half a step") {
  std::mt19937_64 rng(1);
  const Tensor w = oracle::random_tensor(37, 29, rng, -1.5f, 1.5f);
  for (int fb : {8, 10, 14}) {
    const Tensor d = quantize_weights(w, fb).dequantize();
    double worst = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float clipped = std::clamp(w.data()[i], -1.0f, 1.0f);
      worst = std::max(worst, static_cast<double>(std::abs(d.data()[i] - clipped)));
    }
    CHECK(worst <= std::ldexp(1.0, -(fb + 1)));
  }
  CHECK_THROWS_AS(quantize_weights(w, 7), InputError);
  CHECK_THROWS_AS(quantize_weights(w, 15), InputError);
}

TEST_CASE("activation quantization examples and bounds") {
  const Tensor v = Tensor::from_rows({{10.0f, 0.0f, 20.0f, -20.0f, 16.0f}});
  const QuantBatch q = quantize_activations(v, 10);
  CHECK(q.at(0, 0) == 10240);
  CHECK(q.at(0, 1) == 0);
  CHECK(q.at(0, 2) == 16384);
  CHECK(q.at(0, 3) == -16384);
  const QuantBatch q11 = quantize_activations(v, 11);
  CHECK(q11.at(0, 4) == 32767);
  CHECK(q11.at(0, 3) == -32768);

  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor(5, 41, rng, -16.0f, 16.0f);
  const Tensor d = quantize_activations(x, 10).dequantize();
  CHECK(max_abs_diff(x, d) <= std::ldexp(1.0f, -11));
  CHECK_THROWS_AS(quantize_activations(x, 12), InputError);
}

TEST_CASE("linear_i16 equals exact integer arithmetic") {
  std::mt19937_64 rng(4);
  for (auto [m, k, n] : {std::tuple{8, 16, 1}, {13, 31, 3}, {64, 100, 8}, {21, 7, 11}}) {
    const QuantMatrix w = quantize_weights(oracle::random_tensor(m, k, rng));
    const QuantBatch x = quantize_activations(oracle::random_tensor(n, k, rng, -4.0f, 4.0f));
    const Tensor y = linear_i16(w, x);
    const Tensor g = gemm_i16(w, x);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) {
        int64_t acc = 0;
        for (int t = 0; t < k; ++t) acc += int64_t{w.at(i, t)} * x.at(j, t);
        const float expect = static_cast<float>(static_cast<int32_t>(acc)) * std::ldexp(1.0f, -20);
        CHECK(y(j, i) == expect);
        CHECK(g(i, j) == expect);
      }
  }
}

TEST_CASE("gemm_i16 stays within 1% of the float product") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor w = oracle::random_tensor(512, 512, rng, -0.1f, 0.1f);
    const Tensor x = oracle::random_tensor(6, 512, rng);
    const Tensor exact = linear_f32(w, x);
    const Tensor approx = linear_i16(quantize_weights(w), quantize_activations(x));
    float norm = 0.0f;
    for (float v : exact.values()) norm = std::max(norm, std::abs(v));
    CHECK(max_abs_diff(exact, approx) <= 0.01f * norm);
  }
}

TEST_CASE("packed layout helpers") {
  std::mt19937_64 rng(6);
  const Tensor w = oracle::random_tensor(19, 9, rng);
  const QuantMatrix q = quantize_weights(w);
  CHECK(q.payload().size() == QuantMatrix::packed_size(19, 9));
  const QuantMatrix back = QuantMatrix::from_packed(19, 9, q.frac_bits(), q.layout_tag(),
                                                    std::vector<int16_t>(q.payload().begin(), q.payload().end()));
  CHECK(back == q);
  CHECK_THROWS_AS(QuantMatrix::from_packed(19, 9, 10, 0x1234, std::vector<int16_t>(q.payload().begin(), q.payload().end())),
                  FormatError);
  CHECK_THROWS_AS(QuantMatrix::from_packed(19, 9, 10, kLayoutPanel8Pair2, std::vector<int16_t>(3)), FormatError);

  const std::vector<int32_t> ids = {18, 0, 5};
  const QuantMatrix g = q.gather_rows(ids);
  CHECK(g == quantize_weights(w.gather_rows(ids)));
  const QuantMatrix* parts[] = {&q, &g};
  const Tensor wg = w.gather_rows(ids);
  const Tensor* fp[] = {&w, &wg};
  CHECK(QuantMatrix::vstack(parts) == quantize_weights(Tensor::vstack(fp)));
}

TEST_CASE("overflow detection") {
  const Tensor w(1, 300, std::vector<float>(300, 1.0f));
  const Tensor x(1, 300, std::vector<float>(300, 16.0f));
  CHECK(i16_accumulator_overflows(quantize_weights(w, 10), quantize_activations(x, 10)));
  const Tensor w100(1, 100, std::vector<float>(100, 1.0f));
  const Tensor x100(1, 100, std::vector<float>(100, 16.0f));
  CHECK_FALSE(i16_accumulator_overflows(quantize_weights(w100, 10), quantize_activations(x100, 10)));
}
