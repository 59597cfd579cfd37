#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "nmtdec/errors.hpp"
#include "nmtdec/tensor.hpp"
#include "oracle.hpp"

using namespace nmtdec;

namespace {

Tensor naive_gemm(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      float s = 0.0f;
      for (std::size_t t = 0; t < a.cols(); ++t) s += a(i, t) * b(t, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("gemm_f32 matches a naive triple loop bit for bit") {
  std::mt19937_64 rng(11);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {8, 8, 8}, {13, 37, 5}, {64, 129, 6}, {100, 512, 9}, {7, 3, 2}}) {
    const Tensor a = oracle::random_tensor(m, k, rng);
    const Tensor b = oracle::random_tensor(k, n, rng);
    CHECK(bitwise_equal(gemm_f32(a, b), naive_gemm(a, b)));
  }
}

TEST_CASE("gemm_f32 2x2 example") {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{5, 6}, {7, 8}});
  CHECK(bitwise_equal(gemm_f32(a, b), Tensor::from_rows({{19, 22}, {43, 50}})));
}

TEST_CASE("gemm_f32 rejects mismatched inner dimensions") {
  CHECK_THROWS_AS(gemm_f32(Tensor(2, 3), Tensor(4, 2)), ShapeError);
  CHECK_THROWS_AS(linear_f32(Tensor(2, 3), Tensor(1, 4)), ShapeError);
}

TEST_CASE("linear_f32 results do not depend on batch composition") {
  std::mt19937_64 rng(5);
  const Tensor w = oracle::random_tensor(40, 33, rng);
  const Tensor x = oracle::random_tensor(11, 33, rng);
  const Tensor all = linear_f32(w, x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const Tensor one = linear_f32(w, Tensor::row_vector(x.row(i)));
    CHECK(std::memcmp(one.data(), all.row(i).data(), w.rows() * sizeof(float)) == 0);
  }
  CHECK(bitwise_equal(all, gemm_f32(w, x.transposed()).transposed()));
}

TEST_CASE("softmax and log-softmax") {
  Tensor v = Tensor::from_rows({{1, 2, 3}, {-1000, 0, 1000}});
  const Tensor p = softmax(v);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0;
    for (float x : p.row(r)) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  std::vector<float> l = {1, 2, 3};
  log_softmax_inplace(l);
  CHECK(std::exp(l[0]) + std::exp(l[1]) + std::exp(l[2]) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(l[2] - l[1] == doctest::Approx(1.0f));
  std::vector<float> one = {5.0f};
  log_softmax_inplace(one);
  CHECK(one[0] == 0.0f);
}

TEST_CASE("exact activations") {
  CHECK(sigmoid_exact(0.0f) == 0.5f);
  CHECK(tanh_exact(0.0f) == 0.0f);
  CHECK(relu_clipped(12.3f) == 10.0f);
  CHECK(relu_clipped(-2.0f) == 0.0f);
  CHECK(relu_clipped(3.5f) == 3.5f);
  std::vector<float> v = {-1e9f, -3.0f, 0.0f, 7.0f, 1e9f};
  activate_inplace(ActivationKind::kReluClipped, v, EvalMode::kLut);
  for (float x : v) {
    CHECK(x >= 0.0f);
    CHECK(x <= 10.0f);
  }
}

TEST_CASE("lookup tables stay within 1e-3 on a dense grid and clamp outside") {
  for (ActivationKind kind : {ActivationKind::kSigmoid, ActivationKind::kTanh}) {
    const LookupTable& t = LookupTable::standard(kind);
    double worst = 0.0;
    for (double x = -20.0; x <= 20.0; x += 1e-4) {
      const float xf = static_cast<float>(x);
      const float exact = kind == ActivationKind::kSigmoid ? sigmoid_exact(xf) : tanh_exact(xf);
      worst = std::max(worst, static_cast<double>(std::abs(t(xf) - exact)));
    }
    CHECK(worst <= 1e-3);
  }
  const LookupTable& s = LookupTable::standard(ActivationKind::kSigmoid);
  CHECK(s(0.0f) == doctest::Approx(0.5f).epsilon(1e-6));
  CHECK(s(100.0f) == s(s.domain_hi()));
  CHECK(s(-100.0f) == s(s.domain_lo()));
}

TEST_CASE("table lookup is the same on the vector and scalar paths") {
  std::mt19937_64 rng(9);
  for (ActivationKind kind : {ActivationKind::kSigmoid, ActivationKind::kTanh}) {
    const LookupTable& t = LookupTable::standard(kind);
    oracle::Vec v = oracle::random_vec(1003, rng, -20.0f, 20.0f);
    oracle::Vec w = v;
    t.apply(v);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(v[i] == t(w[i]));
  }
}

TEST_CASE("vector and scalar elementwise paths agree bitwise") {
  std::mt19937_64 rng(3);
  const oracle::Vec a = oracle::random_vec(77, rng), b = oracle::random_vec(77, rng);
  for (BinaryOp op : {BinaryOp::kAdd, BinaryOp::kMul}) {
    oracle::Vec s(77), v(77);
    vec_binary(op, a, b, s, VecPath::kScalar);
    vec_binary(op, a, b, v, VecPath::kVector);
    CHECK(std::memcmp(s.data(), v.data(), 77 * sizeof(float)) == 0);
    for (std::size_t i = 0; i < 77; ++i) CHECK(s[i] == (op == BinaryOp::kAdd ? a[i] + b[i] : a[i] * b[i]));
  }
  oracle::Vec s = b, v = b;
  axpy(0.37f, a, s, VecPath::kScalar);
  axpy(0.37f, a, v, VecPath::kVector);
  CHECK(std::memcmp(s.data(), v.data(), 77 * sizeof(float)) == 0);
  CHECK(s[5] == b[5] + 0.37f * a[5]);
  oracle::Vec out(3);
  CHECK_THROWS_AS(vec_binary(BinaryOp::kAdd, a, b, out, VecPath::kScalar), ShapeError);
}

TEST_CASE("tensor helpers") {
  const Tensor t = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<int32_t> ids = {2, 0, 2};
  const Tensor g = t.gather_rows(ids);
  CHECK(bitwise_equal(g, Tensor::from_rows({{5, 6}, {1, 2}, {5, 6}})));
  CHECK(bitwise_equal(t.transposed(), Tensor::from_rows({{1, 3, 5}, {2, 4, 6}})));
  const Tensor* parts[] = {&t, &g};
  CHECK(Tensor::vstack(parts).rows() == 6);
  CHECK_THROWS_AS(Tensor(2, 2, std::vector<float>(3)), ShapeError);
  const std::vector<int32_t> bad = {3};
  CHECK_THROWS(t.gather_rows(bad));
  CHECK_FALSE(bitwise_equal(Tensor::from_rows({{0.0f}}), Tensor::from_rows({{-0.0f}})));
}
