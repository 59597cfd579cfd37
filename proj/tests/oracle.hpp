#pragma once

// Slow reference implementations written straight from the network
// equations: one vector at a time, no fused stacks, no tables, no batching.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "nmtdec/model.hpp"

namespace oracle {

using Vec = std::vector<float>;
using nmtdec::Tensor;

inline float dot(std::span<const float> w, const Vec& x) {
  float s = 0.0f;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
  return s;
}

inline Vec matvec(const Tensor& w, const Vec& x) {
  Vec y(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) y[i] = dot(w.row(i), x);
  return y;
}

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

inline Vec row(const Tensor& t, std::size_t r) { return Vec(t.row(r).begin(), t.row(r).end()); }

// u = σ(W_u h + V_u x [+ U_u c] + b_u), r likewise,
// ĥ = tanh(r ⊙ (W_h h) + V_h x [+ U_h c] + b_h), h' = u ⊙ h + (1 - u) ⊙ ĥ.
inline Vec gru(const nmtdec::GruWeights& g, const Vec& h, const Vec& x, const Vec* c = nullptr,
               bool sigmoid_candidate = false) {
  const Vec wu = matvec(g.W_u, h), wr = matvec(g.W_r, h), wh = matvec(g.W_h, h);
  const Vec vu = matvec(g.V_u, x), vr = matvec(g.V_r, x), vh = matvec(g.V_h, x);
  Vec uu(h.size(), 0.0f), ur(h.size(), 0.0f), uh(h.size(), 0.0f);
  if (c) {
    uu = matvec(g.U_u, *c);
    ur = matvec(g.U_r, *c);
    uh = matvec(g.U_h, *c);
  }
  Vec out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const float u = sigmoid(wu[i] + vu[i] + uu[i] + g.b_u(0, i));
    const float r = sigmoid(wr[i] + vr[i] + ur[i] + g.b_r(0, i));
    const float pre = r * wh[i] + vh[i] + uh[i] + g.b_h(0, i);
    const float cand = sigmoid_candidate ? sigmoid(pre) : std::tanh(pre);
    out[i] = u * h[i] + (1.0f - u) * cand;
  }
  return out;
}

// Annotations s_j, one per source position.
inline std::vector<Vec> encode(const nmtdec::Model& m, std::span<const int32_t> src) {
  std::vector<Vec> x;
  for (int32_t id : src) x.push_back(row(m.src_embeddings, id));
  const bool sig = m.spec.candidate_activation == nmtdec::CandidateActivation::kSigmoid;
  for (std::size_t l = 0; l < m.src_fwd.size(); ++l) {
    const std::size_t hd = m.src_fwd[l].hidden();
    std::vector<Vec> fwd(x.size()), bwd(x.size());
    Vec h(hd, 0.0f);
    for (std::size_t j = 0; j < x.size(); ++j) fwd[j] = h = gru(m.src_fwd[l], h, x[j], nullptr, sig);
    h.assign(hd, 0.0f);
    for (std::size_t j = x.size(); j-- > 0;) bwd[j] = h = gru(m.src_bwd[l], h, x[j], nullptr, sig);
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] = fwd[j];
      x[j].insert(x[j].end(), bwd[j].begin(), bwd[j].end());
    }
  }
  return x;
}

struct Attention {
  Vec alpha;
  Vec context;
};

// d_j = tanh(W_a h + V_a x) · tanh(U_a s_j), α = softmax(d), c = Σ α_j s_j.
inline Attention attend(const nmtdec::Model& m, const Vec& h, const Vec& x, const std::vector<Vec>& s) {
  const Vec wa = matvec(m.attention.W_a, h), va = matvec(m.attention.V_a, x);
  Vec q(wa.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::tanh(wa[i] + va[i]);
  Vec d(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    Vec key = matvec(m.attention.U_a, s[j]);
    for (float& k : key) k = std::tanh(k);
    d[j] = dot(key, q);
  }
  const float mx = *std::max_element(d.begin(), d.end());
  double z = 0.0;
  for (float v : d) z += std::exp(static_cast<double>(v - mx));
  Attention a;
  for (float v : d) a.alpha.push_back(static_cast<float>(std::exp(static_cast<double>(v - mx)) / z));
  a.context.assign(s.front().size(), 0.0f);
  for (std::size_t j = 0; j < s.size(); ++j)
    for (std::size_t i = 0; i < a.context.size(); ++i) a.context[i] += a.alpha[j] * s[j][i];
  return a;
}

inline float relu10(float v) { return std::min(std::max(v, 0.0f), 10.0f); }

// h^1 = relu(W^1 h_B); h^l = relu(W^l h^{l-1} [+ h^{l-2} for odd l ≥ 3]);
// top = tanh(W^T h^N).
inline Vec fc_stack(const nmtdec::Model& m, const Vec& hb, std::vector<Vec>* layers = nullptr) {
  std::vector<Vec> h{hb};
  for (std::size_t l = 1; l <= m.fc.size(); ++l) {
    Vec y = matvec(m.fc[l - 1], h[l - 1]);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (l >= 3 && l % 2 == 1) y[i] = y[i] + h[l - 2][i];
      y[i] = relu10(y[i]);
    }
    h.push_back(std::move(y));
  }
  if (layers) *layers = h;
  Vec top = matvec(m.top_w, h.back());
  for (float& v : top) v = std::tanh(v);
  return top;
}

// log-softmax of V h_T restricted to the candidate ids.
inline std::vector<double> output_logprobs(const nmtdec::Model& m, const Vec& top,
                                           std::span<const int32_t> cands) {
  std::vector<double> y;
  for (int32_t c : cands) y.push_back(dot(m.output.row(c), top));
  const double mx = *std::max_element(y.begin(), y.end());
  double z = 0.0;
  for (double v : y) z += std::exp(v - mx);
  for (double& v : y) v = v - mx - std::log(z);
  return y;
}

/// Incremental decoder state for one hypothesis (fc-tanh top layer).
struct DecoderState {
  Vec h;
  int32_t prev = nmtdec::kBosId;
};

inline std::vector<double> step(const nmtdec::Model& m, const std::vector<Vec>& s, DecoderState& st,
                                std::span<const int32_t> cands) {
  const Vec x = row(m.trg_embeddings, st.prev);
  const Attention a = attend(m, st.h, x, s);
  st.h = gru(m.trg_gru, st.h, x, &a.context);
  return output_logprobs(m, fc_stack(m, st.h), cands);
}

// Best complete sequence of length ≤ max_len by exhaustive enumeration.
struct Best {
  std::vector<int32_t> tokens;
  double score = -INFINITY;
};

inline void enumerate(const nmtdec::Model& m, const std::vector<Vec>& s, const DecoderState& st,
                      std::span<const int32_t> cands, std::vector<int32_t>& prefix, double score,
                      int max_len, Best& best) {
  if (static_cast<int>(prefix.size()) == max_len) return;
  DecoderState next = st;
  const std::vector<double> lp = step(m, s, next, cands);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double sc = score + lp[i];
    prefix.push_back(cands[i]);
    if (cands[i] == nmtdec::kEosId) {
      if (sc > best.score || (sc == best.score && prefix < best.tokens)) best = {prefix, sc};
    } else {
      DecoderState child = next;
      child.prev = cands[i];
      enumerate(m, s, child, cands, prefix, sc, max_len, best);
    }
    prefix.pop_back();
  }
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor t(rows, cols);
  for (float& v : t.values()) v = d(rng);
  return t;
}

inline Vec random_vec(std::size_t n, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  Vec v(n);
  for (float& x : v) x = d(rng);
  return v;
}

inline nmtdec::ModelSpec small_spec() {
  nmtdec::ModelSpec s;
  s.src_vocab_size = 60;
  s.trg_vocab_size = 50;
  s.embed_dim = 12;
  s.src_layers = 2;
  s.src_hidden = 16;
  s.trg_hidden = 20;
  s.fc_layers = 3;
  s.fc_dims = {20};
  s.precompute_k = 30;
  return s;
}

inline nmtdec::ModelSpec suite_spec() {
  nmtdec::ModelSpec s;
  s.src_vocab_size = 1000;
  s.trg_vocab_size = 1000;
  s.embed_dim = 128;
  s.src_layers = 3;
  s.src_hidden = 128;
  s.trg_hidden = 256;
  s.fc_layers = 3;
  s.fc_dims = {192};
  s.top_dim = 256;
  return s;
}

}  // namespace oracle
