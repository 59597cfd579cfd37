#pragma once

// Single source of truth for tensor names, shapes and serialization order.

#include <string>
#include <type_traits>

#include "nmtdec/model.hpp"

namespace nmtdec::detail {

enum class SlotKind { kEmbedding, kWeight, kBias };

template <class M>
using TensorRef = std::conditional_t<std::is_const_v<M>, const Tensor&, Tensor&>;

template <class G, class F>
void visit_gru(G& g, const std::string& prefix, std::size_t hidden, std::size_t input,
               std::size_t context, F& f) {
  f(prefix + ".W_u", g.W_u, hidden, hidden, SlotKind::kWeight);
  f(prefix + ".W_r", g.W_r, hidden, hidden, SlotKind::kWeight);
  f(prefix + ".W_h", g.W_h, hidden, hidden, SlotKind::kWeight);
  f(prefix + ".V_u", g.V_u, hidden, input, SlotKind::kWeight);
  f(prefix + ".V_r", g.V_r, hidden, input, SlotKind::kWeight);
  f(prefix + ".V_h", g.V_h, hidden, input, SlotKind::kWeight);
  if (context > 0) {
    f(prefix + ".U_u", g.U_u, hidden, context, SlotKind::kWeight);
    f(prefix + ".U_r", g.U_r, hidden, context, SlotKind::kWeight);
    f(prefix + ".U_h", g.U_h, hidden, context, SlotKind::kWeight);
  }
  f(prefix + ".b_u", g.b_u, 1, hidden, SlotKind::kBias);
  f(prefix + ".b_r", g.b_r, 1, hidden, SlotKind::kBias);
  f(prefix + ".b_h", g.b_h, 1, hidden, SlotKind::kBias);
}

// f(name, tensor, expected_rows, expected_cols, kind). Containers in `m` must
// already be sized for `spec` (see size_containers).
template <class M, class F>
void visit_slots(M& m, const ModelSpec& spec, F&& f) {
  const std::size_t e = spec.embed_dim;
  const std::size_t hd = spec.src_direction_hidden();
  const std::size_t s = spec.src_hidden;
  const std::size_t r = spec.trg_hidden;
  const std::size_t att = r;
  f(std::string("src.emb"), m.src_embeddings, spec.src_vocab_size, e, SlotKind::kEmbedding);
  f(std::string("trg.emb"), m.trg_embeddings, spec.trg_vocab_size, e, SlotKind::kEmbedding);
  for (int l = 0; l < spec.src_layers; ++l) {
    const std::size_t in = l == 0 ? e : s;
    const std::string p = "src.l" + std::to_string(l + 1);
    visit_gru(m.src_fwd.at(l), p + ".fwd", hd, in, 0, f);
    visit_gru(m.src_bwd.at(l), p + ".bwd", hd, in, 0, f);
  }
  f(std::string("trg.att.W_a"), m.attention.W_a, att, r, SlotKind::kWeight);
  f(std::string("trg.att.V_a"), m.attention.V_a, att, e, SlotKind::kWeight);
  f(std::string("trg.att.U_a"), m.attention.U_a, att, s, SlotKind::kWeight);
  visit_gru(m.trg_gru, "trg.gru", r, e, s, f);
  std::size_t prev = r;
  for (int l = 1; l <= spec.fc_layers; ++l) {
    const std::size_t d = spec.fc_dim(l);
    f("fc." + std::to_string(l) + ".W", m.fc.at(l - 1), d, prev, SlotKind::kWeight);
    prev = d;
  }
  const std::size_t top = spec.top_width();
  if (spec.top_layer == TopLayer::kFcTanh) {
    f(std::string("top.W"), m.top_w, top, prev, SlotKind::kWeight);
  } else {
    visit_gru(m.top_gru, "top.gru", top, prev, 0, f);
  }
  f(std::string("out.V"), m.output, spec.trg_vocab_size, top, SlotKind::kWeight);
}

inline void size_containers(Model& m, const ModelSpec& spec) {
  m.src_fwd.assign(spec.src_layers, {});
  m.src_bwd.assign(spec.src_layers, {});
  m.fc.assign(spec.fc_layers, {});
}

}  // namespace nmtdec::detail
