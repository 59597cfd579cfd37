#include "nmtdec/compute.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "nmtdec/errors.hpp"
#include "simd.hpp"

namespace nmtdec {

// ---------------------------------------------------------------------------
// StepFlags

StepFlags StepFlags::parse(std::string_view opts) {
  if (opts == "all") return all();
  if (opts == "none" || opts.empty()) return none();
  StepFlags f;
  while (!opts.empty()) {
    const auto comma = opts.find(',');
    const std::string_view item = opts.substr(0, comma);
    if (item == "quant16") f.quant16 = true;
    else if (item == "preemb") f.precomputed_embeddings = true;
    else if (item == "preatt") f.precomputed_attention = true;
    else if (item == "lut") f.lut_activations = true;
    else if (item == "merge") f.merge_recurrent = true;
    else throw InputError("unknown optimization '" + std::string(item) + "'");
    if (comma == std::string_view::npos) break;
    opts = opts.substr(comma + 1);
  }
  return f;
}

std::string StepFlags::to_string() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ',';
    s += name;
  };
  add(quant16, "quant16");
  add(precomputed_embeddings, "preemb");
  add(precomputed_attention, "preatt");
  add(lut_activations, "lut");
  add(merge_recurrent, "merge");
  return s.empty() ? "none" : s;
}

// ---------------------------------------------------------------------------
// Linear

namespace detail {

void Linear::apply(const float* x, std::size_t n, float* y, bool quant16, int frac_bits_a) const {
  if (n == 0) return;
  if (quant16) {
    thread_local QuantBatch qx;
    qx.assign(x, n, in_dim(), frac_bits_a);
    linear_i16(q, qx, y);
  } else {
    linear_f32(w, x, n, y);
  }
}

Tensor Linear::apply(const Tensor& x, bool quant16, int frac_bits_a) const {
  if (x.cols() != in_dim()) {
    throw ShapeError("linear layer expects " + std::to_string(in_dim()) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  Tensor y(x.rows(), out_dim());
  apply(x.data(), x.rows(), y.data(), quant16, frac_bits_a);
  return y;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise helpers

namespace {

void add_into(std::span<float> acc, std::span<const float> v, VecPath path) {
  vec_binary(BinaryOp::kAdd, acc, v, acc, path);
}

NMTDEC_NO_VECTORIZE void blend_scalar(const float* u, const float* h, const float* c, float* out,
                                      std::size_t n) {
  NMTDEC_SCALAR_LOOP
  for (std::size_t i = 0; i < n; ++i) out[i] = u[i] * h[i] + (1.0f - u[i]) * c[i];
}

// out = u ⊙ h + (1 - u) ⊙ c
void blend(const float* u, const float* h, const float* c, float* out, std::size_t n, VecPath path) {
  std::size_t i = 0;
#if NMTDEC_HAVE_AVX2
  if (path == VecPath::kVector) {
    const __m256 one = _mm256_set1_ps(1.0f);
    for (; i + 8 <= n; i += 8) {
      const __m256 uv = _mm256_loadu_ps(u + i);
      const __m256 a = _mm256_mul_ps(uv, _mm256_loadu_ps(h + i));
      const __m256 b = _mm256_mul_ps(_mm256_sub_ps(one, uv), _mm256_loadu_ps(c + i));
      _mm256_storeu_ps(out + i, _mm256_add_ps(a, b));
    }
  }
#endif
  blend_scalar(u + i, h + i, c + i, out + i, n - i);
}

struct Mode {
  bool quant;
  int frac_bits_a;
  VecPath path;
  EvalMode eval;
  ActivationKind candidate;
};

Mode mode_of(const Runtime& rt) {
  return {rt.flags().quant16, rt.frac_bits_a(), rt.vec_path(), rt.eval_mode(), rt.candidate_kind()};
}

// One GRU update. rec and inp hold the three stacked products (u, r, h order);
// ctx is the attention term or empty. scratch needs 3h floats.
void gru_update(std::span<const float> rec, std::span<const float> inp, std::span<const float> ctx,
                std::span<const float> bias, std::span<const float> h_prev, std::span<float> h_out,
                std::span<float> scratch, const Mode& m) {
  const std::size_t h = h_prev.size();
  std::span<float> ur = scratch.subspan(0, 2 * h);
  std::span<float> cand = scratch.subspan(2 * h, h);
  vec_binary(BinaryOp::kAdd, rec.subspan(0, 2 * h), inp.subspan(0, 2 * h), ur, m.path);
  if (!ctx.empty()) add_into(ur, ctx.subspan(0, 2 * h), m.path);
  add_into(ur, bias.subspan(0, 2 * h), m.path);
  activate_inplace(ActivationKind::kSigmoid, ur, m.eval);
  vec_binary(BinaryOp::kMul, ur.subspan(h, h), rec.subspan(2 * h, h), cand, m.path);
  add_into(cand, inp.subspan(2 * h, h), m.path);
  if (!ctx.empty()) add_into(cand, ctx.subspan(2 * h, h), m.path);
  add_into(cand, bias.subspan(2 * h, h), m.path);
  activate_inplace(m.candidate, cand, m.eval);
  blend(ur.data(), h_prev.data(), cand.data(), h_out.data(), h, m.path);
}

Tensor hstack_rows(std::initializer_list<const Tensor*> parts) {
  std::vector<float> data;
  for (const Tensor* p : parts) data.insert(data.end(), p->data(), p->data() + p->size());
  const std::size_t n = data.size();
  return Tensor(1, n, std::move(data));
}

}  // namespace

// ---------------------------------------------------------------------------
// Runtime

detail::Linear Runtime::make_linear(std::vector<const Tensor*> parts,
                                    std::vector<std::string> names) const {
  detail::Linear lin;
  lin.w = Tensor::vstack(parts);
  if (!flags_.quant16) return lin;
  std::vector<const QuantMatrix*> twins;
  for (const auto& n : names) {
    const auto it = model_->quantized.find(n);
    if (it == model_->quantized.end()) break;
    twins.push_back(&it->second);
  }
  lin.q = twins.size() == names.size() ? QuantMatrix::vstack(twins) : quantize_weights(lin.w, frac_bits_w_);
  return lin;
}

detail::GruLayer Runtime::make_gru(const GruWeights& g, const std::string& p) const {
  detail::GruLayer layer;
  layer.input = make_linear({&g.V_u, &g.V_r, &g.V_h}, {p + ".V_u", p + ".V_r", p + ".V_h"});
  layer.recurrent = make_linear({&g.W_u, &g.W_r, &g.W_h}, {p + ".W_u", p + ".W_r", p + ".W_h"});
  layer.bias = hstack_rows({&g.b_u, &g.b_r, &g.b_h});
  layer.hidden = g.hidden();
  return layer;
}

Runtime::Runtime(const Model& model, StepFlags flags, int precompute_k)
    : model_(&model), flags_(flags) {
  const ModelSpec& spec = model.spec;
  if (!model.quantized.empty()) {
    frac_bits_a_ = model.frac_bits_a;
    frac_bits_w_ = model.quantized.begin()->second.frac_bits();
  }
  trg_hidden_ = static_cast<std::size_t>(spec.trg_hidden);
  att_dim_ = model.attention.W_a.rows();
  top_dim_ = static_cast<std::size_t>(spec.top_width());

  for (int l = 0; l < spec.src_layers; ++l) {
    const std::string p = "src.l" + std::to_string(l + 1);
    enc_fwd.push_back(make_gru(model.src_fwd[l], p + ".fwd"));
    enc_bwd.push_back(make_gru(model.src_bwd[l], p + ".bwd"));
  }
  const GruWeights& g = model.trg_gru;
  const AttentionWeights& a = model.attention;
  key_proj = make_linear({&a.U_a}, {"trg.att.U_a"});
  ctx_proj = make_linear({&g.U_u, &g.U_r, &g.U_h}, {"trg.gru.U_u", "trg.gru.U_r", "trg.gru.U_h"});
  dec_rec = make_linear({&g.W_u, &g.W_r, &g.W_h, &a.W_a},
                        {"trg.gru.W_u", "trg.gru.W_r", "trg.gru.W_h", "trg.att.W_a"});
  dec_in = make_linear({&g.V_u, &g.V_r, &g.V_h, &a.V_a},
                       {"trg.gru.V_u", "trg.gru.V_r", "trg.gru.V_h", "trg.att.V_a"});
  dec_in_att = make_linear({&a.V_a}, {"trg.att.V_a"});
  att_query_h = make_linear({&a.W_a}, {"trg.att.W_a"});
  dec_bias = hstack_rows({&g.b_u, &g.b_r, &g.b_h});
  for (int l = 1; l <= spec.fc_layers; ++l) {
    const std::string n = "fc." + std::to_string(l) + ".W";
    fc.push_back(make_linear({&model.fc[l - 1]}, {n}));
  }
  if (spec.top_layer == TopLayer::kFcTanh) {
    top_fc = make_linear({&model.top_w}, {"top.W"});
  } else {
    top_gru = make_gru(model.top_gru, "top.gru");
  }
  output = make_linear({&model.output}, {"out.V"});

  if (flags_.precomputed_embeddings) {
    const int k = precompute_k < 0 ? spec.precompute_k : precompute_k;
    build_precomputed(static_cast<std::size_t>(k));
  }
}

void Runtime::build_precomputed(std::size_t k) {
  const Model& m = *model_;
  const std::size_t kt = std::min(k, m.trg_embeddings.rows());
  const std::size_t ks = std::min(k, m.src_embeddings.rows());
  const GruWeights& g = m.trg_gru;
  const detail::Linear trg_in = make_linear(
      {&g.V_u, &g.V_r, &g.V_h}, {"trg.gru.V_u", "trg.gru.V_r", "trg.gru.V_h"});
  PrecomputedEmbeddings pe;
  pe.target_covered = kt;
  pe.source_covered = ks;
  pe.target = Tensor(kt, trg_in.out_dim());
  trg_in.apply(m.trg_embeddings.data(), kt, pe.target.data(), flags_.quant16, frac_bits_a_);
  pe.source_fwd = Tensor(ks, enc_fwd.front().input.out_dim());
  pe.source_bwd = Tensor(ks, enc_bwd.front().input.out_dim());
  enc_fwd.front().input.apply(m.src_embeddings.data(), ks, pe.source_fwd.data(), flags_.quant16,
                              frac_bits_a_);
  enc_bwd.front().input.apply(m.src_embeddings.data(), ks, pe.source_bwd.data(), flags_.quant16,
                              frac_bits_a_);
  precomputed_ = std::move(pe);
}

PrecomputedEmbeddings build_precomputed_embeddings(const Model& model, std::size_t k, bool quant16) {
  StepFlags f;
  f.quant16 = quant16;
  f.precomputed_embeddings = true;
  const Runtime rt(model, f, static_cast<int>(std::min<std::size_t>(k, 1u << 30)));
  return rt.precomputed();
}

// ---------------------------------------------------------------------------
// Source side

namespace {

// Input products for one encoder layer; the first layer reads the table for
// covered words.
Tensor encoder_inputs(const Runtime& rt, const detail::GruLayer& layer, const Tensor& x,
                      std::span<const int32_t> ids, const Tensor* table, const Mode& m) {
  if (!table) return layer.input.apply(x, m.quant, m.frac_bits_a);
  const std::size_t covered = table->rows();
  Tensor p(x.rows(), layer.input.out_dim());
  std::vector<int32_t> missing;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (static_cast<std::size_t>(ids[i]) < covered) {
      std::copy_n(table->row(ids[i]).data(), p.cols(), p.row(i).data());
    } else {
      missing.push_back(static_cast<int32_t>(i));
    }
  }
  if (!missing.empty()) {
    const Tensor xm = x.gather_rows(missing);
    const Tensor pm = layer.input.apply(xm, m.quant, m.frac_bits_a);
    for (std::size_t j = 0; j < missing.size(); ++j)
      std::copy_n(pm.row(j).data(), p.cols(), p.row(missing[j]).data());
  }
  (void)rt;
  return p;
}

}  // namespace

SourceCache encode_source(const Runtime& rt, std::span<const int32_t> src_ids) {
  const Model& model = rt.model();
  if (src_ids.empty()) throw InputError("empty source sentence");
  for (int32_t id : src_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.src_embeddings.rows()) {
      throw InputError("source token id " + std::to_string(id) + " out of range");
    }
  }
  const Mode m = mode_of(rt);
  const std::size_t len = src_ids.size();
  Tensor x = model.src_embeddings.gather_rows(src_ids);
  const bool use_table = rt.flags().precomputed_embeddings && rt.precomputed().source_covered > 0;

  for (std::size_t l = 0; l < rt.enc_fwd.size(); ++l) {
    const std::size_t hd = rt.enc_fwd[l].hidden;
    Tensor out(len, 2 * hd);
    for (int dir = 0; dir < 2; ++dir) {
      const detail::GruLayer& layer = dir == 0 ? rt.enc_fwd[l] : rt.enc_bwd[l];
      const Tensor* table = nullptr;
      if (l == 0 && use_table) table = dir == 0 ? &rt.precomputed().source_fwd : &rt.precomputed().source_bwd;
      const Tensor p = encoder_inputs(rt, layer, x, src_ids, table, m);
      std::vector<float> h(hd, 0.0f), h_next(hd), rec(3 * hd), scratch(3 * hd);
      for (std::size_t step = 0; step < len; ++step) {
        const std::size_t pos = dir == 0 ? step : len - 1 - step;
        layer.recurrent.apply(h.data(), 1, rec.data(), m.quant, m.frac_bits_a);
        gru_update(rec, p.row(pos), {}, layer.bias.values(), h, h_next, scratch, m);
        h.swap(h_next);
        std::copy(h.begin(), h.end(), out.row(pos).data() + dir * hd);
      }
    }
    x = std::move(out);
  }

  SourceCache cache;
  cache.keys = rt.key_proj.apply(x, m.quant, m.frac_bits_a);
  activate_inplace(ActivationKind::kTanh, cache.keys.values(), m.eval);
  if (rt.flags().precomputed_attention) {
    cache.ctx_proj = rt.ctx_proj.apply(x, m.quant, m.frac_bits_a);
    cache.ctx_proj_t = cache.ctx_proj.transposed();
  } else {
    cache.annotations_t = cache.annotations.transposed();
  }
  cache.annotations = std::move(x);
  return cache;
}

// ---------------------------------------------------------------------------
// Attention

AttentionOut attend(const Runtime& rt, const Tensor& query_pre, const SourceCache& cache) {
  if (cache.length() == 0) throw ShapeError("attention over an empty source cache");
  const Mode m = mode_of(rt);
  Tensor q = activate(ActivationKind::kTanh, query_pre, m.eval);
  AttentionOut out;
  out.alpha = linear_f32(cache.keys, q);
  for (std::size_t i = 0; i < out.alpha.rows(); ++i) softmax_inplace(out.alpha.row(i));

  const bool projected = rt.flags().precomputed_attention && !cache.ctx_proj.empty();
  const Tensor& values = projected ? cache.ctx_proj : cache.annotations;
  const Tensor& cached_t = projected ? cache.ctx_proj_t : cache.annotations_t;
  out.projected = projected;
  // Σ_j α_j v_j for every hypothesis at once, summed over j in order.
  out.context = cached_t.rows() == values.cols() && cached_t.cols() == values.rows()
                    ? linear_f32(cached_t, out.alpha)
                    : linear_f32(values.transposed(), out.alpha);
  return out;
}

AttentionOut attention_step(const Runtime& rt, const Tensor& h_prev, const Tensor& x_embed,
                            const SourceCache& cache) {
  const Mode m = mode_of(rt);
  Tensor qpre = rt.att_query_h.apply(h_prev, m.quant, m.frac_bits_a);
  const Tensor vx = rt.dec_in_att.apply(x_embed, m.quant, m.frac_bits_a);
  add_into(qpre.values(), vx.values(), m.path);
  return attend(rt, qpre, cache);
}

// ---------------------------------------------------------------------------
// Attentional target GRU

AttGruOut att_gru_step(const Runtime& rt, const Tensor& h_prev_states,
                       std::span<const int32_t> state_of, std::span<const int32_t> prev_tokens,
                       const SourceCache& cache) {
  const Model& model = rt.model();
  const Mode m = mode_of(rt);
  const std::size_t b = prev_tokens.size();
  const std::size_t r = rt.trg_hidden();
  const std::size_t a = rt.att_dim();
  const std::size_t r3 = 3 * r;
  const std::size_t full = r3 + a;
  if (state_of.size() != b) throw ShapeError("att_gru_step: state_of and prev_tokens differ in length");
  if (h_prev_states.cols() != r) throw ShapeError("att_gru_step: previous state width mismatch");
  for (std::size_t i = 0; i < b; ++i) {
    if (state_of[i] < 0 || static_cast<std::size_t>(state_of[i]) >= h_prev_states.rows()) {
      throw ShapeError("att_gru_step: state index out of range");
    }
    if (prev_tokens[i] < 0 || static_cast<std::size_t>(prev_tokens[i]) >= model.trg_embeddings.rows()) {
      throw InputError("target token id " + std::to_string(prev_tokens[i]) + " out of range");
    }
  }

  // W·h (and W_a·h) once per distinct state, then gathered per hypothesis.
  const Tensor rec_states = rt.dec_rec.apply(h_prev_states, m.quant, m.frac_bits_a);
  Tensor rec(b, full);
  for (std::size_t i = 0; i < b; ++i)
    std::copy_n(rec_states.row(state_of[i]).data(), full, rec.row(i).data());

  // V·x, from the table where possible.
  Tensor inx(b, full);
  const PrecomputedEmbeddings& pe = rt.precomputed();
  if (rt.flags().precomputed_embeddings && pe.target_covered > 0) {
    std::vector<int32_t> covered, missing;
    for (std::size_t i = 0; i < b; ++i)
      (static_cast<std::size_t>(prev_tokens[i]) < pe.target_covered ? covered : missing)
          .push_back(static_cast<int32_t>(i));
    if (!covered.empty()) {
      std::vector<int32_t> ids;
      for (int32_t i : covered) ids.push_back(prev_tokens[i]);
      const Tensor va = rt.dec_in_att.apply(model.trg_embeddings.gather_rows(ids), m.quant, m.frac_bits_a);
      for (std::size_t j = 0; j < covered.size(); ++j) {
        float* dst = inx.row(covered[j]).data();
        std::copy_n(pe.target.row(ids[j]).data(), r3, dst);
        std::copy_n(va.row(j).data(), a, dst + r3);
      }
    }
    if (!missing.empty()) {
      std::vector<int32_t> ids;
      for (int32_t i : missing) ids.push_back(prev_tokens[i]);
      const Tensor vx = rt.dec_in.apply(model.trg_embeddings.gather_rows(ids), m.quant, m.frac_bits_a);
      for (std::size_t j = 0; j < missing.size(); ++j)
        std::copy_n(vx.row(j).data(), full, inx.row(missing[j]).data());
    }
  } else {
    inx = rt.dec_in.apply(model.trg_embeddings.gather_rows(prev_tokens), m.quant, m.frac_bits_a);
  }

  Tensor qpre(b, a);
  for (std::size_t i = 0; i < b; ++i) {
    vec_binary(BinaryOp::kAdd, rec.row(i).subspan(r3), inx.row(i).subspan(r3), qpre.row(i), m.path);
  }
  AttentionOut att = attend(rt, qpre, cache);
  const Tensor uc = att.projected ? std::move(att.context)
                                  : rt.ctx_proj.apply(att.context, m.quant, m.frac_bits_a);

  AttGruOut out;
  out.h = Tensor(b, r);
  std::vector<float> scratch(r3);
  for (std::size_t i = 0; i < b; ++i) {
    gru_update(rec.row(i).subspan(0, r3), inx.row(i).subspan(0, r3), uc.row(i), rt.dec_bias.values(),
               h_prev_states.row(state_of[i]), out.h.row(i), scratch, m);
  }
  out.alpha = std::move(att.alpha);
  return out;
}

AttGruOut att_gru_step(const Runtime& rt, const Tensor& h_prev, std::span<const int32_t> prev_tokens,
                       const SourceCache& cache) {
  std::vector<int32_t> identity(prev_tokens.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<int32_t>(i);
  return att_gru_step(rt, h_prev, identity, prev_tokens, cache);
}

// ---------------------------------------------------------------------------
// FC stack and output layer

Tensor fc_stack_apply(const Runtime& rt, const Tensor& h_b, const Tensor* top_prev,
                      std::vector<Tensor>* layers_out) {
  const Mode m = mode_of(rt);
  std::vector<Tensor> local;
  std::vector<Tensor>& layers = layers_out ? *layers_out : local;
  layers.clear();
  layers.reserve(rt.fc.size());
  for (std::size_t l = 1; l <= rt.fc.size(); ++l) {
    const Tensor& in = l == 1 ? h_b : layers.back();
    Tensor y = rt.fc[l - 1].apply(in, m.quant, m.frac_bits_a);
    if (l >= 3 && l % 2 == 1) add_into(y.values(), layers[l - 3].values(), m.path);
    activate_inplace(ActivationKind::kReluClipped, y.values(), m.eval);
    layers.push_back(std::move(y));
  }
  const Tensor& top_in = layers.empty() ? h_b : layers.back();

  if (rt.model().spec.top_layer == TopLayer::kFcTanh) {
    Tensor h = rt.top_fc.apply(top_in, m.quant, m.frac_bits_a);
    activate_inplace(ActivationKind::kTanh, h.values(), m.eval);
    return h;
  }
  if (!top_prev || top_prev->rows() != top_in.rows() || top_prev->cols() != rt.top_dim()) {
    throw ShapeError("GRU top layer needs the previous top state of every hypothesis");
  }
  const detail::GruLayer& g = rt.top_gru;
  const Tensor rec = g.recurrent.apply(*top_prev, m.quant, m.frac_bits_a);
  const Tensor inp = g.input.apply(top_in, m.quant, m.frac_bits_a);
  Tensor h(top_in.rows(), g.hidden);
  std::vector<float> scratch(3 * g.hidden);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    gru_update(rec.row(i), inp.row(i), {}, g.bias.values(), top_prev->row(i), h.row(i), scratch, m);
  }
  return h;
}

OutputShortlist make_shortlist(const Runtime& rt, std::span<const int32_t> candidate_ids) {
  if (candidate_ids.empty()) throw InputError("empty candidate list");
  const std::size_t vocab = rt.output.out_dim();
  for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
    if (candidate_ids[i] < 0 || static_cast<std::size_t>(candidate_ids[i]) >= vocab) {
      throw InputError("candidate id " + std::to_string(candidate_ids[i]) + " out of range");
    }
    if (i > 0 && candidate_ids[i] <= candidate_ids[i - 1]) {
      throw InputError("candidate ids must be sorted and unique");
    }
  }
  OutputShortlist s;
  s.ids.assign(candidate_ids.begin(), candidate_ids.end());
  s.rows.w = rt.output.w.gather_rows(candidate_ids);
  if (rt.flags().quant16) s.rows.q = rt.output.q.gather_rows(candidate_ids);
  return s;
}

Tensor output_logits(const Runtime& rt, const OutputShortlist& shortlist, const Tensor& h_top) {
  Tensor y = shortlist.rows.apply(h_top, rt.flags().quant16, rt.frac_bits_a());
  for (std::size_t i = 0; i < y.rows(); ++i) log_softmax_inplace(y.row(i));
  return y;
}

Tensor output_logits(const Runtime& rt, const Tensor& h_top, std::span<const int32_t> candidate_ids) {
  return output_logits(rt, make_shortlist(rt, candidate_ids), h_top);
}

}  // namespace nmtdec
