#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nmtdec/model.hpp"
#include "nmtdec/quant.hpp"
#include "nmtdec/tensor.hpp"

namespace nmtdec {

/// The five decoder speedups, each independently switchable.
struct StepFlags {
  bool quant16 = false;                 // 16-bit fixed-point products
  bool precomputed_embeddings = false;  // V·x table for frequent words
  bool precomputed_attention = false;   // Σ α (U s) instead of U (Σ α s)
  bool lut_activations = false;         // lookup-table sigmoid/tanh + SIMD elementwise ops
  bool merge_recurrent = false;         // W·h once per distinct previous state

  static StepFlags none() { return {}; }
  static StepFlags all() { return {true, true, true, true, true}; }
  // "all", "none", or a comma list of quant16, preemb, preatt, lut, merge.
  static StepFlags parse(std::string_view opts);
  std::string to_string() const;

  bool operator==(const StepFlags&) const = default;
};

/// V·x rows for the k most frequent words (ids 0..k-1; vocabularies are
/// frequency ordered). Target rows hold V_u·x ⊕ V_r·x ⊕ V_h·x of the attentional
/// GRU; source rows hold the same for the first encoder layer, per direction.
struct PrecomputedEmbeddings {
  std::size_t target_covered = 0;
  std::size_t source_covered = 0;
  Tensor target;      // target_covered × 3r
  Tensor source_fwd;  // source_covered × 3h
  Tensor source_bwd;  // source_covered × 3h

  std::size_t target_floats() const { return target.size(); }
  std::size_t source_floats() const { return source_fwd.size() + source_bwd.size(); }
};

namespace detail {

// A weight stack with an optional 16-bit twin, applied to a batch of rows.
struct Linear {
  Tensor w;
  QuantMatrix q;

  std::size_t out_dim() const { return w.rows(); }
  std::size_t in_dim() const { return w.cols(); }
  void apply(const float* x, std::size_t n, float* y, bool quant16, int frac_bits_a) const;
  Tensor apply(const Tensor& x, bool quant16, int frac_bits_a) const;
};

struct GruLayer {
  Linear input;      // [V_u; V_r; V_h]
  Linear recurrent;  // [W_u; W_r; W_h]
  Tensor bias;       // 1 × 3h: b_u ⊕ b_r ⊕ b_h
  std::size_t hidden = 0;
};

}  // namespace detail

/// Decode-time view of a Model: fused weight stacks, their 16-bit twins and the
/// precomputed embedding table. Immutable after construction; one Runtime can
/// serve many threads.
class Runtime {
 public:
  // precompute_k < 0 takes model.spec.precompute_k; it is clamped to vocab size.
  Runtime(const Model& model, StepFlags flags, int precompute_k = -1);

  const Model& model() const { return *model_; }
  const StepFlags& flags() const { return flags_; }
  int frac_bits_a() const { return frac_bits_a_; }
  const PrecomputedEmbeddings& precomputed() const { return precomputed_; }

  EvalMode eval_mode() const { return flags_.lut_activations ? EvalMode::kLut : EvalMode::kExact; }
  VecPath vec_path() const { return flags_.lut_activations ? VecPath::kVector : VecPath::kScalar; }
  ActivationKind candidate_kind() const {
    return model_->spec.candidate_activation == CandidateActivation::kSigmoid
               ? ActivationKind::kSigmoid
               : ActivationKind::kTanh;
  }

  std::size_t trg_hidden() const { return trg_hidden_; }
  std::size_t att_dim() const { return att_dim_; }
  std::size_t top_dim() const { return top_dim_; }

  // Internal weight stacks, exposed for the compute functions and tests.
  std::vector<detail::GruLayer> enc_fwd, enc_bwd;
  detail::Linear key_proj;     // U_a
  detail::Linear ctx_proj;     // [U_u; U_r; U_h]
  detail::Linear dec_rec;      // [W_u; W_r; W_h; W_a]
  detail::Linear dec_in;       // [V_u; V_r; V_h; V_a]
  detail::Linear dec_in_att;   // V_a alone, for words served by the table
  detail::Linear att_query_h;  // W_a alone (attention_step convenience API)
  Tensor dec_bias;             // b_u ⊕ b_r ⊕ b_h
  std::vector<detail::Linear> fc;
  detail::Linear top_fc;
  detail::GruLayer top_gru;
  detail::Linear output;

 private:
  detail::Linear make_linear(std::vector<const Tensor*> parts, std::vector<std::string> names) const;
  detail::GruLayer make_gru(const GruWeights& g, const std::string& prefix) const;
  void build_precomputed(std::size_t k);

  const Model* model_;
  StepFlags flags_;
  int frac_bits_a_ = kDefaultActivationFracBits;
  int frac_bits_w_ = kDefaultWeightFracBits;
  std::size_t trg_hidden_ = 0;
  std::size_t att_dim_ = 0;
  std::size_t top_dim_ = 0;
  PrecomputedEmbeddings precomputed_;
};

// Builds the table with the same kernels the decoder uses online, so lookups
// are bit-identical to the online product.
PrecomputedEmbeddings build_precomputed_embeddings(const Model& model, std::size_t k,
                                                   bool quant16 = false);

/// Per-sentence source quantities.
struct SourceCache {
  Tensor annotations;  // |S| × src_hidden
  Tensor keys;         // |S| × att: tanh(U_a s_j)
  Tensor ctx_proj;     // |S| × 3r: [U_u; U_r; U_h] s_j; empty unless precomputed attention
  Tensor annotations_t;  // transposed copies for the weighted sums; rebuilt on demand when empty
  Tensor ctx_proj_t;

  std::size_t length() const { return annotations.rows(); }
};

SourceCache encode_source(const Runtime& rt, std::span<const int32_t> src_ids);

struct AttentionOut {
  Tensor alpha;    // b × |S|
  Tensor context;  // b × src_hidden (direct) or b × 3r (projected)
  bool projected = false;
};

// query_pre holds W_a·h + V_a·x per hypothesis (before tanh).
AttentionOut attend(const Runtime& rt, const Tensor& query_pre, const SourceCache& cache);
AttentionOut attention_step(const Runtime& rt, const Tensor& h_prev, const Tensor& x_embed,
                            const SourceCache& cache);

struct AttGruOut {
  Tensor h;      // b × r
  Tensor alpha;  // b × |S|
};

// h_prev_states holds distinct previous states; hypothesis i uses row
// state_of[i]. With merging off the caller passes one row per hypothesis.
AttGruOut att_gru_step(const Runtime& rt, const Tensor& h_prev_states,
                       std::span<const int32_t> state_of, std::span<const int32_t> prev_tokens,
                       const SourceCache& cache);
AttGruOut att_gru_step(const Runtime& rt, const Tensor& h_prev, std::span<const int32_t> prev_tokens,
                       const SourceCache& cache);

// Residual FC stack plus the top layer. For a GRU top layer, top_prev holds the
// previous top state of each hypothesis. layers, when given, receives h^1 .. h^N.
Tensor fc_stack_apply(const Runtime& rt, const Tensor& h_b, const Tensor* top_prev = nullptr,
                      std::vector<Tensor>* layers = nullptr);

/// Output rows restricted to a sorted candidate list, prepared once per sentence.
struct OutputShortlist {
  std::vector<int32_t> ids;
  detail::Linear rows;
};

OutputShortlist make_shortlist(const Runtime& rt, std::span<const int32_t> candidate_ids);
// Log-softmax over the shortlist, one row per hypothesis.
Tensor output_logits(const Runtime& rt, const OutputShortlist& shortlist, const Tensor& h_top);
Tensor output_logits(const Runtime& rt, const Tensor& h_top, std::span<const int32_t> candidate_ids);

}  // namespace nmtdec
