#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nmtdec/quant.hpp"
#include "nmtdec/tensor.hpp"

namespace nmtdec {

inline constexpr int32_t kBosId = 0;
inline constexpr int32_t kEosId = 1;
inline constexpr int32_t kUnkId = 2;

enum class TopLayer : uint8_t { kFcTanh, kGru };
// Activation of the GRU candidate state. tanh is the standard GRU; sigmoid is
// kept for experiments with the literal printed form of the equations.
enum class CandidateActivation : uint8_t { kTanh, kSigmoid };

/// Network hyperparameters. Widths follow the usual naming: src_hidden is the
/// concatenated bidirectional width (each direction gets half).
struct ModelSpec {
  int src_vocab_size = 1000;
  int trg_vocab_size = 1000;
  int embed_dim = 128;
  int src_layers = 3;
  int src_hidden = 128;
  int trg_hidden = 256;
  int fc_layers = 3;
  // One entry per FC layer, or a single entry shared by all of them.
  std::vector<int> fc_dims = {192};
  TopLayer top_layer = TopLayer::kFcTanh;
  int top_dim = 0;  // 0 means trg_hidden
  int precompute_k = 8000;
  CandidateActivation candidate_activation = CandidateActivation::kTanh;
  // Half-width of the uniform distribution used by generate_random_model.
  float init_range = 0.1f;

  int fc_dim(int layer) const;  // 1-based
  int top_width() const { return top_dim > 0 ? top_dim : trg_hidden; }
  int src_direction_hidden() const { return src_hidden / 2; }

  // Throws ValidationError naming the first offending field.
  void validate() const;

  // Compares effective widths, so {192} equals {192, 192, 192} for three FC layers.
  bool operator==(const ModelSpec& o) const;
};

// "key = value" lines; '#' starts a comment. Unknown keys are errors.
ModelSpec parse_model_spec(std::string_view text);
ModelSpec read_model_spec(const std::filesystem::path& path);
std::string format_model_spec(const ModelSpec& spec);

/// Token table. Ids 0/1/2 are sentence-start, sentence-end and unk.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens);
  // <s>, </s>, <unk>, then w3 .. w{size-1}.
  static Vocab synthetic(std::size_t size);
  static Vocab read(const std::filesystem::path& path);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // kUnkId for words not in the table.
  int32_t lookup(std::string_view word) const;
  bool contains(std::string_view word) const;
  std::span<const std::string> tokens() const { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
};

struct GruWeights {
  Tensor W_u, W_r, W_h;  // recurrent
  Tensor V_u, V_r, V_h;  // input
  Tensor U_u, U_r, U_h;  // attention context; empty for plain GRUs
  Tensor b_u, b_r, b_h;  // 1×hidden

  bool attentional() const { return !U_u.empty(); }
  std::size_t hidden() const { return W_u.rows(); }
};

struct AttentionWeights {
  Tensor W_a;  // att × trg_hidden
  Tensor V_a;  // att × embed
  Tensor U_a;  // att × src_hidden
};

/// Full parameter set plus vocabularies and optional 16-bit twins of every
/// weight matrix.
struct Model {
  ModelSpec spec;
  Tensor src_embeddings;  // src_vocab × embed
  Tensor trg_embeddings;  // trg_vocab × embed
  std::vector<GruWeights> src_fwd;
  std::vector<GruWeights> src_bwd;
  GruWeights trg_gru;
  AttentionWeights attention;
  std::vector<Tensor> fc;  // W^1 .. W^N
  Tensor top_w;            // top_dim × fc_out, when top_layer is fc-tanh
  GruWeights top_gru;      // when top_layer is gru
  Tensor output;           // trg_vocab × top_dim
  Vocab src_vocab;
  Vocab trg_vocab;

  // Twins keyed by the float tensor's file name. frac_bits_a is 0 when the
  // model carries no twins.
  std::map<std::string, QuantMatrix> quantized;
  int frac_bits_a = 0;

  // (file name, tensor) in serialization order. Empty optional tensors are skipped.
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  // Names of the tensors that get quantized twins (all weight matrices).
  std::vector<std::string> weight_matrix_names() const;
  const Tensor& tensor(const std::string& name) const;

  void add_quantized_twins(int frac_bits_w = kDefaultWeightFracBits,
                           int frac_bits_a = kDefaultActivationFracBits);
  // Checks every tensor shape against spec and the twin bound; throws ValidationError.
  void validate() const;
};

// Weights uniform on [-init_range, init_range], biases zero, synthetic vocabs.
// Deterministic for a given (spec, seed).
Model generate_random_model(const ModelSpec& spec, uint64_t seed);

std::vector<uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const uint8_t> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace nmtdec
