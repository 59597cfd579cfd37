#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nmtdec/compute.hpp"
#include "nmtdec/lexicon.hpp"
#include "nmtdec/model.hpp"

namespace nmtdec {

inline constexpr double kNoEarlyStop = std::numeric_limits<double>::infinity();

struct DecodeConfig {
  int beam_size = 6;
  double delta = 3.0;  // kNoEarlyStop disables early stopping
  int max_len_factor = 2;
  int max_len_offset = 5;
  int max_len = 0;  // > 0 overrides factor·|S| + offset
  int nbest = 1;
  std::size_t cand_per_word = LexTable::kDefaultTopN;
  bool keep_alpha = true;

  int max_target_length(std::size_t src_len) const {
    return max_len > 0 ? max_len : max_len_factor * static_cast<int>(src_len) + max_len_offset;
  }
  // Throws InputError on out-of-range fields.
  void validate() const;
};

struct Hypothesis {
  std::vector<int32_t> tokens;  // emitted ids, sentence-end included when complete
  double logscore = 0.0;
  int32_t state_ref = 0;  // row of the previous step's state tensor this hypothesis extends
  std::vector<std::vector<float>> alpha_history;
  bool complete = false;
};

// Score descending, then token sequence ascending.
bool hypothesis_before(const Hypothesis& a, const Hypothesis& b);

struct NBestEntry {
  std::vector<int32_t> tokens;
  double logscore = 0.0;
  Tensor alpha;  // |tokens| × |S| (empty when keep_alpha is off)
  bool complete = true;
};

struct DecodeStats {
  double encode_us = 0.0;
  double step_us = 0.0;    // attentional GRU + FC stack
  double output_us = 0.0;  // output layer, ensemble combination, beam update
  std::size_t steps = 0;
  std::size_t unique_states = 0;  // Σ over steps of distinct previous states
  std::size_t total_states = 0;   // Σ over steps of hypotheses expanded
  std::size_t candidates = 0;
};

struct DecodeResult {
  std::vector<NBestEntry> nbest;
  DecodeStats stats;
};

// Union of the top cand_per_word translations of every source word plus
// sentence-end and unk, sorted and unique. An empty table yields every target
// id except sentence-start.
std::vector<int32_t> build_candidate_list(const LexTable& lex, std::span<const int32_t> src_ids,
                                          std::size_t cand_per_word, std::size_t trg_vocab_size);

struct MergedStates {
  std::vector<int32_t> unique_refs;  // ascending
  std::vector<int32_t> gather_map;   // per hypothesis, index into unique_refs
};
MergedStates merge_states(std::span<const int32_t> state_refs);

bool should_stop(double best_partial, double best_complete, bool have_complete, double delta);

// Mean of log-probabilities, renormalized per row.
Tensor ensemble_combine(std::span<const Tensor> step_logprobs);

// All runtimes must share the target vocabulary.
DecodeResult beam_search(std::span<const Runtime* const> models, std::span<const int32_t> src_ids,
                         const DecodeConfig& config, const LexTable& lex);

/// Per-step distributions along a fixed target sequence.
struct ForcedTrace {
  std::vector<int32_t> candidates;
  Tensor logprobs;                    // one row per step over the candidates
  std::vector<double> token_logprobs;  // log-prob of the forced token at each step
  double total = 0.0;
};

// Feeds tokens through the network one at a time; a token outside the
// candidate list throws InputError.
ForcedTrace force_decode(std::span<const Runtime* const> models, std::span<const int32_t> src_ids,
                         std::span<const int32_t> tokens, const DecodeConfig& config,
                         const LexTable& lex);

// Output strings with sentence-end dropped; unk tokens are replaced through the
// attention argmax of their step.
std::vector<std::string> unk_replace(std::span<const int32_t> tokens, const Tensor& alpha,
                                     std::span<const std::string> src_words,
                                     std::span<const int32_t> src_ids, const LexTable& lex,
                                     const Vocab& trg_vocab);

}  // namespace nmtdec
