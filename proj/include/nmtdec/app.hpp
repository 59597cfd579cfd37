#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nmtdec/decoder.hpp"

namespace nmtdec {

/// Pre-tokenized sentences, one per line.
struct Corpus {
  std::vector<std::vector<std::string>> sentences;

  std::size_t size() const { return sentences.size(); }
};

Corpus parse_corpus(std::istream& in);
// Missing or empty files throw InputError.
Corpus read_corpus(const std::filesystem::path& path);
std::vector<int32_t> encode_words(const Vocab& vocab, const std::vector<std::string>& words);

// Random sentences over the regular words of a synthetic vocabulary.
Corpus generate_random_corpus(std::size_t count, std::size_t min_len, std::size_t max_len,
                              std::size_t vocab_size, uint64_t seed);

/// Models plus the runtimes built for one flag setting.
class Ensemble {
 public:
  Ensemble(const std::vector<const Model*>& models, StepFlags flags, int precompute_k);

  std::span<const Runtime* const> runtimes() const { return ptrs_; }
  const Model& primary() const { return ptrs_.front()->model(); }

 private:
  std::vector<std::unique_ptr<Runtime>> owned_;
  std::vector<const Runtime*> ptrs_;
};

struct CorpusDecode {
  std::vector<DecodeResult> results;  // empty source lines give an empty result
  DecodeStats stats;                  // summed over sentences
  std::size_t words = 0;              // top-1 target tokens, sentence-end included
};

CorpusDecode decode_corpus(const Ensemble& ens, const Corpus& corpus, const DecodeConfig& config,
                           const LexTable& lex);

// One line per sentence, or "idx ||| tokens ||| logscore" lines for n-best output.
void write_decode_output(std::ostream& out, const Ensemble& ens, const Corpus& corpus,
                         const CorpusDecode& decoded, const LexTable& lex, int nbest);

struct BenchReport {
  StepFlags flags;
  std::size_t sentences = 0;
  std::size_t words = 0;
  int repeat = 1;
  double wall_seconds = 0.0;
  double words_per_sec = 0.0;         // timed words over timed wall seconds
  double steady_words_per_sec = 0.0;  // one pass at each sentence's fastest repeat
  double encode_us = 0.0;
  double step_us = 0.0;
  double output_us = 0.0;
  double unique_state_ratio = 0.0;
  bool deterministic = true;  // every timed pass reproduced the warm-up output
  std::string host;
};

std::string host_descriptor();

// Warm-up pass, then repeat timed passes over the corpus.
BenchReport bench_corpus(const Ensemble& ens, const Corpus& corpus, const DecodeConfig& config,
                         const LexTable& lex, int repeat);

// Cumulative configurations: none, +quant16, +preemb, +preatt, +lut, +merge.
std::vector<StepFlags> flag_ladder();

void write_bench_report(std::ostream& out, const std::vector<BenchReport>& reports);

struct FlagAttribution {
  std::string flag;
  double identical_fraction = 0.0;
  double max_logit_diff = 0.0;
};

struct VerifyReport {
  StepFlags flags;
  std::size_t sentences = 0;
  std::size_t identical = 0;
  double identical_fraction = 0.0;
  // Largest per-step |Δ log-prob| along the reference top-1 output.
  double max_logit_diff = 0.0;
  double unique_state_ratio = 0.0;
  std::vector<FlagAttribution> per_flag;
  double threshold = 0.0;
  bool passed = false;
};

double default_min_identical(const StepFlags& flags);

// Decodes every sentence with all flags off, then with flags; attribution
// repeats the comparison for each flag of the set on its own.
VerifyReport verify_corpus(const std::vector<const Model*>& models, const Corpus& corpus,
                           const DecodeConfig& config, const LexTable& lex, StepFlags flags,
                           int precompute_k, double min_identical, bool attribution);

void write_verify_report(std::ostream& out, const VerifyReport& report);

// Command-line entry point taking main's arguments. Exit codes: 0 ok, 1 usage
// or input, 2 model, 3 verify threshold.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nmtdec
