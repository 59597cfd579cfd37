#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "nmtdec/model.hpp"

namespace nmtdec {

struct LexEntry {
  int32_t target = 0;
  float prob = 0.0f;

  bool operator==(const LexEntry&) const = default;
};

/// Context-free translations per source word id, each list sorted by
/// probability descending (ties by target id ascending) and cut to top_n.
class LexTable {
 public:
  static constexpr std::size_t kDefaultTopN = 20;

  LexTable() = default;
  LexTable(std::vector<std::vector<LexEntry>> by_source, std::size_t top_n);

  bool empty() const { return entries_ == 0; }
  std::size_t top_n() const { return top_n_; }
  std::size_t entry_count() const { return entries_; }
  // Lines skipped because a word was missing from a vocabulary.
  std::size_t skipped_unknown() const { return skipped_unknown_; }
  void set_skipped_unknown(std::size_t n) { skipped_unknown_ = n; }

  std::span<const LexEntry> translations(int32_t source_id) const;

 private:
  std::vector<std::vector<LexEntry>> by_source_;
  std::size_t top_n_ = kDefaultTopN;
  std::size_t entries_ = 0;
  std::size_t skipped_unknown_ = 0;
};

// TSV: source-word TAB target-word TAB probability. Blank lines are ignored;
// malformed lines throw InputError with the 1-based line number.
LexTable parse_lex_table(std::istream& in, const Vocab& src, const Vocab& trg,
                         std::size_t top_n = LexTable::kDefaultTopN);
LexTable load_lex_table(const std::filesystem::path& path, const Vocab& src, const Vocab& trg,
                        std::size_t top_n = LexTable::kDefaultTopN);
void write_lex_table(std::ostream& out, const LexTable& lex, const Vocab& src, const Vocab& trg);

// Synthetic table: every regular source word gets top_n distinct regular target
// words with random probabilities. Deterministic per seed.
LexTable generate_random_lex_table(std::size_t src_vocab_size, std::size_t trg_vocab_size,
                                   std::size_t top_n, uint64_t seed);

}  // namespace nmtdec
