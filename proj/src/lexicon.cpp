#include "nmtdec/lexicon.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <string>

#include "nmtdec/errors.hpp"

namespace nmtdec {

namespace {

void sort_and_truncate(std::vector<LexEntry>& list, std::size_t top_n) {
  std::sort(list.begin(), list.end(), [](const LexEntry& a, const LexEntry& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.target < b.target;
  });
  if (list.size() > top_n) list.resize(top_n);
}

}  // namespace

LexTable::LexTable(std::vector<std::vector<LexEntry>> by_source, std::size_t top_n)
    : by_source_(std::move(by_source)), top_n_(top_n) {
  for (auto& list : by_source_) {
    sort_and_truncate(list, top_n_);
    entries_ += list.size();
  }
}

std::span<const LexEntry> LexTable::translations(int32_t source_id) const {
  if (source_id < 0 || static_cast<std::size_t>(source_id) >= by_source_.size()) return {};
  return by_source_[static_cast<std::size_t>(source_id)];
}

LexTable parse_lex_table(std::istream& in, const Vocab& src, const Vocab& trg, std::size_t top_n) {
  std::vector<std::vector<LexEntry>> by_source(src.size());
  std::size_t skipped = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos || line.find('\t', tab2 + 1) != std::string::npos) {
      throw InputError("lexical table line " + std::to_string(line_no) +
                       ": expected 3 tab-separated fields");
    }
    const std::string_view s(line.data(), tab1);
    const std::string_view t(line.data() + tab1 + 1, tab2 - tab1 - 1);
    const char* pb = line.data() + tab2 + 1;
    const char* pe = line.data() + line.size();
    float prob = 0.0f;
    const auto [p, ec] = std::from_chars(pb, pe, prob);
    if (ec != std::errc() || p != pe) {
      throw InputError("lexical table line " + std::to_string(line_no) + ": bad probability");
    }
    if (!(prob > 0.0f && prob <= 1.0f)) {
      throw InputError("lexical table line " + std::to_string(line_no) +
                       ": probability must be in (0, 1]");
    }
    if (s.empty() || t.empty()) {
      throw InputError("lexical table line " + std::to_string(line_no) + ": empty word");
    }
    if (!src.contains(s) || !trg.contains(t)) {
      ++skipped;
      continue;
    }
    const int32_t sid = src.lookup(s);
    const int32_t tid = trg.lookup(t);
    auto& list = by_source[static_cast<std::size_t>(sid)];
    auto dup = std::find_if(list.begin(), list.end(), [&](const LexEntry& e) { return e.target == tid; });
    if (dup != list.end()) {
      dup->prob = std::max(dup->prob, prob);
    } else {
      list.push_back({tid, prob});
    }
  }
  LexTable table(std::move(by_source), top_n);
  table.set_skipped_unknown(skipped);
  return table;
}

LexTable load_lex_table(const std::filesystem::path& path, const Vocab& src, const Vocab& trg,
                        std::size_t top_n) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open lexical table " + path.string());
  return parse_lex_table(in, src, trg, top_n);
}

void write_lex_table(std::ostream& out, const LexTable& lex, const Vocab& src, const Vocab& trg) {
  char buf[32];
  for (std::size_t s = 0; s < src.size(); ++s) {
    for (const LexEntry& e : lex.translations(static_cast<int32_t>(s))) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), e.prob);
      out << src.token(static_cast<int32_t>(s)) << '\t' << trg.token(e.target) << '\t'
          << std::string_view(buf, res.ptr - buf) << '\n';
    }
  }
}

LexTable generate_random_lex_table(std::size_t src_vocab_size, std::size_t trg_vocab_size,
                                   std::size_t top_n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<LexEntry>> by_source(src_vocab_size);
  const std::size_t regular = trg_vocab_size > 3 ? trg_vocab_size - 3 : 0;
  const std::size_t n = std::min(top_n, regular);
  std::vector<int32_t> pool(regular);
  for (std::size_t i = 0; i < regular; ++i) pool[i] = static_cast<int32_t>(i + 3);
  for (std::size_t s = 3; s < src_vocab_size; ++s) {
    // Partial Fisher-Yates with explicit modulo so the draw is library-independent.
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (regular - i));
      std::swap(pool[i], pool[j]);
    }
    auto& list = by_source[s];
    for (std::size_t i = 0; i < n; ++i) {
      const float p = static_cast<float>((rng() >> 40) + 1) * 0x1p-24f;
      list.push_back({pool[i], p});
    }
  }
  return LexTable(std::move(by_source), top_n);
}

}  // namespace nmtdec
