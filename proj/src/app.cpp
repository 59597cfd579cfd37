#include "nmtdec/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "nmtdec/errors.hpp"

namespace nmtdec {

// ---------------------------------------------------------------------------
// Corpus

Corpus parse_corpus(std::istream& in) {
  Corpus c;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::vector<std::string> words;
    for (std::string w; ss >> w;) words.push_back(std::move(w));
    c.sentences.push_back(std::move(words));
  }
  return c;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input " + path.string());
  Corpus c = parse_corpus(in);
  if (c.sentences.empty()) throw InputError("input " + path.string() + " is empty");
  return c;
}

std::vector<int32_t> encode_words(const Vocab& vocab, const std::vector<std::string>& words) {
  std::vector<int32_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.lookup(w));
  return ids;
}

Corpus generate_random_corpus(std::size_t count, std::size_t min_len, std::size_t max_len,
                              std::size_t vocab_size, uint64_t seed) {
  if (min_len < 1 || max_len < min_len) throw InputError("sentence lengths must satisfy 1 <= min <= max");
  if (vocab_size < 4) throw InputError("vocabulary too small for random sentences");
  const Vocab vocab = Vocab::synthetic(vocab_size);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int32_t> word(3, static_cast<int32_t>(vocab_size) - 1);
  Corpus c;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::string> s(len(rng));
    for (auto& w : s) w = vocab.token(word(rng));
    c.sentences.push_back(std::move(s));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Decoding

Ensemble::Ensemble(const std::vector<const Model*>& models, StepFlags flags, int precompute_k) {
  if (models.empty()) throw InputError("no model given");
  for (const Model* m : models) {
    owned_.push_back(std::make_unique<Runtime>(*m, flags, precompute_k));
    ptrs_.push_back(owned_.back().get());
  }
}

namespace {

void accumulate(DecodeStats& total, const DecodeStats& s) {
  total.encode_us += s.encode_us;
  total.step_us += s.step_us;
  total.output_us += s.output_us;
  total.steps += s.steps;
  total.unique_states += s.unique_states;
  total.total_states += s.total_states;
  total.candidates += s.candidates;
}

double unique_ratio(const DecodeStats& s) {
  return s.total_states ? static_cast<double>(s.unique_states) / static_cast<double>(s.total_states) : 0.0;
}

}  // namespace

CorpusDecode decode_corpus(const Ensemble& ens, const Corpus& corpus, const DecodeConfig& config,
                           const LexTable& lex) {
  CorpusDecode out;
  out.results.reserve(corpus.size());
  const Vocab& src_vocab = ens.primary().src_vocab;
  for (const auto& words : corpus.sentences) {
    if (words.empty()) {
      out.results.emplace_back();
      continue;
    }
    const std::vector<int32_t> ids = encode_words(src_vocab, words);
    DecodeResult r = beam_search(ens.runtimes(), ids, config, lex);
    accumulate(out.stats, r.stats);
    if (!r.nbest.empty()) out.words += r.nbest.front().tokens.size();
    out.results.push_back(std::move(r));
  }
  return out;
}

void write_decode_output(std::ostream& out, const Ensemble& ens, const Corpus& corpus,
                         const CorpusDecode& decoded, const LexTable& lex, int nbest) {
  const Model& m = ens.primary();
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& words = corpus.sentences[s];
    const DecodeResult& r = decoded.results[s];
    if (r.nbest.empty()) {
      if (nbest <= 1) out << '\n';
      continue;
    }
    const std::vector<int32_t> ids = encode_words(m.src_vocab, words);
    const std::size_t shown = nbest <= 1 ? 1 : std::min<std::size_t>(nbest, r.nbest.size());
    for (std::size_t k = 0; k < shown; ++k) {
      const NBestEntry& e = r.nbest[k];
      const auto toks = unk_replace(e.tokens, e.alpha, words, ids, lex, m.trg_vocab);
      std::string line;
      for (const auto& t : toks) {
        if (!line.empty()) line += ' ';
        line += t;
      }
      if (nbest <= 1) {
        out << line << '\n';
      } else {
        std::ostringstream score;
        score.precision(6);
        score << std::fixed << e.logscore;
        out << s << " ||| " << line << " ||| " << score.str() << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Bench

std::string host_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
#if defined(__AVX2__)
  const char* isa = "avx2";
#else
  const char* isa = "scalar";
#endif
  return cpu + "; " + std::to_string(std::thread::hardware_concurrency()) + " hw threads; kernels " + isa;
}

BenchReport bench_corpus(const Ensemble& ens, const Corpus& corpus, const DecodeConfig& config,
                         const LexTable& lex, int repeat) {
  if (repeat < 1) throw InputError("repeat must be at least 1");
  std::size_t nonempty = 0;
  for (const auto& s : corpus.sentences) nonempty += !s.empty();
  if (nonempty == 0) throw InputError("bench input has no sentences");

  const CorpusDecode warm = decode_corpus(ens, corpus, config, lex);
  BenchReport rep;
  rep.flags = ens.runtimes().front()->flags();
  rep.sentences = corpus.size();
  rep.repeat = repeat;
  rep.host = host_descriptor();
  DecodeStats stats;
  const Vocab& src_vocab = ens.primary().src_vocab;
  std::vector<std::vector<int32_t>> ids;
  for (const auto& words : corpus.sentences) ids.push_back(encode_words(src_vocab, words));
  std::vector<double> fastest(corpus.size(), std::numeric_limits<double>::infinity());
  std::size_t pass_words = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < repeat; ++r) {
    pass_words = 0;
    for (std::size_t s = 0; s < corpus.size(); ++s) {
      if (ids[s].empty()) continue;
      const auto ts = std::chrono::steady_clock::now();
      const DecodeResult got = beam_search(ens.runtimes(), ids[s], config, lex);
      fastest[s] = std::min(fastest[s], std::chrono::duration<double>(std::chrono::steady_clock::now() - ts).count());
      accumulate(stats, got.stats);
      if (!got.nbest.empty()) pass_words += got.nbest.front().tokens.size();
      const auto& a = warm.results[s].nbest;
      if (a.size() != got.nbest.size()) {
        rep.deterministic = false;
        continue;
      }
      for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k].tokens != got.nbest[k].tokens || a[k].logscore != got.nbest[k].logscore) rep.deterministic = false;
    }
    rep.words += pass_words;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.words_per_sec = static_cast<double>(rep.words) / rep.wall_seconds;
  double best_pass = 0.0;
  for (std::size_t s = 0; s < corpus.size(); ++s)
    if (!ids[s].empty()) best_pass += fastest[s];
  rep.steady_words_per_sec = static_cast<double>(pass_words) / best_pass;
  rep.encode_us = stats.encode_us;
  rep.step_us = stats.step_us;
  rep.output_us = stats.output_us;
  rep.unique_state_ratio = unique_ratio(stats);
  return rep;
}

std::vector<StepFlags> flag_ladder() {
  std::vector<StepFlags> v;
  StepFlags f;
  v.push_back(f);
  f.quant16 = true;
  v.push_back(f);
  f.precomputed_embeddings = true;
  v.push_back(f);
  f.precomputed_attention = true;
  v.push_back(f);
  f.lut_activations = true;
  v.push_back(f);
  f.merge_recurrent = true;
  v.push_back(f);
  return v;
}

void write_bench_report(std::ostream& out, const std::vector<BenchReport>& reports) {
  nlohmann::json runs = nlohmann::json::array();
  const double base = reports.empty() ? 0.0 : reports.front().words_per_sec;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const BenchReport& r = reports[i];
    const std::string p = reports.size() > 1 ? "run" + std::to_string(i) + "." : "";
    const double speedup = base > 0 ? r.words_per_sec / base : 0.0;
    out << p << "flags=" << r.flags.to_string() << '\n'
        << p << "sentences=" << r.sentences << '\n'
        << p << "repeat=" << r.repeat << '\n'
        << p << "words=" << r.words << '\n'
        << p << "wall_seconds=" << r.wall_seconds << '\n'
        << p << "words_per_sec=" << r.words_per_sec << '\n'
        << p << "steady_words_per_sec=" << r.steady_words_per_sec << '\n'
        << p << "encode_us=" << r.encode_us << '\n'
        << p << "step_us=" << r.step_us << '\n'
        << p << "output_us=" << r.output_us << '\n'
        << p << "unique_state_ratio=" << r.unique_state_ratio << '\n'
        << p << "deterministic=" << (r.deterministic ? "true" : "false") << '\n';
    if (reports.size() > 1) out << p << "speedup_vs_first=" << speedup << '\n';
    runs.push_back({{"flags", r.flags.to_string()},
                    {"sentences", r.sentences},
                    {"repeat", r.repeat},
                    {"words", r.words},
                    {"wall_seconds", r.wall_seconds},
                    {"words_per_sec", r.words_per_sec},
                    {"steady_words_per_sec", r.steady_words_per_sec},
                    {"encode_us", r.encode_us},
                    {"step_us", r.step_us},
                    {"output_us", r.output_us},
                    {"unique_state_ratio", r.unique_state_ratio},
                    {"deterministic", r.deterministic},
                    {"speedup_vs_first", speedup}});
  }
  out << "host=" << (reports.empty() ? host_descriptor() : reports.front().host) << '\n';
  nlohmann::json doc = {{"host", reports.empty() ? host_descriptor() : reports.front().host},
                        {"runs", runs}};
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Verify

double default_min_identical(const StepFlags& flags) { return flags.quant16 ? 0.99 : 0.999; }

namespace {

struct PairStats {
  std::size_t identical = 0;
  std::size_t compared = 0;
  double max_diff = 0.0;
  DecodeStats opt_stats;
};

PairStats compare_runs(const Ensemble& ref, const CorpusDecode& ref_out, const Ensemble& opt,
                       const Corpus& corpus, const DecodeConfig& config, const LexTable& lex) {
  PairStats ps;
  const CorpusDecode opt_out = decode_corpus(opt, corpus, config, lex);
  ps.opt_stats = opt_out.stats;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& a = ref_out.results[s].nbest;
    const auto& b = opt_out.results[s].nbest;
    if (a.empty() && b.empty()) continue;
    ++ps.compared;
    if (a.empty() || b.empty()) continue;
    if (a.front().tokens == b.front().tokens) ++ps.identical;
    const std::vector<int32_t> ids = encode_words(ref.primary().src_vocab, corpus.sentences[s]);
    const ForcedTrace fr = force_decode(ref.runtimes(), ids, a.front().tokens, config, lex);
    const ForcedTrace fo = force_decode(opt.runtimes(), ids, a.front().tokens, config, lex);
    for (std::size_t i = 0; i < fr.logprobs.size(); ++i) {
      ps.max_diff = std::max(ps.max_diff, static_cast<double>(std::abs(fr.logprobs.data()[i] -
                                                                        fo.logprobs.data()[i])));
    }
  }
  return ps;
}

double fraction(const PairStats& ps) {
  return ps.compared ? static_cast<double>(ps.identical) / static_cast<double>(ps.compared) : 1.0;
}

}  // namespace

VerifyReport verify_corpus(const std::vector<const Model*>& models, const Corpus& corpus,
                           const DecodeConfig& config, const LexTable& lex, StepFlags flags,
                           int precompute_k, double min_identical, bool attribution) {
  const Ensemble ref(models, StepFlags::none(), precompute_k);
  const CorpusDecode ref_out = decode_corpus(ref, corpus, config, lex);

  VerifyReport rep;
  rep.flags = flags;
  rep.threshold = min_identical;
  {
    const Ensemble opt(models, flags, precompute_k);
    const PairStats ps = compare_runs(ref, ref_out, opt, corpus, config, lex);
    rep.sentences = ps.compared;
    rep.identical = ps.identical;
    rep.identical_fraction = fraction(ps);
    rep.max_logit_diff = ps.max_diff;
    rep.unique_state_ratio = unique_ratio(ps.opt_stats);
  }
  if (attribution) {
    const std::pair<bool StepFlags::*, const char*> members[] = {
        {&StepFlags::quant16, "quant16"},
        {&StepFlags::precomputed_embeddings, "preemb"},
        {&StepFlags::precomputed_attention, "preatt"},
        {&StepFlags::lut_activations, "lut"},
        {&StepFlags::merge_recurrent, "merge"}};
    for (const auto& [member, name] : members) {
      if (!(flags.*member)) continue;
      StepFlags single;
      single.*member = true;
      const Ensemble opt(models, single, precompute_k);
      const PairStats ps = compare_runs(ref, ref_out, opt, corpus, config, lex);
      rep.per_flag.push_back({name, fraction(ps), ps.max_diff});
    }
  }
  rep.passed = rep.identical_fraction >= min_identical;
  return rep;
}

void write_verify_report(std::ostream& out, const VerifyReport& r) {
  out << "flags=" << r.flags.to_string() << '\n'
      << "sentences=" << r.sentences << '\n'
      << "identical=" << r.identical << '\n'
      << "identical_fraction=" << r.identical_fraction << '\n'
      << "max_logit_diff=" << r.max_logit_diff << '\n'
      << "unique_state_ratio=" << r.unique_state_ratio << '\n';
  nlohmann::json table = nlohmann::json::array();
  for (const auto& a : r.per_flag) {
    out << "flag." << a.flag << ".identical_fraction=" << a.identical_fraction << '\n'
        << "flag." << a.flag << ".max_logit_diff=" << a.max_logit_diff << '\n';
    table.push_back({{"flag", a.flag},
                     {"identical_fraction", a.identical_fraction},
                     {"max_logit_diff", a.max_logit_diff}});
  }
  out << "threshold=" << r.threshold << '\n' << "passed=" << (r.passed ? "true" : "false") << '\n';
  const nlohmann::json doc = {{"flags", r.flags.to_string()},
                              {"sentences", r.sentences},
                              {"identical", r.identical},
                              {"identical_fraction", r.identical_fraction},
                              {"max_logit_diff", r.max_logit_diff},
                              {"unique_state_ratio", r.unique_state_ratio},
                              {"per_flag", table},
                              {"threshold", r.threshold},
                              {"passed", r.passed}};
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Command line

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitModel = 2;
constexpr int kExitVerify = 3;

// Model loading failures map to their own exit code.
struct ModelLoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecodeArgs {
  std::string model;
  std::vector<std::string> ensemble;
  std::string input;
  std::string output;
  std::string lex;
  std::string opts = "none";
  int beam = 6;
  double delta = 3.0;
  std::size_t cand_per_word = LexTable::kDefaultTopN;
  int nbest = 1;
  int precompute_k = 8000;
  int max_len = 0;
};

void add_decode_options(CLI::App* cmd, DecodeArgs& a) {
  cmd->add_option("--model", a.model, "Model file")->required();
  cmd->add_option("--ensemble", a.ensemble, "Additional ensemble member (repeatable)");
  cmd->add_option("--input", a.input, "Tokenized source sentences, one per line")->required();
  cmd->add_option("--output", a.output, "Output file (default: standard output)");
  cmd->add_option("--lex", a.lex, "Lexical table for candidate lists (default: full vocabulary)");
  cmd->add_option("--opts", a.opts, "all, none, or a list of quant16,preemb,preatt,lut,merge");
  cmd->add_option("--beam", a.beam, "Beam size")->check(CLI::PositiveNumber);
  cmd->add_option("--delta", a.delta, "Early-stopping margin (inf disables)")->check(CLI::PositiveNumber);
  cmd->add_option("--cand-per-word", a.cand_per_word, "Translations per source word")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--nbest", a.nbest, "Hypotheses per sentence")->check(CLI::PositiveNumber);
  cmd->add_option("--precompute-k", a.precompute_k, "Words covered by the embedding table")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-len", a.max_len, "Target length cap (default 2|S|+5)")->check(CLI::NonNegativeNumber);
}

struct Loaded {
  std::vector<Model> models;
  LexTable lex;
  Corpus corpus;
  DecodeConfig config;
  StepFlags flags;

  std::vector<const Model*> pointers() const {
    std::vector<const Model*> v;
    for (const auto& m : models) v.push_back(&m);
    return v;
  }
};

Loaded load_inputs(const DecodeArgs& a) {
  Loaded l;
  l.flags = StepFlags::parse(a.opts);
  l.config.beam_size = a.beam;
  l.config.delta = a.delta;
  l.config.cand_per_word = a.cand_per_word;
  l.config.nbest = a.nbest;
  l.config.max_len = a.max_len;
  l.config.validate();
  std::vector<std::string> paths{a.model};
  paths.insert(paths.end(), a.ensemble.begin(), a.ensemble.end());
  for (const auto& p : paths) {
    try {
      l.models.push_back(load_model(p));
    } catch (const std::exception& e) {
      throw ModelLoadError(e.what());
    }
  }
  for (const auto& m : l.models) {
    if (!(m.trg_vocab == l.models.front().trg_vocab)) {
      throw ModelLoadError("ensemble members must share the target vocabulary");
    }
  }
  if (!a.lex.empty()) {
    l.lex = load_lex_table(a.lex, l.models.front().src_vocab, l.models.front().trg_vocab, a.cand_per_word);
  }
  l.corpus = read_corpus(a.input);
  return l;
}

template <typename F>
void with_output(const std::string& path, std::ostream& fallback, F&& f) {
  if (path.empty()) {
    f(fallback);
    return;
  }
  std::ofstream file(path);
  if (!file) throw InputError("cannot open " + path + " for writing");
  f(file);
}

int cmd_decode(const DecodeArgs& a, std::ostream& out) {
  const Loaded l = load_inputs(a);
  const Ensemble ens(l.pointers(), l.flags, a.precompute_k);
  const CorpusDecode d = decode_corpus(ens, l.corpus, l.config, l.lex);
  with_output(a.output, out, [&](std::ostream& o) { write_decode_output(o, ens, l.corpus, d, l.lex, a.nbest); });
  return kExitOk;
}

int cmd_bench(const DecodeArgs& a, int repeat, const std::string& report, bool ladder, std::ostream& out) {
  const Loaded l = load_inputs(a);
  std::vector<BenchReport> reports;
  const std::vector<StepFlags> configs = ladder ? flag_ladder() : std::vector<StepFlags>{l.flags};
  for (const StepFlags& f : configs) {
    const Ensemble ens(l.pointers(), f, a.precompute_k);
    reports.push_back(bench_corpus(ens, l.corpus, l.config, l.lex, repeat));
  }
  write_bench_report(out, reports);
  if (!report.empty()) with_output(report, out, [&](std::ostream& o) { write_bench_report(o, reports); });
  return kExitOk;
}

int cmd_verify(const DecodeArgs& a, double min_identical, bool attribution, const std::string& report,
               std::ostream& out) {
  const Loaded l = load_inputs(a);
  const double threshold = min_identical >= 0.0 ? min_identical : default_min_identical(l.flags);
  const VerifyReport r = verify_corpus(l.pointers(), l.corpus, l.config, l.lex, l.flags, a.precompute_k,
                                       threshold, attribution);
  write_verify_report(out, r);
  if (!report.empty()) with_output(report, out, [&](std::ostream& o) { write_verify_report(o, r); });
  return r.passed ? kExitOk : kExitVerify;
}

int cmd_gen_model(const std::string& spec_path, uint64_t seed, const std::string& out_path,
                  const std::string& quantize, const std::string& src_vocab, const std::string& trg_vocab) {
  const ModelSpec spec = read_model_spec(spec_path);
  spec.validate();
  Model m = generate_random_model(spec, seed);
  if (!src_vocab.empty()) m.src_vocab = Vocab::read(src_vocab);
  if (!trg_vocab.empty()) m.trg_vocab = Vocab::read(trg_vocab);
  if (!quantize.empty()) {
    int fw = 0, fa = 0;
    char comma = 0;
    std::istringstream ss(quantize);
    if (!(ss >> fw >> comma >> fa) || comma != ',' || !ss.eof()) {
      throw InputError("--quantize expects frac_bits_w,frac_bits_a, got '" + quantize + "'");
    }
    if (fw < 8 || fw > 14) throw InputError("frac_bits_w must be in [8, 14]");
    m.add_quantized_twins(fw, fa);
  }
  m.validate();
  save_model(m, out_path);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Beam-search decoder for attentional sequence-to-sequence translation models", "nmtdec"};
  app.require_subcommand(1);

  DecodeArgs decode_args, bench_args, verify_args;
  CLI::App* decode = app.add_subcommand("decode", "Translate an input file");
  add_decode_options(decode, decode_args);

  CLI::App* bench = app.add_subcommand("bench", "Measure single-threaded decoding speed");
  add_decode_options(bench, bench_args);
  int repeat = 1;
  std::string bench_report;
  bool ladder = false;
  bench->add_option("--repeat", repeat, "Timed passes over the corpus")->check(CLI::PositiveNumber);
  bench->add_option("--report", bench_report, "Write the report to this file as well");
  bench->add_flag("--ladder", ladder, "Run the cumulative optimization ladder instead of --opts");

  CLI::App* verify = app.add_subcommand("verify", "Compare optimized decoding against the reference");
  add_decode_options(verify, verify_args);
  double min_identical = -1.0;
  bool no_attribution = false;
  std::string verify_report;
  verify->add_option("--min-identical", min_identical, "Required identical fraction")
      ->check(CLI::Range(0.0, 1.0));
  verify->add_flag("--no-attribution", no_attribution, "Skip the per-flag table");
  verify->add_option("--report", verify_report, "Write the report to this file as well");

  CLI::App* gen_model = app.add_subcommand("gen-model", "Write a seeded random model");
  std::string spec_path, model_out, quantize, src_vocab, trg_vocab;
  uint64_t seed = 1;
  gen_model->add_option("--spec", spec_path, "Model spec file (key = value)")->required();
  gen_model->add_option("--seed", seed, "Random seed");
  gen_model->add_option("--out", model_out, "Output model file")->required();
  gen_model->add_option("--quantize", quantize, "Embed 16-bit twins: frac_bits_w,frac_bits_a");
  gen_model->add_option("--src-vocab", src_vocab, "Source vocabulary, one token per line");
  gen_model->add_option("--trg-vocab", trg_vocab, "Target vocabulary, one token per line");

  CLI::App* gen_lex = app.add_subcommand("gen-lex", "Write a seeded random lexical table for a model");
  std::string lex_model, lex_out;
  std::size_t lex_top = LexTable::kDefaultTopN;
  uint64_t lex_seed = 1;
  gen_lex->add_option("--model", lex_model, "Model file")->required();
  gen_lex->add_option("--top-n", lex_top, "Translations per source word")->check(CLI::PositiveNumber);
  gen_lex->add_option("--seed", lex_seed, "Random seed");
  gen_lex->add_option("--out", lex_out, "Output file")->required();

  CLI::App* gen_input = app.add_subcommand("gen-input", "Write seeded random source sentences");
  std::size_t in_count = 200, in_min = 5, in_max = 20, in_vocab = 1000;
  uint64_t in_seed = 1;
  std::string in_out;
  gen_input->add_option("--count", in_count, "Sentences");
  gen_input->add_option("--min-len", in_min, "Shortest sentence");
  gen_input->add_option("--max-len", in_max, "Longest sentence");
  gen_input->add_option("--vocab-size", in_vocab, "Synthetic source vocabulary size");
  gen_input->add_option("--seed", in_seed, "Random seed");
  gen_input->add_option("--out", in_out, "Output file (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*decode) return cmd_decode(decode_args, out);
    if (*bench) return cmd_bench(bench_args, repeat, bench_report, ladder, out);
    if (*verify) return cmd_verify(verify_args, min_identical, !no_attribution, verify_report, out);
    if (*gen_model) {
      try {
        return cmd_gen_model(spec_path, seed, model_out, quantize, src_vocab, trg_vocab);
      } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
      }
    }
    if (*gen_lex) {
      Model m;
      try {
        m = load_model(lex_model);
      } catch (const std::exception& e) {
        throw ModelLoadError(e.what());
      }
      const LexTable lex = generate_random_lex_table(m.src_vocab.size(), m.trg_vocab.size(), lex_top, lex_seed);
      with_output(lex_out, out, [&](std::ostream& o) { write_lex_table(o, lex, m.src_vocab, m.trg_vocab); });
      return kExitOk;
    }
    if (*gen_input) {
      const Corpus c = generate_random_corpus(in_count, in_min, in_max, in_vocab, in_seed);
      with_output(in_out, out, [&](std::ostream& o) {
        for (const auto& s : c.sentences) {
          for (std::size_t i = 0; i < s.size(); ++i) o << (i ? " " : "") << s[i];
          o << '\n';
        }
      });
      return kExitOk;
    }
  } catch (const ModelLoadError& e) {
    err << "error: " << e.what() << '\n';
    return kExitModel;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitModel;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitModel;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace nmtdec
