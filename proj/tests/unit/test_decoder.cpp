#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "nmtdec/decoder.hpp"
#include "nmtdec/errors.hpp"
#include "oracle.hpp"

using namespace nmtdec;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.src_vocab_size = 10;
  s.trg_vocab_size = 8;
  s.embed_dim = 4;
  s.src_layers = 1;
  s.src_hidden = 6;
  s.trg_hidden = 6;
  s.fc_layers = 1;
  s.fc_dims = {6};
  s.init_range = 1.0f;
  s.precompute_k = 0;
  return s;
}

std::vector<int32_t> random_sentence(std::mt19937_64& rng, std::size_t len, int vocab) {
  std::vector<int32_t> s(len);
  for (auto& id : s) id = 3 + static_cast<int32_t>(rng() % static_cast<uint64_t>(vocab - 3));
  return s;
}

std::string join(const std::vector<int32_t>& v) {
  std::string s;
  for (int32_t x : v) s += std::to_string(x) + " ";
  return s;
}

DecodeResult decode_one(const Runtime& rt, std::span<const int32_t> src, const DecodeConfig& cfg,
                        const LexTable& lex = {}) {
  const Runtime* p = &rt;
  return beam_search({&p, 1}, src, cfg, lex);
}

}  // namespace

TEST_CASE("candidate list") {
  const LexTable empty;
  const auto all = build_candidate_list(empty, std::vector<int32_t>{3, 4}, 20, 10);
  CHECK(all == std::vector<int32_t>{1, 2, 3, 4, 5, 6, 7, 8, 9});

  std::vector<std::vector<LexEntry>> by_source(6);
  by_source[3] = {{7, 0.5f}, {5, 0.3f}, {9, 0.1f}};
  by_source[4] = {{5, 0.6f}, {8, 0.2f}};
  const LexTable lex(by_source, 20);
  CHECK(build_candidate_list(lex, std::vector<int32_t>{3, 4, 3}, 20, 10) ==
        std::vector<int32_t>{1, 2, 5, 7, 8, 9});
  CHECK(build_candidate_list(lex, std::vector<int32_t>{3, 4}, 1, 10) == std::vector<int32_t>{1, 2, 5, 7});
  CHECK(build_candidate_list(lex, std::vector<int32_t>{5}, 20, 10) == std::vector<int32_t>{1, 2});

  // 3 source words with 20 distinct translations each, sharing none.
  std::vector<std::vector<LexEntry>> wide(6);
  for (int w = 0; w < 3; ++w)
    for (int t = 0; t < 20; ++t) wide[3 + w].push_back({3 + w * 20 + t, 1.0f - 0.01f * t});
  const LexTable lw(wide, 20);
  CHECK(build_candidate_list(lw, std::vector<int32_t>{3, 4, 5}, 20, 100).size() == 62);
}

TEST_CASE("merge states") {
  const MergedStates ex = merge_states(std::vector<int32_t>{0, 0, 1, 2, 2, 2});
  CHECK(ex.unique_refs == std::vector<int32_t>{0, 1, 2});
  CHECK(ex.gather_map == std::vector<int32_t>{0, 0, 1, 2, 2, 2});
  CHECK(merge_states(std::vector<int32_t>(6, 0)).unique_refs.size() == 1);
  const std::vector<int32_t> refs = {2, 0, 2, 5, 0};
  const MergedStates m = merge_states(refs);
  CHECK(m.unique_refs == std::vector<int32_t>{0, 2, 5});
  CHECK(m.gather_map == std::vector<int32_t>{1, 0, 1, 2, 0});
  const MergedStates same = merge_states(std::vector<int32_t>{3, 3, 3, 3});
  CHECK(same.unique_refs == std::vector<int32_t>{3});
  CHECK(same.gather_map == std::vector<int32_t>{0, 0, 0, 0});
  const MergedStates distinct = merge_states(std::vector<int32_t>{0, 1, 2});
  CHECK(distinct.unique_refs.size() == 3);
}

TEST_CASE("early stopping rule") {
  CHECK(should_stop(-4.1, -1.0, true, 3.0));
  CHECK_FALSE(should_stop(-3.9, -1.0, true, 3.0));
  CHECK_FALSE(should_stop(-10.0, -5.0, false, 3.0));
  CHECK(should_stop(-10.0, -5.0, true, 3.0));
  CHECK_FALSE(should_stop(-7.0, -5.0, true, 3.0));
  CHECK_FALSE(should_stop(-8.0, -5.0, true, 3.0));
  CHECK_FALSE(should_stop(-1e9, -5.0, true, kNoEarlyStop));
}

TEST_CASE("ensemble combination") {
  std::mt19937_64 rng(1);
  Tensor a = oracle::random_tensor(2, 5, rng, -4.0f, 0.0f);
  for (std::size_t i = 0; i < 2; ++i) log_softmax_inplace(a.row(i));
  CHECK(bitwise_equal(ensemble_combine(std::vector<Tensor>{a}), a));
  CHECK(bitwise_equal(ensemble_combine(std::vector<Tensor>{a, a, a}), a));

  Tensor b = oracle::random_tensor(2, 5, rng, -4.0f, 0.0f);
  for (std::size_t i = 0; i < 2; ++i) log_softmax_inplace(b.row(i));
  const Tensor c = ensemble_combine(std::vector<Tensor>{a, b});
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<double> g(5);
    double z = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      g[j] = std::sqrt(std::exp(static_cast<double>(a(i, j))) * std::exp(static_cast<double>(b(i, j))));
      z += g[j];
    }
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(c(i, j) - std::log(g[j] / z)) <= 1e-6);
  }
  CHECK_THROWS(ensemble_combine(std::vector<Tensor>{}));
  CHECK_THROWS(ensemble_combine(std::vector<Tensor>{a, Tensor(2, 4)}));
}

TEST_CASE("decode config validation") {
  DecodeConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.max_target_length(7) == 19);
  c.max_len = 4;
  CHECK(c.max_target_length(7) == 4);
  c.beam_size = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = DecodeConfig{};
  c.nbest = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = DecodeConfig{};
  c.delta = -1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("beam size one is greedy decoding") {
  const Model m = generate_random_model(oracle::small_spec(), 31);
  const Runtime rt(m, StepFlags::none());
  std::mt19937_64 rng(2);
  DecodeConfig cfg;
  cfg.beam_size = 1;
  for (int rep = 0; rep < 10; ++rep) {
    const auto src = random_sentence(rng, 2 + rng() % 8, 60);
    const DecodeResult r = decode_one(rt, src, cfg);
    REQUIRE(r.nbest.size() == 1);

    const auto s = oracle::encode(m, src);
    const auto cands = build_candidate_list({}, src, 20, 50);
    oracle::DecoderState st{oracle::Vec(20, 0.0f), kBosId};
    std::vector<int32_t> greedy;
    double score = 0.0;
    for (int t = 0; t < cfg.max_target_length(src.size()); ++t) {
      const auto lp = oracle::step(m, s, st, cands);
      const std::size_t best = std::max_element(lp.begin(), lp.end()) - lp.begin();
      greedy.push_back(cands[best]);
      score += lp[best];
      st.prev = cands[best];
      if (cands[best] == kEosId) break;
    }
    INFO("beam " << join(r.nbest[0].tokens) << " greedy " << join(greedy));
    CHECK(r.nbest[0].tokens == greedy);
    CHECK(std::abs(r.nbest[0].logscore - score) <= 1e-4);
    CHECK(r.nbest[0].complete == (greedy.back() == kEosId));
  }
}

TEST_CASE("a wide beam finds the exhaustive best") {
  DecodeConfig cfg;
  cfg.beam_size = 4096;
  cfg.delta = kNoEarlyStop;
  cfg.max_len = 4;
  std::mt19937_64 rng(3);
  for (uint64_t seed = 0; seed < 12; ++seed) {
    const Model m = generate_random_model(tiny_spec(), 100 + seed);
    const Runtime rt(m, StepFlags::none());
    const auto src = random_sentence(rng, 1 + rng() % 4, 10);
    const DecodeResult r = decode_one(rt, src, cfg);
    const auto s = oracle::encode(m, src);
    const auto cands = build_candidate_list({}, src, 20, 8);
    oracle::Best best;
    std::vector<int32_t> prefix;
    oracle::enumerate(m, s, {oracle::Vec(6, 0.0f), kBosId}, cands, prefix, 0.0, 4, best);
    REQUIRE(best.score > -INFINITY);
    CHECK(r.nbest[0].tokens == best.tokens);
    CHECK(std::abs(r.nbest[0].logscore - best.score) <= 1e-5);
  }
}

TEST_CASE("replayed scores match the search") {
  const Model m = generate_random_model(oracle::small_spec(), 32);
  const Runtime rt(m, StepFlags::none());
  const Runtime* p = &rt;
  DecodeConfig cfg;
  cfg.nbest = 4;
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 5; ++rep) {
    const auto src = random_sentence(rng, 3 + rng() % 6, 60);
    const DecodeResult r = beam_search({&p, 1}, src, cfg, {});
    REQUIRE(!r.nbest.empty());
    for (std::size_t i = 0; i < r.nbest.size(); ++i) {
      const ForcedTrace t = force_decode({&p, 1}, src, r.nbest[i].tokens, cfg, {});
      CHECK(std::abs(t.total - r.nbest[i].logscore) <= 1e-5);
      if (i > 0 && r.nbest[i].complete == r.nbest[i - 1].complete)
        CHECK(r.nbest[i].logscore <= r.nbest[i - 1].logscore);
    }
  }
}

TEST_CASE("forced decoding rejects tokens outside the candidate list") {
  const Model m = generate_random_model(oracle::small_spec(), 33);
  const Runtime rt(m, StepFlags::none());
  const Runtime* p = &rt;
  std::vector<std::vector<LexEntry>> by_source(60);
  by_source[5] = {{9, 0.9f}};
  const LexTable lex(by_source, 20);
  const std::vector<int32_t> src = {5};
  CHECK_NOTHROW(force_decode({&p, 1}, src, std::vector<int32_t>{9, 2, 1}, DecodeConfig{}, lex));
  CHECK_THROWS_AS(force_decode({&p, 1}, src, std::vector<int32_t>{10}, DecodeConfig{}, lex), InputError);
}

TEST_CASE("early stopping only prunes hypotheses it cannot lose") {
  std::mt19937_64 rng(5);
  for (uint64_t seed = 0; seed < 6; ++seed) {
    const Model m = generate_random_model(oracle::small_spec(), 200 + seed);
    const Runtime rt(m, StepFlags::none());
    const auto src = random_sentence(rng, 4 + rng() % 6, 60);
    DecodeConfig on, off;
    off.delta = kNoEarlyStop;
    const DecodeResult a = decode_one(rt, src, on), b = decode_one(rt, src, off);
    CHECK(a.stats.steps <= b.stats.steps);
    // Continuing can only add completions, so the unpruned best is at least as good.
    if (a.nbest[0].complete && b.nbest[0].complete) CHECK(b.nbest[0].logscore >= a.nbest[0].logscore);
  }
}

TEST_CASE("decoding is deterministic and flags preserve the output") {
  const Model m = generate_random_model(oracle::small_spec(), 34);
  StepFlags f = StepFlags::all();
  f.quant16 = false;
  const Runtime ref(m, StepFlags::none()), opt(m, f);
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const auto src = random_sentence(rng, 2 + rng() % 10, 60);
    const DecodeResult a = decode_one(ref, src, {}), b = decode_one(ref, src, {}), c = decode_one(opt, src, {});
    CHECK(a.nbest[0].tokens == b.nbest[0].tokens);
    CHECK(a.nbest[0].logscore == b.nbest[0].logscore);
    CHECK(a.nbest[0].tokens == c.nbest[0].tokens);
  }
}

TEST_CASE("an ensemble of identical members equals the single model") {
  const Model m = generate_random_model(oracle::small_spec(), 35);
  const Runtime rt(m, StepFlags::none());
  const Runtime* three[] = {&rt, &rt, &rt};
  const Runtime* one[] = {&rt};
  const std::vector<int32_t> src = {4, 9, 12, 33};
  const DecodeResult a = beam_search(one, src, {}, {}), b = beam_search(three, src, {}, {});
  CHECK(a.nbest[0].tokens == b.nbest[0].tokens);
  CHECK(a.nbest[0].logscore == b.nbest[0].logscore);

  ModelSpec other = oracle::small_spec();
  other.trg_vocab_size = 40;
  const Model m2 = generate_random_model(other, 1);
  const Runtime rt2(m2, StepFlags::none());
  const Runtime* mixed[] = {&rt, &rt2};
  CHECK_THROWS_AS(beam_search(mixed, src, {}, {}), InputError);
}

TEST_CASE("n-best output and attention rows") {
  const Model m = generate_random_model(oracle::small_spec(), 36);
  const Runtime rt(m, StepFlags::none());
  DecodeConfig cfg;
  cfg.nbest = 3;
  const std::vector<int32_t> src = {4, 9, 12};
  const DecodeResult r = decode_one(rt, src, cfg);
  CHECK(r.nbest.size() == 3);
  for (const NBestEntry& e : r.nbest) {
    CHECK(e.logscore <= 0.0);
    CHECK(e.complete == (!e.tokens.empty() && e.tokens.back() == kEosId));
    CHECK(e.alpha.rows() == e.tokens.size());
    CHECK(e.alpha.cols() == 3);
    for (std::size_t i = 0; i < e.alpha.rows(); ++i) {
      double z = 0;
      for (float v : e.alpha.row(i)) z += v;
      CHECK(std::abs(z - 1.0) <= 1e-5);
    }
  }
  cfg.keep_alpha = false;
  CHECK(decode_one(rt, src, cfg).nbest[0].alpha.empty());
  CHECK_THROWS_AS(decode_one(rt, std::vector<int32_t>{}, cfg), InputError);
}

TEST_CASE("merge statistics") {
  const Model m = generate_random_model(oracle::small_spec(), 37);
  const Runtime rt(m, StepFlags::none());
  const DecodeResult r = decode_one(rt, std::vector<int32_t>{4, 9, 12, 20, 22}, {});
  CHECK(r.stats.steps > 0);
  CHECK(r.stats.unique_states <= r.stats.total_states);
  CHECK(r.stats.unique_states >= r.stats.steps);
  CHECK(r.stats.candidates == 49);
}

TEST_CASE("unknown word replacement") {
  const Vocab trg_vocab({"<s>", "</s>", "<unk>", "the", "house", "small"});
  std::vector<std::vector<LexEntry>> by_source(7);
  by_source[5] = {{4, 0.8f}, {3, 0.1f}};  // "maison"
  by_source[3] = {{3, 0.9f}};             // "la"
  const LexTable lex(by_source, 20);
  const std::vector<std::string> words = {"la", "Zorglub", "maison"};
  const std::vector<int32_t> ids = {3, 6, 5};
  Tensor alpha(3, 3);
  alpha(0, 2) = 0.9f;
  alpha(0, 0) = 0.1f;
  alpha(1, 1) = 0.7f;
  alpha(1, 2) = 0.3f;
  alpha(2, 0) = 1.0f;

  // Attention argmax at position 2, whose word translates to "house".
  CHECK(unk_replace(std::vector<int32_t>{2}, alpha, words, ids, lex, trg_vocab) ==
        std::vector<std::string>{"house"});
  // A word without translations is copied.
  CHECK(unk_replace(std::vector<int32_t>{3, 2, 1}, alpha, words, ids, lex, trg_vocab) ==
        std::vector<std::string>{"the", "Zorglub"});
  // No unk: unchanged, sentence-end dropped.
  CHECK(unk_replace(std::vector<int32_t>{3, 5, 4, 1}, alpha, words, ids, lex, trg_vocab) ==
        std::vector<std::string>{"the", "small", "house"});
  // Source words outside the vocabulary are copied too.
  const std::vector<int32_t> unk_ids = {3, 6, kUnkId};
  CHECK(unk_replace(std::vector<int32_t>{2}, alpha, words, unk_ids, lex, trg_vocab) ==
        std::vector<std::string>{"maison"});
}

TEST_CASE("wider beams never score worse on the seeded instances") {
  std::mt19937_64 rng(7);
  int worse = 0, total = 0;
  for (uint64_t seed = 0; seed < 4; ++seed) {
    const Model m = generate_random_model(oracle::small_spec(), 300 + seed);
    const Runtime rt(m, StepFlags::none());
    for (int rep = 0; rep < 5; ++rep) {
      const auto src = random_sentence(rng, 3 + rng() % 6, 60);
      double prev = -INFINITY;
      for (int b : {1, 2, 4, 8, 16}) {
        DecodeConfig cfg;
        cfg.beam_size = b;
        cfg.delta = kNoEarlyStop;
        const DecodeResult r = decode_one(rt, src, cfg);
        if (!r.nbest[0].complete) continue;
        worse += r.nbest[0].logscore < prev - 1e-9;
        prev = std::max(prev, r.nbest[0].logscore);
        ++total;
      }
    }
  }
  MESSAGE("beam width decreases: " << worse << " of " << total);
  CHECK(total > 0);
  CHECK(worse == 0);
}
