#include "nmtdec/decoder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "nmtdec/errors.hpp"

namespace nmtdec {

void DecodeConfig::validate() const {
  if (beam_size < 1) throw InputError("beam size must be at least 1");
  if (!(delta > 0.0)) throw InputError("delta must be positive");
  if (nbest < 1) throw InputError("nbest must be at least 1");
  if (max_len < 0) throw InputError("max length must be non-negative");
  if (max_len_factor < 0 || max_len_offset < 0) throw InputError("max length factor/offset must be non-negative");
  if (cand_per_word < 1) throw InputError("candidates per word must be at least 1");
}

bool hypothesis_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.logscore != b.logscore) return a.logscore > b.logscore;
  return a.tokens < b.tokens;
}

std::vector<int32_t> build_candidate_list(const LexTable& lex, std::span<const int32_t> src_ids,
                                          std::size_t cand_per_word, std::size_t trg_vocab_size) {
  std::vector<int32_t> ids;
  if (lex.empty()) {
    for (std::size_t i = 0; i < trg_vocab_size; ++i)
      if (static_cast<int32_t>(i) != kBosId) ids.push_back(static_cast<int32_t>(i));
    return ids;
  }
  ids.push_back(kEosId);
  ids.push_back(kUnkId);
  for (int32_t s : src_ids) {
    const auto tr = lex.translations(s);
    const std::size_t n = std::min(cand_per_word, tr.size());
    for (std::size_t i = 0; i < n; ++i) ids.push_back(tr[i].target);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

MergedStates merge_states(std::span<const int32_t> state_refs) {
  MergedStates m;
  m.unique_refs.assign(state_refs.begin(), state_refs.end());
  std::sort(m.unique_refs.begin(), m.unique_refs.end());
  m.unique_refs.erase(std::unique(m.unique_refs.begin(), m.unique_refs.end()), m.unique_refs.end());
  m.gather_map.reserve(state_refs.size());
  for (int32_t r : state_refs) {
    const auto it = std::lower_bound(m.unique_refs.begin(), m.unique_refs.end(), r);
    m.gather_map.push_back(static_cast<int32_t>(it - m.unique_refs.begin()));
  }
  return m;
}

bool should_stop(double best_partial, double best_complete, bool have_complete, double delta) {
  return have_complete && best_partial < best_complete - delta;
}

Tensor ensemble_combine(std::span<const Tensor> step_logprobs) {
  if (step_logprobs.empty()) throw ShapeError("ensemble_combine needs at least one distribution");
  const Tensor& first = step_logprobs.front();
  bool all_same = true;
  for (const Tensor& t : step_logprobs) {
    if (t.rows() != first.rows() || t.cols() != first.cols()) {
      throw ShapeError("ensemble members disagree on distribution shape");
    }
    all_same = all_same && bitwise_equal(t, first);
  }
  if (all_same) return first;

  const double k = static_cast<double>(step_logprobs.size());
  Tensor out(first.rows(), first.cols());
  std::vector<double> mean(first.cols());
  for (std::size_t r = 0; r < first.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < first.cols(); ++c) {
      double s = 0.0;
      for (const Tensor& t : step_logprobs) s += t(r, c);
      mean[c] = s / k;
      mx = std::max(mx, mean[c]);
    }
    double z = 0.0;
    for (double v : mean) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < first.cols(); ++c) out(r, c) = static_cast<float>(mean[c] - lz);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double micros(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::micro>(b - a).count();
}

// Per-model decoding state for one sentence.
struct Lane {
  const Runtime* rt = nullptr;
  SourceCache cache;
  OutputShortlist shortlist;
  Tensor h;    // one row per hypothesis of the previous step
  Tensor top;  // GRU top layer state, same rows
  bool gru_top = false;
};

struct Session {
  std::vector<Lane> lanes;
  std::vector<int32_t> candidates;
  DecodeStats stats;

  Session(std::span<const Runtime* const> models, std::span<const int32_t> src_ids,
          const DecodeConfig& config, const LexTable& lex) {
    config.validate();
    if (models.empty()) throw InputError("no model given");
    if (src_ids.empty()) throw InputError("empty source sentence");
    const Model& m0 = models.front()->model();
    for (const Runtime* rt : models) {
      if (!(rt->model().trg_vocab == m0.trg_vocab) ||
          rt->model().output.rows() != m0.output.rows()) {
        throw InputError("ensemble members must share the target vocabulary");
      }
    }
    candidates = build_candidate_list(lex, src_ids, config.cand_per_word, m0.output.rows());
    stats.candidates = candidates.size();

    const auto t0 = Clock::now();
    for (const Runtime* rt : models) {
      Lane lane;
      lane.rt = rt;
      lane.cache = encode_source(*rt, src_ids);
      lane.shortlist = make_shortlist(*rt, candidates);
      lane.h = Tensor(1, rt->trg_hidden());
      lane.gru_top = rt->model().spec.top_layer == TopLayer::kGru;
      if (lane.gru_top) lane.top = Tensor(1, rt->top_dim());
      lanes.push_back(std::move(lane));
    }
    stats.encode_us += micros(t0, Clock::now());
  }

  // Advances every hypothesis by one token. Returns combined log-probs over
  // the candidates; alpha receives the first model's attention rows.
  Tensor advance(std::span<const int32_t> parents, std::span<const int32_t> prev_tokens, Tensor& alpha) {
    const MergedStates merged = merge_states(parents);
    stats.unique_states += merged.unique_refs.size();
    stats.total_states += parents.size();
    ++stats.steps;

    std::vector<Tensor> logprobs;
    logprobs.reserve(lanes.size());
    for (std::size_t li = 0; li < lanes.size(); ++li) {
      Lane& lane = lanes[li];
      const Runtime& rt = *lane.rt;
      const auto t0 = Clock::now();
      AttGruOut out = rt.flags().merge_recurrent
                          ? att_gru_step(rt, lane.h.gather_rows(merged.unique_refs), merged.gather_map,
                                         prev_tokens, lane.cache)
                          : att_gru_step(rt, lane.h.gather_rows(parents), prev_tokens, lane.cache);
      Tensor top_prev;
      if (lane.gru_top) top_prev = lane.top.gather_rows(parents);
      Tensor h_top = fc_stack_apply(rt, out.h, lane.gru_top ? &top_prev : nullptr);
      const auto t1 = Clock::now();
      logprobs.push_back(output_logits(rt, lane.shortlist, h_top));
      stats.step_us += micros(t0, t1);
      stats.output_us += micros(t1, Clock::now());
      lane.h = std::move(out.h);
      if (lane.gru_top) lane.top = std::move(h_top);
      if (li == 0) alpha = std::move(out.alpha);
    }
    const auto t2 = Clock::now();
    Tensor combined = logprobs.size() == 1 ? std::move(logprobs.front()) : ensemble_combine(logprobs);
    stats.output_us += micros(t2, Clock::now());
    return combined;
  }
};

struct Expansion {
  double score;
  int32_t hyp;
  int32_t cand;
};

NBestEntry to_entry(const Hypothesis& h, std::size_t src_len, bool keep_alpha) {
  NBestEntry e;
  e.tokens = h.tokens;
  e.logscore = h.logscore;
  e.complete = h.complete;
  if (keep_alpha) {
    e.alpha = Tensor(h.alpha_history.size(), src_len);
    for (std::size_t i = 0; i < h.alpha_history.size(); ++i)
      std::copy(h.alpha_history[i].begin(), h.alpha_history[i].end(), e.alpha.row(i).begin());
  }
  return e;
}

}  // namespace

DecodeResult beam_search(std::span<const Runtime* const> models, std::span<const int32_t> src_ids,
                         const DecodeConfig& config, const LexTable& lex) {
  Session session(models, src_ids, config, lex);
  const std::vector<int32_t>& cands = session.candidates;
  const std::size_t beam_size = static_cast<std::size_t>(config.beam_size);
  const int max_len = config.max_target_length(src_ids.size());

  std::vector<Hypothesis> beam(1);
  std::vector<Hypothesis> pool;
  std::vector<int32_t> parents, prev_tokens;
  std::vector<int32_t> order(cands.size());
  std::vector<Expansion> expansions;
  Tensor alpha;

  for (int step = 0; step < max_len && !beam.empty(); ++step) {
    parents.clear();
    prev_tokens.clear();
    for (const Hypothesis& h : beam) {
      parents.push_back(h.state_ref);
      prev_tokens.push_back(h.tokens.empty() ? kBosId : h.tokens.back());
    }
    const Tensor lp = session.advance(parents, prev_tokens, alpha);

    const auto t0 = Clock::now();
    // Only the best beam_size continuations of each hypothesis can survive.
    expansions.clear();
    const std::size_t per_hyp = std::min(beam_size, cands.size());
    for (std::size_t i = 0; i < beam.size(); ++i) {
      const auto row = lp.row(i);
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(per_hyp), order.end(),
                        [&](int32_t a, int32_t b) { return row[a] != row[b] ? row[a] > row[b] : a < b; });
      for (std::size_t j = 0; j < per_hyp; ++j) {
        const int32_t c = order[j];
        expansions.push_back({beam[i].logscore + static_cast<double>(row[c]), static_cast<int32_t>(i), c});
      }
    }
    const std::size_t keep = std::min(beam_size, expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep),
                      expansions.end(), [&](const Expansion& a, const Expansion& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.hyp != b.hyp) return beam[a.hyp].tokens < beam[b.hyp].tokens;
                        return a.cand < b.cand;
                      });

    std::vector<Hypothesis> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const Expansion& x = expansions[k];
      const Hypothesis& parent = beam[x.hyp];
      Hypothesis h;
      h.tokens = parent.tokens;
      h.tokens.push_back(cands[x.cand]);
      h.logscore = x.score;
      h.state_ref = x.hyp;
      h.complete = cands[x.cand] == kEosId;
      if (config.keep_alpha) {
        h.alpha_history = parent.alpha_history;
        const auto a = alpha.row(x.hyp);
        h.alpha_history.emplace_back(a.begin(), a.end());
      }
      (h.complete ? pool : next).push_back(std::move(h));
    }
    beam = std::move(next);
    session.stats.output_us += micros(t0, Clock::now());

    if (!beam.empty() && !pool.empty()) {
      const double best_complete =
          std::max_element(pool.begin(), pool.end(), [](const Hypothesis& a, const Hypothesis& b) {
            return a.logscore < b.logscore;
          })->logscore;
      if (should_stop(beam.front().logscore, best_complete, true, config.delta)) break;
    }
  }

  std::sort(pool.begin(), pool.end(), hypothesis_before);
  std::sort(beam.begin(), beam.end(), hypothesis_before);
  DecodeResult result;
  const std::size_t want = static_cast<std::size_t>(config.nbest);
  for (const Hypothesis& h : pool) {
    if (result.nbest.size() == want) break;
    result.nbest.push_back(to_entry(h, src_ids.size(), config.keep_alpha));
  }
  for (const Hypothesis& h : beam) {
    if (result.nbest.size() == want) break;
    result.nbest.push_back(to_entry(h, src_ids.size(), config.keep_alpha));
  }
  result.stats = session.stats;
  return result;
}

ForcedTrace force_decode(std::span<const Runtime* const> models, std::span<const int32_t> src_ids,
                         std::span<const int32_t> tokens, const DecodeConfig& config,
                         const LexTable& lex) {
  Session session(models, src_ids, config, lex);
  ForcedTrace trace;
  trace.candidates = session.candidates;
  trace.logprobs = Tensor(tokens.size(), trace.candidates.size());
  const int32_t parent = 0;
  int32_t prev = kBosId;
  Tensor alpha;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto it = std::lower_bound(trace.candidates.begin(), trace.candidates.end(), tokens[i]);
    if (it == trace.candidates.end() || *it != tokens[i]) {
      throw InputError("forced token " + std::to_string(tokens[i]) + " is not a candidate");
    }
    const Tensor lp = session.advance({&parent, 1}, {&prev, 1}, alpha);
    std::copy(lp.row(0).begin(), lp.row(0).end(), trace.logprobs.row(i).begin());
    const double v = lp(0, static_cast<std::size_t>(it - trace.candidates.begin()));
    trace.token_logprobs.push_back(v);
    trace.total += v;
    prev = tokens[i];
  }
  return trace;
}

std::vector<std::string> unk_replace(std::span<const int32_t> tokens, const Tensor& alpha,
                                     std::span<const std::string> src_words,
                                     std::span<const int32_t> src_ids, const LexTable& lex,
                                     const Vocab& trg_vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int32_t t = tokens[i];
    if (t == kEosId) continue;
    if (t != kUnkId || i >= alpha.rows() || alpha.cols() == 0) {
      out.push_back(trg_vocab.token(t));
      continue;
    }
    const auto row = alpha.row(i);
    const std::size_t j = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const int32_t sid = j < src_ids.size() ? src_ids[j] : kUnkId;
    const auto tr = sid == kUnkId ? std::span<const LexEntry>{} : lex.translations(sid);
    if (!tr.empty()) {
      out.push_back(trg_vocab.token(tr.front().target));
    } else if (j < src_words.size()) {
      out.push_back(src_words[j]);
    } else {
      out.push_back(trg_vocab.token(kUnkId));
    }
  }
  return out;
}

}  // namespace nmtdec
