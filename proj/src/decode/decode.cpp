#include "ncd/decode/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ncd/core/error.hpp"
#include "ncd/core/vocabulary.hpp"

namespace ncd {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kEnumerationLimit = 1e6;

enum class Mode { ours, liu };

bool finite_score(double v) { return v > kNegInf && !std::isnan(v); }

/// Sum of per-step log-probs of tokens[1..]; tokens[0] is <sos>.
double prefix_logprob(const Scorer& scorer, const Condition& condition, std::span<const TokenId> tokens) {
  double sum = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    sum += scorer.next_token_logprobs(condition, tokens.first(i))(tokens[i]);
  }
  return sum;
}

/// Higher score first, then the lexicographically smaller sequence.
bool better(double a, const TokenSeq& ta, double b, const TokenSeq& tb) {
  if (a != b) return a > b;
  return ta < tb;
}

/// Shared state of one decoding call.
class Search {
 public:
  Search(const ScorerSet& scorers, const Condition& condition, const ScalingConfig& scaling, const BeamConfig& cfg)
      : scorers_(scorers),
        condition_(condition),
        scaling_(scaling),
        cfg_(cfg),
        lm_condition_(Condition::response_lm(condition.context)) {
    if (!scorers_.direct) throw ConfigError("decoding needs a direct scorer");
    if (condition_.role != Role::direct || !condition_.document) {
      throw ConfigError("decoders take a direct condition with a document");
    }
    scaling_.validate();
    cfg_.validate();
    if (scaling_.lambda_channel != 0.0 && !scorers_.channel) throw ConfigError("channel weight set but no channel scorer");
    if (scaling_.lambda_lm != 0.0 && !scorers_.lm) throw ConfigError("LM weight set but no response LM");
    alphabet_ = generation_alphabet(scorers_.direct->vocab_size(), cfg_.banned_tokens);
    framed_document_ = frame(*condition_.document);
  }

  /// Beam search; `width` is k (ours) or k2 (Liu), `expansions` limits the
  /// proposals per entry in Liu mode.
  DecodeResult run(Mode mode, int width, int expansions) {
    Hypothesis root;
    root.tokens = {Vocabulary::kSos};
    refresh(root, nullptr);
    std::vector<Hypothesis> beam{root};
    std::vector<Hypothesis> pool;
    std::vector<Hypothesis> last_active = beam;

    while (!beam.empty() && pool.size() < static_cast<std::size_t>(width)) {
      auto survivors = mode == Mode::ours ? step_ours(beam, width) : step_liu(beam, width, expansions);
      beam.clear();
      for (auto& h : survivors) (h.finished ? pool : beam).push_back(std::move(h));
      if (!beam.empty()) last_active = beam;
    }

    DecodeResult result;
    if (pool.empty()) {
      if (last_active.size() == 1 && last_active[0].tokens.size() == 1) {
        throw ScorerError("no hypothesis with a finite score");
      }
      result.nbest.complete = false;
      pool = std::move(last_active);
    }
    sort_nbest(pool);
    result.best = select(pool, cfg_.length_normalize_final);
    result.nbest.hypotheses = std::move(pool);
    return result;
  }

 private:
  struct Candidate {
    std::size_t parent;
    TokenId token;
    double rank;
    double q;
  };

  std::span<const TokenId> allowed(const Hypothesis& h) const {
    static constexpr TokenId kEosOnly[] = {Vocabulary::kEos};
    if (h.tokens.size() - 1 >= static_cast<std::size_t>(cfg_.max_len)) return kEosOnly;
    return alphabet_;
  }

  LogProbVector direct_row(const Hypothesis& h) const { return scorers_.direct->next_token_logprobs(condition_, h.tokens); }

  Hypothesis extend(const Hypothesis& parent, TokenId token, double q) const {
    Hypothesis child;
    child.tokens = parent.tokens;
    child.tokens.push_back(token);
    child.finished = token == Vocabulary::kEos;
    child.breakdown.direct_lp = parent.breakdown.direct_lp + q;
    refresh(child, &parent);
    return child;
  }

  /// Channel on the new prefix (complete once finished) and the response LM.
  void refresh(Hypothesis& h, const Hypothesis* parent) const {
    if (scorers_.channel) {
      auto cond = Condition::channel(condition_.context, h.response(), h.finished);
      h.breakdown.channel_lp = scorers_.channel->sequence_logprob(cond, framed_document_);
    }
    if (scorers_.lm) {
      if (cfg_.incremental_lm && parent) {
        const auto row = scorers_.lm->next_token_logprobs(lm_condition_, parent->tokens);
        h.breakdown.lm_lp = parent->breakdown.lm_lp + row(h.tokens.back());
      } else {
        h.breakdown.lm_lp = prefix_logprob(*scorers_.lm, lm_condition_, h.tokens);
      }
    }
    h.combined = combined_score(h.breakdown, scaling_);
  }

  std::vector<Hypothesis> step_ours(const std::vector<Hypothesis>& beam, int k) const {
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < beam.size(); ++i) {
      const auto q = direct_row(beam[i]);
      for (TokenId v : allowed(beam[i])) {
        const double rank = q(v) + beam[i].combined;
        if (finite_score(rank)) candidates.push_back({i, v, rank, q(v)});
      }
    }
    // candidates of one step have equal length, so parent then token is the
    // lexicographic order of the extended sequences
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.rank != b.rank) return a.rank > b.rank;
      if (a.parent != b.parent) return beam[a.parent].tokens < beam[b.parent].tokens;
      return a.token < b.token;
    });
    if (candidates.size() > static_cast<std::size_t>(k)) candidates.resize(static_cast<std::size_t>(k));
    std::vector<Hypothesis> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(extend(beam[c.parent], c.token, c.q));
    return out;
  }

  std::vector<Hypothesis> step_liu(const std::vector<Hypothesis>& beam, int k2, int k1) const {
    std::vector<Hypothesis> pool;
    for (const auto& entry : beam) {
      const auto q = direct_row(entry);
      std::vector<TokenId> tokens;
      for (TokenId v : allowed(entry)) {
        if (finite_score(q(v))) tokens.push_back(v);
      }
      std::sort(tokens.begin(), tokens.end(), [&](TokenId a, TokenId b) { return q(a) != q(b) ? q(a) > q(b) : a < b; });
      if (tokens.size() > static_cast<std::size_t>(k1)) tokens.resize(static_cast<std::size_t>(k1));
      for (TokenId v : tokens) {
        auto child = extend(entry, v, q(v));
        if (finite_score(child.combined)) pool.push_back(std::move(child));
      }
    }
    sort_nbest(pool);
    if (pool.size() > static_cast<std::size_t>(k2)) pool.resize(static_cast<std::size_t>(k2));
    return pool;
  }

  static Hypothesis select(const std::vector<Hypothesis>& hyps, bool length_normalize) {
    const Hypothesis* best = &hyps.front();
    for (const auto& h : hyps) {
      if (better(selection_score(h, length_normalize), h.tokens, selection_score(*best, length_normalize), best->tokens)) {
        best = &h;
      }
    }
    return *best;
  }

  const ScorerSet& scorers_;
  const Condition& condition_;
  ScalingConfig scaling_;
  BeamConfig cfg_;
  Condition lm_condition_;
  std::vector<TokenId> alphabet_;
  TokenSeq framed_document_;
};

Provenance make_provenance(DecoderKind kind, const ScalingConfig& scaling, const BeamConfig& cfg) {
  Provenance p;
  p.decoder = to_string(kind);
  p.scaling = scaling;
  p.beam = cfg;
  p.effective_beam = effective_beam_size(kind, cfg);
  return p;
}

}  // namespace

void ScalingConfig::validate() const {
  for (double v : {lambda_direct, lambda_channel, lambda_lm}) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("scaling factors must be finite and >= 0");
  }
}

void BeamConfig::validate() const {
  if (beam < 1) throw ConfigError("beam must be >= 1");
  if (liu_k1 < 1 || liu_k2 < 1) throw ConfigError("liu_k1 and liu_k2 must be >= 1");
  if (max_len < 0) throw ConfigError("max_len must be >= 0");
}

const char* to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::direct: return "direct";
    case DecoderKind::rerank: return "rerank";
    case DecoderKind::online_ours: return "online-ours";
    case DecoderKind::online_liu: return "online-liu";
    case DecoderKind::oracle: return "oracle";
  }
  return "?";
}

DecoderKind parse_decoder_kind(const std::string& text) {
  for (auto kind : {DecoderKind::direct, DecoderKind::rerank, DecoderKind::online_ours, DecoderKind::online_liu,
                    DecoderKind::oracle}) {
    if (text == to_string(kind)) return kind;
  }
  throw ConfigError("unknown decoder '" + text + "' (direct | rerank | online-ours | online-liu | oracle)");
}

int effective_beam_size(DecoderKind kind, const BeamConfig& cfg) {
  return kind == DecoderKind::online_liu ? cfg.liu_k1 * cfg.liu_k2 : cfg.beam;
}

ScalingConfig default_scaling(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::direct: return ScalingConfig::direct_only();
    case DecoderKind::rerank: return ScalingConfig::rerank_default();
    default: return ScalingConfig::online_default();
  }
}

TokenSeq Hypothesis::response() const {
  TokenSeq out;
  for (auto t : tokens) {
    if (t != Vocabulary::kSos && t != Vocabulary::kEos) out.push_back(t);
  }
  return out;
}

double combined_score(const ScoreBreakdown& b, const ScalingConfig& s) {
  double sum = 0.0;
  if (s.lambda_direct != 0.0) sum += s.lambda_direct * b.direct_lp;
  if (s.lambda_channel != 0.0) sum += s.lambda_channel * b.channel_lp;
  if (s.lambda_lm != 0.0) sum += s.lambda_lm * b.lm_lp;
  return sum;
}

double combined_score(const Hypothesis& hyp, const ScalingConfig& scaling) {
  return combined_score(hyp.breakdown, scaling);
}

double selection_score(const Hypothesis& hyp, bool length_normalize) {
  if (!length_normalize || hyp.length() == 0) return hyp.combined;
  return hyp.combined / static_cast<double>(hyp.length());
}

void sort_nbest(std::vector<Hypothesis>& hyps) {
  std::sort(hyps.begin(), hyps.end(),
            [](const Hypothesis& a, const Hypothesis& b) { return better(a.combined, a.tokens, b.combined, b.tokens); });
}

std::vector<TokenId> generation_alphabet(std::size_t vocab_size, std::span<const TokenId> banned) {
  std::vector<TokenId> out;
  for (TokenId t = 0; static_cast<std::size_t>(t) < vocab_size; ++t) {
    if (t == Vocabulary::kSos || t == Vocabulary::kUnk || t == Vocabulary::kSep) continue;
    if (std::find(banned.begin(), banned.end(), t) != banned.end()) continue;
    out.push_back(t);
  }
  return out;
}

NBestList beam_search_direct(const Scorer& direct, const Condition& condition, const BeamConfig& cfg) {
  ScorerSet scorers{&direct, nullptr, nullptr};
  auto result = Search(scorers, condition, ScalingConfig::direct_only(), cfg).run(Mode::ours, cfg.beam, 0);
  auto& hyps = result.nbest.hypotheses;
  if (hyps.size() > static_cast<std::size_t>(cfg.beam)) hyps.resize(static_cast<std::size_t>(cfg.beam));
  result.nbest.provenance = make_provenance(DecoderKind::direct, ScalingConfig::direct_only(), cfg);
  return std::move(result.nbest);
}

NBestList beam_search_direct_limited(const Scorer& direct, const Condition& condition, const BeamConfig& cfg,
                                     int expansions) {
  if (expansions < 1) throw ConfigError("expansions must be >= 1");
  ScorerSet scorers{&direct, nullptr, nullptr};
  auto result = Search(scorers, condition, ScalingConfig::direct_only(), cfg).run(Mode::liu, cfg.beam, expansions);
  auto& hyps = result.nbest.hypotheses;
  if (hyps.size() > static_cast<std::size_t>(cfg.beam)) hyps.resize(static_cast<std::size_t>(cfg.beam));
  result.nbest.provenance = make_provenance(DecoderKind::direct, ScalingConfig::direct_only(), cfg);
  return std::move(result.nbest);
}

DecodeResult rerank(const NBestList& nbest, const ScorerSet& scorers, const Condition& condition,
                    const ScalingConfig& scaling) {
  scaling.validate();
  if (nbest.hypotheses.empty()) throw ConfigError("rerank needs a non-empty n-best list");
  if (!condition.document) throw ConfigError("rerank needs the grounding document");
  if (scaling.lambda_channel != 0.0 && !scorers.channel) throw ConfigError("channel weight set but no channel scorer");
  if (scaling.lambda_lm != 0.0 && !scorers.lm) throw ConfigError("LM weight set but no response LM");
  const bool any_finished = std::any_of(nbest.hypotheses.begin(), nbest.hypotheses.end(),
                                        [](const Hypothesis& h) { return h.finished; });
  const bool all_finished = std::all_of(nbest.hypotheses.begin(), nbest.hypotheses.end(),
                                        [](const Hypothesis& h) { return h.finished; });
  if (any_finished && !all_finished) throw ConfigError("rerank input mixes finished and unfinished hypotheses");

  const auto framed_document = frame(*condition.document);
  const auto lm_condition = Condition::response_lm(condition.context);
  DecodeResult result;
  result.nbest.provenance = nbest.provenance;
  result.nbest.provenance.decoder = to_string(DecoderKind::rerank);
  result.nbest.provenance.scaling = scaling;
  result.nbest.complete = nbest.complete;
  for (std::size_t r = 0; r < nbest.hypotheses.size(); ++r) {
    Hypothesis h = nbest.hypotheses[r];
    try {
      if (scorers.channel) {
        auto cond = Condition::channel(condition.context, h.response(), h.finished);
        h.breakdown.channel_lp = scorers.channel->sequence_logprob(cond, framed_document);
      }
      if (scorers.lm) h.breakdown.lm_lp = prefix_logprob(*scorers.lm, lm_condition, h.tokens);
    } catch (const ScorerError& e) {
      result.warnings.push_back("hypothesis " + std::to_string(r) + " excluded: " + e.what());
      continue;
    }
    h.combined = combined_score(h.breakdown, scaling);
    result.nbest.hypotheses.push_back(std::move(h));
  }
  if (result.nbest.hypotheses.empty()) throw ScorerError("rerank: every hypothesis failed to score");
  sort_nbest(result.nbest.hypotheses);
  result.best = result.nbest.hypotheses.front();
  return result;
}

DecodeResult online_decode(const ScorerSet& scorers, const Condition& condition, const ScalingConfig& scaling,
                           const BeamConfig& cfg) {
  if (!scorers.channel || !scorers.lm) throw ConfigError("online decoding needs channel and LM scorers");
  auto result = Search(scorers, condition, scaling, cfg).run(Mode::ours, cfg.beam, 0);
  result.nbest.provenance = make_provenance(DecoderKind::online_ours, scaling, cfg);
  return result;
}

DecodeResult online_decode_liu(const ScorerSet& scorers, const Condition& condition, const ScalingConfig& scaling,
                               const BeamConfig& cfg) {
  if (!scorers.channel || !scorers.lm) throw ConfigError("online decoding needs channel and LM scorers");
  auto result = Search(scorers, condition, scaling, cfg).run(Mode::liu, cfg.liu_k2, cfg.liu_k1);
  result.nbest.provenance = make_provenance(DecoderKind::online_liu, scaling, cfg);
  return result;
}

OracleResult enumerate_oracle(const ScorerSet& scorers, const Condition& condition, const ScalingConfig& scaling,
                              int max_len, bool length_normalize, std::span<const TokenId> banned) {
  scaling.validate();
  if (!scorers.direct) throw ConfigError("oracle needs a direct scorer");
  if (!condition.document) throw ConfigError("oracle needs the grounding document");
  if (max_len < 0) throw ConfigError("max_len must be >= 0");
  if (scaling.lambda_channel != 0.0 && !scorers.channel) throw ConfigError("channel weight set but no channel scorer");
  if (scaling.lambda_lm != 0.0 && !scorers.lm) throw ConfigError("LM weight set but no response LM");

  std::vector<TokenId> alphabet;
  for (auto t : generation_alphabet(scorers.direct->vocab_size(), banned)) {
    if (t != Vocabulary::kEos) alphabet.push_back(t);
  }
  const double space = std::pow(static_cast<double>(alphabet.size()), max_len);
  if (space > kEnumerationLimit) {
    throw ConfigError("enumerability guard: " + std::to_string(alphabet.size()) + "^" + std::to_string(max_len) +
                      " response strings exceed 1e6");
  }

  const auto framed_document = frame(*condition.document);
  const auto lm_condition = Condition::response_lm(condition.context);
  OracleResult out;
  std::vector<std::size_t> digits;
  for (int len = 0; len <= max_len; ++len) {
    digits.assign(static_cast<std::size_t>(len), 0);
    for (;;) {
      Hypothesis h;
      h.tokens.push_back(Vocabulary::kSos);
      for (auto d : digits) h.tokens.push_back(alphabet[d]);
      h.tokens.push_back(Vocabulary::kEos);
      h.finished = true;
      h.breakdown.direct_lp = prefix_logprob(*scorers.direct, condition, h.tokens);
      if (scorers.channel) {
        auto cond = Condition::channel(condition.context, h.response(), true);
        h.breakdown.channel_lp = scorers.channel->sequence_logprob(cond, framed_document);
      }
      if (scorers.lm) h.breakdown.lm_lp = prefix_logprob(*scorers.lm, lm_condition, h.tokens);
      h.combined = combined_score(h.breakdown, scaling);
      out.table.push_back(std::move(h));

      int pos = len - 1;
      for (; pos >= 0; --pos) {
        if (++digits[static_cast<std::size_t>(pos)] < alphabet.size()) break;
        digits[static_cast<std::size_t>(pos)] = 0;
      }
      if (pos < 0) break;
    }
  }

  const Hypothesis* best = nullptr;
  for (const auto& h : out.table) {
    const double s = selection_score(h, length_normalize);
    if (!finite_score(s)) continue;
    if (!best || better(s, h.tokens, selection_score(*best, length_normalize), best->tokens)) best = &h;
  }
  if (!best) throw ScorerError("oracle: every response has zero probability");
  out.best = *best;
  return out;
}

DecodeResult run_decoder(DecoderKind kind, const ScorerSet& scorers, const Condition& condition,
                         const ScalingConfig& scaling, const BeamConfig& cfg) {
  switch (kind) {
    case DecoderKind::direct: {
      if (!scorers.direct) throw ConfigError("decoding needs a direct scorer");
      DecodeResult result;
      result.nbest = beam_search_direct(*scorers.direct, condition, cfg);
      result.best = result.nbest.hypotheses.front();
      return result;
    }
    case DecoderKind::rerank: {
      if (!scorers.direct) throw ConfigError("decoding needs a direct scorer");
      auto nbest = beam_search_direct(*scorers.direct, condition, cfg);
      auto result = rerank(nbest, scorers, condition, scaling);
      result.nbest.provenance = make_provenance(DecoderKind::rerank, scaling, cfg);
      return result;
    }
    case DecoderKind::online_ours: return online_decode(scorers, condition, scaling, cfg);
    case DecoderKind::online_liu: return online_decode_liu(scorers, condition, scaling, cfg);
    case DecoderKind::oracle: {
      cfg.validate();
      auto oracle = enumerate_oracle(scorers, condition, scaling, cfg.max_len, cfg.length_normalize_final,
                                     cfg.banned_tokens);
      DecodeResult result;
      result.best = oracle.best;
      auto& hyps = result.nbest.hypotheses;
      for (auto& h : oracle.table) {
        if (finite_score(h.combined)) hyps.push_back(std::move(h));
      }
      sort_nbest(hyps);
      if (hyps.size() > static_cast<std::size_t>(cfg.beam)) hyps.resize(static_cast<std::size_t>(cfg.beam));
      result.nbest.provenance = make_provenance(DecoderKind::oracle, scaling, cfg);
      return result;
    }
  }
  throw ConfigError("unknown decoder");
}

}  // namespace ncd
