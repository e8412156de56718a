#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <random>

#include "ncd/core/error.hpp"
#include "ncd/decode/decode.hpp"
#include "ncd/decode/nbest_io.hpp"
#include "ncd/scorers/tabular.hpp"
#include "ncd/world/world.hpp"

using namespace ncd;

namespace {

struct ExactWorld {
  WorldModel world;
  std::unique_ptr<Scorer> direct, channel, lm;

  explicit ExactWorld(const WorldSpec& spec)
      : world(build_world(spec)),
        direct(exact_conditional(world, ExactRole::direct)),
        channel(exact_conditional(world, ExactRole::channel)),
        lm(exact_conditional(world, ExactRole::response_lm)) {}

  ScorerSet scorers() const { return {direct.get(), channel.get(), lm.get()}; }

  Condition condition(std::size_t c, std::size_t d) const {
    return Condition::direct({Turn{Speaker::user, world.contexts()[c]}}, world.documents()[d]);
  }
};

WorldSpec tiny(std::uint64_t seed) {
  WorldSpec s;
  s.vocab_size = 3;
  s.num_documents = 3;
  s.max_response_len = 3;
  s.context_pool_size = 3;
  s.seed = seed;
  return s;
}

/// Never emits <eos>.
class EndlessScorer final : public Scorer {
 public:
  std::size_t vocab_size() const override { return 6; }
  LogProbVector next_token_logprobs(const Condition&, std::span<const TokenId>) const override {
    LogProbVector v = LogProbVector::Constant(6, -std::log(5.0));
    v(Vocabulary::kEos) = -std::numeric_limits<double>::infinity();
    return v;
  }
};

/// Fails for responses that start with token 4.
class FlakyScorer final : public Scorer {
 public:
  explicit FlakyScorer(std::size_t v) : v_(v) {}
  std::size_t vocab_size() const override { return v_; }
  LogProbVector next_token_logprobs(const Condition& c, std::span<const TokenId>) const override {
    if (c.response && !c.response->empty() && c.response->front() == 4) throw ScorerError("flaky");
    return LogProbVector::Constant(static_cast<Eigen::Index>(v_), -std::log(static_cast<double>(v_)));
  }

 private:
  std::size_t v_;
};

/// Greedy decoding written out directly.
TokenSeq greedy(const Scorer& s, const Condition& c, int max_len) {
  TokenSeq seq{Vocabulary::kSos};
  auto alphabet = generation_alphabet(s.vocab_size(), {});
  for (;;) {
    auto lp = s.next_token_logprobs(c, seq);
    TokenId best = Vocabulary::kEos;
    if (static_cast<int>(seq.size()) - 1 < max_len) {
      for (auto t : alphabet) {
        if (lp(t) > lp(best)) best = t;
      }
    }
    seq.push_back(best);
    if (best == Vocabulary::kEos) return seq;
  }
}

}  // namespace

TEST_CASE("combined_score arithmetic") {
  ScoreBreakdown b{-1.0, -2.0, -1.0};
  CHECK(combined_score(b, {1.0, 0.5, 0.2}) == doctest::Approx(-2.2));
  CHECK(combined_score(b, ScalingConfig::direct_only()) == -1.0);
  CHECK(combined_score(b, {0.0, 1.0, 1.0}) == -3.0);
  ScoreBreakdown inf{-1.0, -std::numeric_limits<double>::infinity(), -1.0};
  CHECK(combined_score(inf, ScalingConfig::direct_only()) == -1.0);
}

TEST_CASE("configuration defaults and validation") {
  CHECK(ScalingConfig::rerank_default() == ScalingConfig{1.0, 0.5, 0.2});
  CHECK(ScalingConfig::online_default() == ScalingConfig{1.0, 0.6, 0.4});
  CHECK(default_scaling(DecoderKind::rerank) == ScalingConfig::rerank_default());
  CHECK(default_scaling(DecoderKind::online_ours) == ScalingConfig::online_default());
  CHECK(default_scaling(DecoderKind::online_liu) == ScalingConfig::online_default());
  CHECK_THROWS_AS((ScalingConfig{1.0, -0.1, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((ScalingConfig{1.0, NAN, 0.0}.validate()), ConfigError);
  BeamConfig cfg;
  cfg.beam = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  BeamConfig liu;
  liu.liu_k1 = 3;
  liu.liu_k2 = 5;
  CHECK(effective_beam_size(DecoderKind::online_liu, liu) == 15);
  CHECK(effective_beam_size(DecoderKind::online_ours, liu) == liu.beam);
  CHECK(parse_decoder_kind("online-liu") == DecoderKind::online_liu);
  CHECK_THROWS_AS(parse_decoder_kind("sampling"), ConfigError);
}

TEST_CASE("generation alphabet skips <sos>, <unk>, <sep> and banned tokens") {
  std::vector<TokenId> banned{5};
  CHECK(generation_alphabet(7, banned) == std::vector<TokenId>{1, 4, 6});
}

TEST_CASE("point mass scorer yields its string at any beam") {
  PointMassScorer p(8, {5, 7, 4});
  auto c = Condition::direct({}, {4});
  for (int k : {1, 2, 5}) {
    BeamConfig cfg;
    cfg.beam = k;
    cfg.max_len = 5;
    auto nb = beam_search_direct(p, c, cfg);
    CHECK(nb.hypotheses.front().tokens == TokenSeq{0, 5, 7, 4, 1});
    CHECK(nb.hypotheses.front().breakdown.direct_lp == 0.0);
  }
}

TEST_CASE("beam 1 is greedy decoding") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ExactWorld w(tiny(seed));
    BeamConfig cfg;
    cfg.beam = 1;
    cfg.max_len = 3;
    for (std::size_t c = 0; c < w.world.num_contexts(); ++c) {
      auto cond = w.condition(c, 0);
      CHECK(beam_search_direct(*w.direct, cond, cfg).hypotheses.front().tokens == greedy(*w.direct, cond, 3));
    }
  }
}

TEST_CASE("exhaustive direct beam finds the oracle argmax") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ExactWorld w(tiny(seed));
    BeamConfig cfg;
    cfg.beam = 27;
    cfg.max_len = 3;
    for (std::size_t c = 0; c < w.world.num_contexts(); ++c) {
      for (std::size_t d = 0; d < w.world.num_documents(); ++d) {
        auto cond = w.condition(c, d);
        auto oracle = enumerate_oracle({w.direct.get()}, cond, ScalingConfig::direct_only(), 3);
        CHECK(beam_search_direct(*w.direct, cond, cfg).hypotheses.front().tokens == oracle.best.tokens);
        // the oracle agrees with the world's own argmax
        Eigen::Index best = 0;
        w.world.response_table().row(static_cast<Eigen::Index>(w.world.row(c, d))).maxCoeff(&best);
        CHECK(oracle.best.response() == w.world.response(static_cast<std::size_t>(best)));
      }
    }
  }
}

TEST_CASE("direct beam search returns up to k finished hypotheses in order") {
  ExactWorld w(tiny(3));
  BeamConfig cfg;
  cfg.beam = 4;
  cfg.max_len = 3;
  auto nb = beam_search_direct(*w.direct, w.condition(0, 1), cfg);
  CHECK(nb.complete);
  CHECK(nb.hypotheses.size() <= 4);
  for (std::size_t i = 0; i < nb.hypotheses.size(); ++i) {
    CHECK(nb.hypotheses[i].finished);
    CHECK(nb.hypotheses[i].combined == nb.hypotheses[i].breakdown.direct_lp);
    if (i > 0) CHECK(nb.hypotheses[i - 1].combined >= nb.hypotheses[i].combined);
  }
  CHECK(nb.provenance.decoder == "direct");
}

TEST_CASE("unfinished search is flagged") {
  EndlessScorer s;
  BeamConfig cfg;
  cfg.beam = 2;
  cfg.max_len = 2;
  auto nb = beam_search_direct(s, Condition::direct({}, {4}), cfg);
  CHECK_FALSE(nb.complete);
  CHECK_FALSE(nb.hypotheses.front().finished);
  CHECK(nb.hypotheses.front().tokens.size() == 3);
}

TEST_CASE("oracle tie-break and normalization") {
  UniformScorer u(7);
  auto oracle = enumerate_oracle({&u}, Condition::direct({}, {4}), ScalingConfig::direct_only(), 3);
  CHECK(oracle.best.tokens == TokenSeq{0, 1});
  CHECK(oracle.table.size() == 1 + 3 + 9 + 27);

  ExactWorld w(tiny(2));
  auto table = enumerate_oracle({w.direct.get()}, w.condition(1, 2), ScalingConfig::direct_only(), 3).table;
  double total = 0.0;
  for (const auto& h : table) total += std::exp(h.breakdown.direct_lp);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  UniformScorer big(24);
  CHECK_THROWS_AS(enumerate_oracle({&big}, Condition::direct({}, {4}), ScalingConfig::direct_only(), 5), ConfigError);
}

TEST_CASE("Bayes argmax equivalence on exact conditionals") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    ExactWorld w(tiny(seed));
    for (std::size_t c = 0; c < w.world.num_contexts(); ++c) {
      for (std::size_t d = 0; d < w.world.num_documents(); ++d) {
        auto cond = w.condition(c, d);
        auto a = enumerate_oracle(w.scorers(), cond, ScalingConfig::direct_only(), 3);
        auto b = enumerate_oracle(w.scorers(), cond, {0.0, 1.0, 1.0}, 3);
        CHECK(a.best.tokens == b.best.tokens);
      }
    }
  }
}

TEST_CASE("rerank reductions") {
  ExactWorld w(tiny(4));
  BeamConfig cfg;
  cfg.beam = 6;
  cfg.max_len = 3;
  for (std::size_t c = 0; c < w.world.num_contexts(); ++c) {
    auto cond = w.condition(c, 1);
    auto nb = beam_search_direct(*w.direct, cond, cfg);
    auto r = rerank(nb, w.scorers(), cond, ScalingConfig::direct_only());
    CHECK(r.best.tokens == nb.hypotheses.front().tokens);
    CHECK(r.best.breakdown.direct_lp == nb.hypotheses.front().breakdown.direct_lp);

    // channel-only picks the hypothesis with the largest exact p(d|u,c)
    auto ch = rerank(nb, w.scorers(), cond, {0.0, 1.0, 0.0});
    double best_posterior = -1.0;
    TokenSeq best_tokens;
    for (const auto& h : nb.hypotheses) {
      const double post = document_posterior(w.world, c, h.response(), true)(1);
      if (post > best_posterior) {
        best_posterior = post;
        best_tokens = h.tokens;
      }
    }
    CHECK(ch.best.tokens == best_tokens);
  }
}

TEST_CASE("rerank drops failing hypotheses with a warning") {
  ExactWorld w(tiny(5));
  FlakyScorer flaky(w.world.vocabulary().size());
  BeamConfig cfg;
  cfg.beam = 9;
  cfg.max_len = 3;
  auto cond = w.condition(0, 0);
  auto nb = beam_search_direct(*w.direct, cond, cfg);
  std::size_t failing = 0;
  for (const auto& h : nb.hypotheses) failing += h.response().front() == 4;
  REQUIRE(failing > 0);
  REQUIRE(failing < nb.hypotheses.size());
  auto r = rerank(nb, {w.direct.get(), &flaky, w.lm.get()}, cond, ScalingConfig::rerank_default());
  CHECK(r.warnings.size() == failing);
  CHECK(r.best.response().front() != 4);

  NBestList only_failing;
  for (const auto& h : nb.hypotheses) {
    if (h.response().front() == 4) only_failing.hypotheses.push_back(h);
  }
  CHECK_THROWS_AS(rerank(only_failing, {w.direct.get(), &flaky, w.lm.get()}, cond, ScalingConfig::rerank_default()),
                  ScorerError);
  CHECK_THROWS_AS(rerank(NBestList{}, w.scorers(), cond, ScalingConfig::rerank_default()), ConfigError);
}

TEST_CASE("online decoding with zero channel and LM weights is direct beam search") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ExactWorld w(tiny(seed));
    for (int k : {1, 2, 3, 5}) {
      BeamConfig cfg;
      cfg.beam = k;
      cfg.max_len = 3;
      cfg.length_normalize_final = false;
      for (std::size_t c = 0; c < w.world.num_contexts(); ++c) {
        auto cond = w.condition(c, 2);
        auto online = online_decode(w.scorers(), cond, ScalingConfig::direct_only(), cfg);
        CHECK(online.best.tokens == beam_search_direct(*w.direct, cond, cfg).hypotheses.front().tokens);
      }
    }
  }
}

TEST_CASE("exhaustive online decoding equals the oracle under the same scaling") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ExactWorld w(tiny(seed));
    for (bool normalize : {false, true}) {
      BeamConfig cfg;
      cfg.beam = 39;  // 3 + 9 + 27 responses
      cfg.max_len = 3;
      cfg.length_normalize_final = normalize;
      ScalingConfig s{1.0, 1.0, 1.0};
      for (std::size_t c = 0; c < w.world.num_contexts(); ++c) {
        auto cond = w.condition(c, 0);
        auto online = online_decode(w.scorers(), cond, s, cfg);
        auto oracle = enumerate_oracle(w.scorers(), cond, s, 3, normalize);
        CHECK(online.best.tokens == oracle.best.tokens);
        CHECK(online.best.combined == oracle.best.combined);
      }
    }
  }
}

TEST_CASE("Liu variant reductions") {
  ExactWorld w(tiny(6));
  const int alphabet = static_cast<int>(generation_alphabet(w.world.vocabulary().size(), {}).size());
  for (int k1 : {1, 2, alphabet}) {
    for (int k2 : {1, 3}) {
      BeamConfig cfg;
      cfg.liu_k1 = k1;
      cfg.liu_k2 = k2;
      cfg.beam = k2;
      cfg.max_len = 3;
      cfg.length_normalize_final = false;
      for (std::size_t c = 0; c < w.world.num_contexts(); ++c) {
        auto cond = w.condition(c, 1);
        auto liu = online_decode_liu(w.scorers(), cond, ScalingConfig::direct_only(), cfg);
        CHECK(liu.best.tokens == beam_search_direct_limited(*w.direct, cond, cfg, k1).hypotheses.front().tokens);
        if (k1 == alphabet) {
          CHECK(liu.best.tokens == beam_search_direct(*w.direct, cond, cfg).hypotheses.front().tokens);
        }
        CHECK(liu.nbest.provenance.effective_beam == k1 * k2);
      }
    }
  }
}

TEST_CASE("incremental LM scoring matches rescoring from scratch") {
  ExactWorld w(tiny(7));
  BeamConfig a;
  a.beam = 3;
  a.max_len = 3;
  BeamConfig b = a;
  b.incremental_lm = true;
  for (std::size_t c = 0; c < w.world.num_contexts(); ++c) {
    auto cond = w.condition(c, 0);
    auto x = online_decode(w.scorers(), cond, ScalingConfig::online_default(), a);
    auto y = online_decode(w.scorers(), cond, ScalingConfig::online_default(), b);
    CHECK(x.best == y.best);
  }
}

TEST_CASE("decoders are deterministic") {
  ExactWorld w(tiny(8));
  BeamConfig cfg;
  cfg.beam = 3;
  cfg.liu_k1 = 2;
  cfg.liu_k2 = 2;
  cfg.max_len = 3;
  auto cond = w.condition(2, 1);
  for (auto kind : {DecoderKind::direct, DecoderKind::rerank, DecoderKind::online_ours, DecoderKind::online_liu,
                    DecoderKind::oracle}) {
    auto a = run_decoder(kind, w.scorers(), cond, default_scaling(kind), cfg);
    auto b = run_decoder(kind, w.scorers(), cond, default_scaling(kind), cfg);
    CHECK(a.best == b.best);
    CHECK(nbest_jsonl("x", a.nbest, w.world.vocabulary()) == nbest_jsonl("x", b.nbest, w.world.vocabulary()));
  }
}

TEST_CASE("n-best dump format") {
  NBestList nb;
  Hypothesis h;
  h.tokens = {0, 4, 5, 1};
  h.finished = true;
  h.breakdown = {-1.5, -std::numeric_limits<double>::infinity(), -0.5};
  h.combined = -1.5;
  nb.hypotheses.push_back(h);
  std::vector<std::string> words{"x", "y"};
  auto line = nbest_jsonl("ex1", nb, Vocabulary(words));
  auto j = nlohmann::json::parse(line);
  CHECK(j["example_id"] == "ex1");
  CHECK(j["rank"] == 0);
  CHECK(j["tokens"] == std::vector<int>{0, 4, 5, 1});
  CHECK(j["text"] == "x y");
  CHECK(j["direct_lp"] == -1.5);
  CHECK(j["channel_lp"].is_null());
  CHECK(j["finished"] == true);
  CHECK(line.find("\"example_id\"") < line.find("\"finished\""));
}
