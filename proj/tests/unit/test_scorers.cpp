#include <doctest.h>

#include <cmath>
#include <random>

#include "ncd/core/error.hpp"
#include "ncd/core/vocabulary.hpp"
#include "ncd/scorers/ngram.hpp"
#include "ncd/scorers/tabular.hpp"
#include "ncd/scorers/training.hpp"
#include "ncd/world/world.hpp"

using namespace ncd;

namespace {

double mass(const LogProbVector& lp) { return lp.array().exp().sum(); }

Vocabulary letters(int n) {
  std::vector<std::string> words;
  for (int i = 0; i < n; ++i) words.push_back(std::string(1, static_cast<char>('a' + i)));
  return Vocabulary(words);
}

GroundedExample example(TokenSeq context, TokenSeq document, std::optional<TokenSeq> response) {
  GroundedExample ex;
  ex.id = "e";
  ex.context.push_back({Speaker::user, std::move(context)});
  ex.document = std::move(document);
  ex.response = std::move(response);
  return ex;
}

}  // namespace

TEST_CASE("condition role invariants") {
  CHECK_NOTHROW(Condition::direct({}, {4}).validate());
  Condition direct_without_doc;
  CHECK_THROWS_AS(direct_without_doc.validate(), ConfigError);
  auto lm = Condition::response_lm({});
  lm.document = TokenSeq{4};
  CHECK_THROWS_AS(lm.validate(), ConfigError);
  auto ch = Condition::channel({}, {4}, false);
  ch.document = TokenSeq{5};
  CHECK_THROWS_AS(ch.validate(), ConfigError);
}

TEST_CASE("linearization layout and truncation") {
  std::vector<Turn> ctx{{Speaker::user, {10, 11}}, {Speaker::system, {12}}};
  CHECK(linearize(Condition::direct(ctx, {20, 21}, TokenSeq{30})) == TokenSeq{20, 21, 3, 10, 11, 12, 3, 30});
  CHECK(linearize(Condition::direct(ctx, {20, 21})) == TokenSeq{20, 21, 3, 10, 11, 12, 3});
  CHECK(linearize(Condition::channel(ctx, {40}, false)) == TokenSeq{10, 11, 12, 3, 40});
  CHECK(linearize(Condition::response_lm(ctx)) == TokenSeq{10, 11, 12});
  CHECK(linearize(Condition::response_lm({})).empty());

  LinearizationOptions opt;
  opt.max_history = 2;
  opt.max_document = 1;
  CHECK(linearize(Condition::direct(ctx, {20, 21}), opt) == TokenSeq{20, 3, 11, 12, 3});
  opt.history_side = TruncateSide::keep_oldest;
  CHECK(linearize(Condition::direct(ctx, {20, 21}), opt) == TokenSeq{20, 3, 10, 11, 3});
}

TEST_CASE("uniform scorer") {
  UniformScorer u(4);
  auto lp = u.next_token_logprobs(Condition::response_lm({}), TokenSeq{0, 3});
  for (Eigen::Index i = 0; i < lp.size(); ++i) CHECK(lp(i) == doctest::Approx(-std::log(4.0)).epsilon(1e-15));
  CHECK(u.sequence_logprob(Condition::response_lm({}), TokenSeq{0, 2, 3, 1}) == doctest::Approx(-3 * std::log(4.0)));
  CHECK(u.sequence_logprob(Condition::response_lm({}), TokenSeq{0, 1}) == doctest::Approx(-std::log(4.0)));
  CHECK_THROWS_AS(u.sequence_logprob(Condition::response_lm({}), TokenSeq{0, 2}), ConfigError);
  CHECK_THROWS_AS(u.next_token_logprobs(Condition::response_lm({}), TokenSeq{2}), ConfigError);
}

TEST_CASE("point mass scorer") {
  PointMassScorer p(6, {4, 5});
  auto c = Condition::response_lm({});
  CHECK(p.sequence_logprob(c, TokenSeq{0, 4, 5, 1}) == 0.0);
  CHECK(std::isinf(p.sequence_logprob(c, TokenSeq{0, 5, 1})));
  CHECK(mass(p.next_token_logprobs(c, TokenSeq{0, 5})) == doctest::Approx(1.0));
}

TEST_CASE("n-gram unigram counts") {
  auto v = letters(2);
  const TokenId a = v.id("a"), b = v.id("b");
  NgramConfig cfg;
  cfg.order = 1;
  cfg.k = 1e-12;
  std::vector<TrainingPair> corpus{{Condition::response_lm({}), {Vocabulary::kSos, a, a, a, b}}};
  auto model = fit_ngram(corpus, cfg, v);
  auto lp = model.next_token_logprobs(Condition::response_lm({}), TokenSeq{0});
  CHECK(lp(a) == doctest::Approx(std::log(0.75)).epsilon(1e-9));

  cfg.k = 1.0;
  std::vector<TrainingPair> once{{Condition::response_lm({}), {Vocabulary::kSos, a}}};
  auto add_one = fit_ngram(once, cfg, v);
  REQUIRE(v.size() == 6);
  CHECK(std::exp(add_one.next_token_logprobs(Condition::response_lm({}), TokenSeq{0})(a)) ==
        doctest::Approx(2.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("n-gram configuration errors") {
  auto v = letters(2);
  std::vector<TrainingPair> empty;
  CHECK_THROWS_AS(fit_ngram(empty, {}, v), ConfigError);
  NgramConfig bad;
  bad.order = 7;
  std::vector<TrainingPair> one{{Condition::response_lm({}), {0, 4}}};
  CHECK_THROWS_AS(fit_ngram(one, bad, v), ConfigError);
  bad.order = 3;
  bad.k = 0.0;
  CHECK_THROWS_AS(fit_ngram(one, bad, v), ConfigError);
  auto model = fit_ngram(one, {}, v);
  CHECK_THROWS_AS(model.next_token_logprobs(Condition::direct({}, {4}), TokenSeq{0}), ConfigError);
}

TEST_CASE("n-gram backoff keeps rows normalized") {
  auto v = letters(5);
  std::vector<TrainingPair> corpus;
  corpus.push_back({Condition::response_lm({{Speaker::user, {4, 5}}}), frame(TokenSeq{6, 7})});
  corpus.push_back({Condition::response_lm({{Speaker::user, {5}}}), frame(TokenSeq{8})});
  NgramConfig cfg;
  cfg.order = 4;
  auto model = fit_ngram(corpus, cfg, v);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(v.size() - 1));
  for (int probe = 0; probe < 200; ++probe) {
    TokenSeq ctx{tok(rng), tok(rng)};
    TokenSeq prefix{0, tok(rng), tok(rng)};
    CHECK(mass(model.next_token_logprobs(Condition::response_lm({{Speaker::user, ctx}}), prefix)) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("sequence_logprob is the sum of per-step entries") {
  WorldSpec spec;
  spec.seed = 5;
  auto world = build_world(spec);
  auto data = sample_dataset(world, 200, 1);
  auto v = world.vocabulary();
  auto direct = fit_ngram(make_direct_training_pairs(data), {}, v);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& ex = data[i];
    auto cond = Condition::direct(ex.context, ex.document);
    auto framed = frame(*ex.response);
    double sum = 0.0;
    for (std::size_t t = 1; t < framed.size(); ++t) {
      sum += direct.next_token_logprobs(cond, std::span(framed).first(t))(framed[t]);
    }
    CHECK(direct.sequence_logprob(cond, framed) == doctest::Approx(sum).epsilon(1e-12));
    CHECK(direct.sequence_logprob(cond, framed) <= 0.0);
  }
}

TEST_CASE("n-gram model files are deterministic and hash-checked") {
  WorldSpec spec;
  auto world = build_world(spec);
  auto data = sample_dataset(world, 100, 2);
  auto v = world.vocabulary();
  TruncationPolicy policy{TruncationDistribution::uniform, 9};
  auto a = fit_ngram(make_channel_training_pairs(data, policy), {}, v);
  auto b = fit_ngram(make_channel_training_pairs(data, policy), {}, v);
  CHECK(a.to_text() == b.to_text());
  auto parsed = NgramScorer::parse(a.to_text(), v);
  CHECK(parsed.to_text() == a.to_text());
  auto cond = Condition::channel(data[0].context, {4}, false);
  CHECK((parsed.next_token_logprobs(cond, TokenSeq{0}) - a.next_token_logprobs(cond, TokenSeq{0})).norm() == 0.0);
  CHECK_THROWS_AS(NgramScorer::parse(a.to_text(), letters(3)), DataError);
}

TEST_CASE("channel model prefers the document it was trained to reconstruct") {
  WorldSpec spec;
  spec.seed = 11;
  auto world = build_world(spec);
  auto data = sample_dataset(world, 3000, 4);
  // documents are set equal to the responses
  for (auto& ex : data) ex.document = *ex.response;
  std::vector<GroundedExample> train(data.begin(), data.begin() + 2500), held(data.begin() + 2500, data.end());
  NgramConfig cfg;
  cfg.order = 5;  // sees the whole response (length <= 3) when predicting the document
  auto channel = fit_ngram(make_channel_training_pairs(train, {TruncationDistribution::none, 0}), cfg, world.vocabulary());
  std::size_t wins = 0, trials = 0;
  for (std::size_t i = 0; i + 1 < held.size(); ++i) {
    const auto& u = *held[i].response;
    const auto& other = *held[i + 1].response;
    if (other == u) continue;
    auto cond = Condition::channel(held[i].context, u, true);
    ++trials;
    if (channel.sequence_logprob(cond, frame(u)) > channel.sequence_logprob(cond, frame(other))) ++wins;
  }
  REQUIRE(trials > 300);
  CHECK(static_cast<double>(wins) / static_cast<double>(trials) > 0.9);
}

TEST_CASE("channel training truncation") {
  auto ex = example({4}, {5, 6}, TokenSeq{4, 5, 6, 7});
  std::vector<GroundedExample> one{ex};
  auto none = make_channel_training_pairs(one, {TruncationDistribution::none, 0});
  CHECK(none[0].condition.response->size() == 4);
  CHECK(none[0].target == frame(ex.document));

  std::vector<GroundedExample> many(100000, ex);
  auto pairs = make_channel_training_pairs(many, {TruncationDistribution::uniform, 17});
  std::array<double, 5> counts{};
  for (const auto& p : pairs) counts[p.condition.response->size()] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) {
    CHECK(c / 1e5 == doctest::Approx(0.2).epsilon(0.02 / 0.2));
    chi2 += (c - 20000.0) * (c - 20000.0) / 20000.0;
  }
  // 4 degrees of freedom, p = 0.01
  CHECK(chi2 < 13.2767);

  auto blank = example({4}, {5, 6}, TokenSeq{});
  std::vector<GroundedExample> b{blank};
  auto bp = make_channel_training_pairs(b, {TruncationDistribution::uniform, 1});
  CHECK(bp[0].condition.response->empty());
  CHECK(bp[0].target == frame(blank.document));
}

TEST_CASE("control token annotation") {
  auto v = letters(4).with_control_tokens();
  const TokenId a = v.id("a"), b = v.id("b"), c = v.id("c"), d = v.id("d");
  const TokenId high = *v.find(kCtrlHigh), mid = *v.find(kCtrlMid), low = *v.find(kCtrlLow);
  CHECK(annotate_control_tokens(example({}, {a, b, c}, TokenSeq{b, a}), v, 0.7, 0.3) == TokenSeq{high});
  CHECK(annotate_control_tokens(example({}, {a, b}, TokenSeq{c, d}), v, 0.7, 0.3) == TokenSeq{low});
  CHECK(annotate_control_tokens(example({}, {b, c, d}, TokenSeq{a, b, c}), v, 0.7, 0.3) == TokenSeq{mid});
  CHECK(annotate_control_tokens(example({}, {b, c, d}, TokenSeq{c, b, a}), v, 0.7, 0.3) == TokenSeq{mid});
  CHECK(annotate_control_tokens(example({}, {a}, TokenSeq{}), v, 0.7, 0.3) == TokenSeq{low});
  CHECK(inference_control_tokens(v) == TokenSeq{high});
  CHECK_THROWS_AS(annotate_control_tokens(example({}, {a}, TokenSeq{a}), letters(4), 0.7, 0.3), ConfigError);
}

TEST_CASE("direct training pairs carry control tokens when asked") {
  auto ex = example({4}, {5}, TokenSeq{6});
  ex.control = TokenSeq{7};
  std::vector<GroundedExample> one{ex};
  CHECK(make_direct_training_pairs(one, true)[0].condition.control == TokenSeq{7});
  CHECK_FALSE(make_direct_training_pairs(one, false)[0].condition.control);
  CHECK(make_lm_training_pairs(one)[0].target == TokenSeq{0, 6, 1});
}
