#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "ncd/core/error.hpp"
#include "ncd/world/world.hpp"

using namespace ncd;

namespace {

std::vector<Turn> as_context(const TokenSeq& c) { return {Turn{Speaker::user, c}}; }

bool starts_with(const TokenSeq& s, const TokenSeq& prefix) {
  return s.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), s.begin());
}

/// Next-token distribution by summing the response table over completions.
Eigen::VectorXd brute_next(const WorldModel& w, std::size_t row, const TokenSeq& prefix) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w.vocabulary().size()));
  for (std::size_t u = 0; u < w.num_responses(); ++u) {
    auto s = w.response(u);
    if (!starts_with(s, prefix)) continue;
    const double m = w.response_table()(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(u));
    if (s.size() == prefix.size()) {
      p(Vocabulary::kEos) += m;
    } else {
      p(s[prefix.size()]) += m;
    }
  }
  return p / p.sum();
}

WorldSpec small(std::uint64_t seed) {
  WorldSpec s;
  s.vocab_size = 4;
  s.num_documents = 3;
  s.max_response_len = 3;
  s.context_pool_size = 4;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("factor rows are normalized") {
  auto w = build_world(WorldSpec{});
  CHECK(w.context_prior().sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (Eigen::Index r = 0; r < w.document_given_context().rows(); ++r) {
    CHECK(std::abs(w.document_given_context().row(r).sum() - 1.0) < 1e-9);
  }
  for (Eigen::Index r = 0; r < w.response_table().rows(); ++r) {
    CHECK(std::abs(w.response_table().row(r).sum() - 1.0) < 1e-9);
  }
  for (Eigen::Index r = 0; r < w.response_lm_table().rows(); ++r) {
    CHECK(std::abs(w.response_lm_table().row(r).sum() - 1.0) < 1e-9);
  }
  auto post = retrieval_posterior(w);
  for (Eigen::Index r = 0; r < post.rows(); ++r) CHECK(std::abs(post.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("response indexing is length-major then lexicographic") {
  auto w = build_world(small(1));
  CHECK(w.num_responses() == 4 + 16 + 64);
  CHECK(w.response(0) == TokenSeq{4});
  CHECK(w.response(3) == TokenSeq{7});
  CHECK(w.response(4) == TokenSeq{4, 4});
  CHECK(w.response(5) == TokenSeq{4, 5});
  CHECK(w.response(83) == TokenSeq{7, 7, 7});
  for (std::size_t u = 0; u < w.num_responses(); ++u) CHECK(w.response_index(w.response(u)) == u);
  CHECK_FALSE(w.response_index(TokenSeq{}).has_value());
  CHECK_FALSE(w.response_index(TokenSeq{4, 4, 4, 4}).has_value());
  CHECK_FALSE(w.response_index(TokenSeq{1}).has_value());
}

TEST_CASE("enumerability guard") {
  WorldSpec s;
  s.vocab_size = 6;
  s.max_response_len = 8;
  CHECK_THROWS_AS(build_world(s), ConfigError);
  s.max_response_len = 7;
  CHECK_NOTHROW(s.validate());
  s.vocab_size = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("same seed gives byte-identical tables") {
  CHECK(build_world(small(7)).to_json() == build_world(small(7)).to_json());
  CHECK(build_world(small(7)).to_json() != build_world(small(8)).to_json());
}

TEST_CASE("world dump round trip") {
  auto w = build_world(small(3));
  auto back = WorldModel::from_json(w.to_json());
  CHECK(back.to_json() == w.to_json());
  CHECK_THROWS_AS(WorldModel::from_json("{}"), DataError);
}

TEST_CASE("full grounding makes the modal response copy the document") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto spec = small(seed);
    spec.grounding_strength = 1.0;
    auto w = build_world(spec);
    for (std::size_t c = 0; c < w.num_contexts(); ++c) {
      for (std::size_t d = 0; d < w.num_documents(); ++d) {
        Eigen::Index best = 0;
        w.response_table().row(static_cast<Eigen::Index>(w.row(c, d))).maxCoeff(&best);
        const auto& doc = w.documents()[d];
        for (auto t : w.response(static_cast<std::size_t>(best))) {
          CHECK(std::find(doc.begin(), doc.end(), t) != doc.end());
        }
      }
    }
  }
}

TEST_CASE("zero grounding ignores the document") {
  auto spec = small(2);
  spec.grounding_strength = 0.0;
  auto w = build_world(spec);
  for (std::size_t c = 0; c < w.num_contexts(); ++c) {
    for (std::size_t d = 1; d < w.num_documents(); ++d) {
      CHECK(w.response_table().row(static_cast<Eigen::Index>(w.row(c, d))) ==
            w.response_table().row(static_cast<Eigen::Index>(w.row(c, 0))));
    }
  }
}

TEST_CASE("exact direct and LM scorers match brute-force marginalization") {
  auto w = build_world(small(4));
  auto direct = exact_conditional(w, ExactRole::direct);
  auto lm = exact_conditional(w, ExactRole::response_lm);
  std::vector<TokenSeq> prefixes{{}, {4}, {6}, {5, 7}, {7, 7, 7}};
  for (std::size_t c = 0; c < w.num_contexts(); ++c) {
    for (const auto& p : prefixes) {
      TokenSeq prefix{Vocabulary::kSos};
      prefix.insert(prefix.end(), p.begin(), p.end());
      for (std::size_t d = 0; d < w.num_documents(); ++d) {
        Eigen::VectorXd got = direct->next_token_logprobs(Condition::direct(as_context(w.contexts()[c]), w.documents()[d]), prefix)
                       .array()
                       .exp()
                       .matrix();
        CHECK((got - brute_next(w, w.row(c, d), p)).cwiseAbs().maxCoeff() < 1e-12);
      }
      // the LM is the p(d|c) mixture of the direct rows
      Eigen::VectorXd mix = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w.vocabulary().size()));
      double total = 0.0;
      for (std::size_t d = 0; d < w.num_documents(); ++d) {
        const double pd = w.document_given_context()(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d));
        const double pm = w.prefix_mass(w.row(c, d), p);
        mix += pd * pm * brute_next(w, w.row(c, d), p);
        total += pd * pm;
      }
      Eigen::VectorXd got = lm->next_token_logprobs(Condition::response_lm(as_context(w.contexts()[c])), prefix).array().exp().matrix();
      CHECK((got - mix / total).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("Bayes consistency over every positive triple") {
  auto w = build_world(small(6));
  auto direct = exact_conditional(w, ExactRole::direct);
  auto channel = exact_conditional(w, ExactRole::channel);
  auto lm = exact_conditional(w, ExactRole::response_lm);
  double worst = 0.0;
  for (std::size_t c = 0; c < w.num_contexts(); ++c) {
    const auto ctx = as_context(w.contexts()[c]);
    for (std::size_t u = 0; u < w.num_responses(); ++u) {
      const auto resp = w.response(u);
      const double l = lm->sequence_logprob(Condition::response_lm(ctx), frame(resp));
      for (std::size_t d = 0; d < w.num_documents(); ++d) {
        const double dl = direct->sequence_logprob(Condition::direct(ctx, w.documents()[d]), frame(resp));
        const double ch = channel->sequence_logprob(Condition::channel(ctx, resp, true), frame(w.documents()[d]));
        const double pd = w.document_given_context()(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d));
        if (!(pd > 0.0) || std::isinf(dl)) continue;
        const double lhs = std::exp(ch + l);
        const double rhs = std::exp(dl) * pd;
        worst = std::max(worst, std::abs(lhs - rhs) / rhs);
      }
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("two-document Bayes identity with p(d1|c) = 0.7") {
  auto spec = small(9);
  spec.num_documents = 2;
  spec.document_prior = std::vector<double>{0.7, 0.3};
  auto w = build_world(spec);
  auto direct = exact_conditional(w, ExactRole::direct);
  auto channel = exact_conditional(w, ExactRole::channel);
  auto lm = exact_conditional(w, ExactRole::response_lm);
  for (std::size_t c = 0; c < w.num_contexts(); ++c) {
    const auto ctx = as_context(w.contexts()[c]);
    for (std::size_t u = 0; u < w.num_responses(); ++u) {
      const auto resp = w.response(u);
      const double dl = direct->sequence_logprob(Condition::direct(ctx, w.documents()[0]), frame(resp));
      if (std::isinf(dl)) continue;
      const double ch = channel->sequence_logprob(Condition::channel(ctx, resp, true), frame(w.documents()[0]));
      const double l = lm->sequence_logprob(Condition::response_lm(ctx), frame(resp));
      CHECK(std::exp(ch + l - dl) == doctest::Approx(0.7).epsilon(1e-10));
    }
  }
}

TEST_CASE("channel_partial is the prefix marginal of the joint") {
  auto w = build_world(small(12));
  auto partial = exact_conditional(w, ExactRole::channel_partial);
  std::vector<TokenSeq> prefixes{{}, {4}, {7}, {5, 5}, {6, 4, 7}};
  for (std::size_t c = 0; c < w.num_contexts(); ++c) {
    const auto ctx = as_context(w.contexts()[c]);
    for (const auto& p : prefixes) {
      // p(d, w|c) summed over completions w of p
      std::vector<double> joint(w.num_documents(), 0.0);
      double marginal = 0.0;
      for (std::size_t u = 0; u < w.num_responses(); ++u) {
        if (!starts_with(w.response(u), p)) continue;
        for (std::size_t d = 0; d < w.num_documents(); ++d) {
          const double v = w.document_given_context()(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) *
                           w.response_table()(static_cast<Eigen::Index>(w.row(c, d)), static_cast<Eigen::Index>(u));
          joint[d] += v;
          marginal += v;
        }
      }
      for (std::size_t d = 0; d < w.num_documents(); ++d) {
        const double got = std::exp(partial->sequence_logprob(Condition::channel(ctx, p, false), frame(w.documents()[d])));
        CHECK(got == doctest::Approx(joint[d] / marginal).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("channel at full length agrees with channel_partial on maximal responses") {
  auto w = build_world(small(13));
  auto full = exact_conditional(w, ExactRole::channel);
  auto partial = exact_conditional(w, ExactRole::channel_partial);
  for (std::size_t c = 0; c < w.num_contexts(); ++c) {
    const auto ctx = as_context(w.contexts()[c]);
    for (std::size_t u = 0; u < w.num_responses(); ++u) {
      const auto resp = w.response(u);
      if (resp.size() != 3) continue;
      for (const auto& doc : w.documents()) {
        const double a = full->sequence_logprob(Condition::channel(ctx, resp, true), frame(doc));
        const double b = partial->sequence_logprob(Condition::channel(ctx, resp, false), frame(doc));
        CHECK(std::abs(a - b) < 1e-12);
      }
    }
  }
}

TEST_CASE("sample_dataset") {
  auto w = build_world(small(5));
  CHECK_THROWS_AS(sample_dataset(w, 0, 1), ConfigError);
  CHECK(sample_dataset(w, 1, 1).size() == 1);
  CHECK(sample_dataset(w, 50, 3) == sample_dataset(w, 50, 3));

  const std::size_t n = 100000;
  auto data = sample_dataset(w, n, 21);
  std::map<std::string, double> freq;
  for (const auto& ex : data) {
    freq[*ex.document_id] += 1.0 / static_cast<double>(n);
    REQUIRE(ex.response);
    CHECK_FALSE(ex.response->empty());
  }
  Eigen::VectorXd pd = w.document_given_context().transpose() * w.context_prior();
  double tv = 0.0;
  for (std::size_t d = 0; d < w.num_documents(); ++d) {
    tv += std::abs(freq[WorldModel::document_id(d)] - pd(static_cast<Eigen::Index>(d)));
  }
  CHECK(tv / 2.0 <= 0.01);
}

TEST_CASE("lexical worlds name their document in the context") {
  WorldSpec s;
  s.vocab_size = 12;
  s.num_documents = 4;
  s.max_doc_len = 3;
  s.max_context_len = 2;
  s.lexical_contexts = true;
  auto w = build_world(s);
  std::set<TokenId> seen;
  for (const auto& doc : w.documents()) {
    for (auto t : doc) CHECK(seen.insert(t).second);
  }
  for (std::size_t c = 0; c < w.num_contexts(); ++c) {
    const auto d = c % w.num_documents();
    CHECK(w.document_given_context()(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) == 1.0);
    for (auto t : w.contexts()[c]) {
      const auto& doc = w.documents()[d];
      CHECK(std::find(doc.begin(), doc.end(), t) != doc.end());
    }
  }
  s.vocab_size = 11;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
