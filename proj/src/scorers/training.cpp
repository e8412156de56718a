#include "ncd/scorers/training.hpp"

#include <random>
#include <set>

#include "ncd/core/error.hpp"

namespace ncd {
namespace {

const TokenSeq& response_of(const GroundedExample& ex) {
  if (!ex.response) throw ConfigError("example '" + ex.id + "' has no response");
  return *ex.response;
}

TokenId control_id(const Vocabulary& vocab, std::string_view symbol) {
  auto id = vocab.find(symbol);
  if (!id) throw ConfigError("vocabulary lacks control token " + std::string(symbol));
  return *id;
}

}  // namespace

std::vector<TrainingPair> make_channel_training_pairs(std::span<const GroundedExample> examples,
                                                      const TruncationPolicy& policy) {
  std::mt19937_64 rng(policy.seed);
  std::vector<TrainingPair> pairs;
  pairs.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto& response = response_of(ex);
    std::size_t keep = response.size();
    if (policy.distribution == TruncationDistribution::uniform) {
      std::uniform_int_distribution<std::size_t> length(0, response.size());
      keep = length(rng);
    }
    TokenSeq prefix(response.begin(), response.begin() + static_cast<std::ptrdiff_t>(keep));
    pairs.push_back({Condition::channel(ex.context, std::move(prefix), keep == response.size()), frame(ex.document)});
  }
  return pairs;
}

std::vector<TrainingPair> make_direct_training_pairs(std::span<const GroundedExample> examples, bool use_control) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(examples.size());
  for (const auto& ex : examples) {
    std::optional<TokenSeq> control;
    if (use_control) {
      if (!ex.control) throw ConfigError("example '" + ex.id + "' has no control tokens");
      control = ex.control;
    }
    pairs.push_back({Condition::direct(ex.context, ex.document, control), frame(response_of(ex))});
  }
  return pairs;
}

std::vector<TrainingPair> make_lm_training_pairs(std::span<const GroundedExample> examples) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(examples.size());
  for (const auto& ex : examples) pairs.push_back({Condition::response_lm(ex.context), frame(response_of(ex))});
  return pairs;
}

double lexical_precision(std::span<const TokenId> response, std::span<const TokenId> document) {
  std::set<TokenId> r(response.begin(), response.end());
  if (r.empty()) return 0.0;
  std::set<TokenId> d(document.begin(), document.end());
  std::size_t hit = 0;
  for (auto t : r) hit += d.count(t);
  return static_cast<double>(hit) / static_cast<double>(r.size());
}

TokenSeq annotate_control_tokens(const GroundedExample& example, const Vocabulary& vocab, double high_threshold,
                                 double low_threshold) {
  if (!(low_threshold >= 0.0 && high_threshold <= 1.0 && low_threshold <= high_threshold)) {
    throw ConfigError("control thresholds must satisfy 0 <= low <= high <= 1");
  }
  const TokenSeq empty;
  const auto& response = example.response ? *example.response : empty;
  if (response.empty()) return {control_id(vocab, kCtrlLow)};
  const double p = lexical_precision(response, example.document);
  if (p >= high_threshold) return {control_id(vocab, kCtrlHigh)};
  if (p <= low_threshold) return {control_id(vocab, kCtrlLow)};
  return {control_id(vocab, kCtrlMid)};
}

TokenSeq inference_control_tokens(const Vocabulary& vocab) { return {control_id(vocab, kCtrlHigh)}; }

}  // namespace ncd
