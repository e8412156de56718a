#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ncd/core/types.hpp"
#include "ncd/core/vocabulary.hpp"
#include "ncd/scorers/ngram.hpp"

namespace ncd {

enum class TruncationDistribution { uniform, none };

/// How channel-model training responses are cut. `uniform` draws the kept
/// prefix length n uniformly from {0, ..., N} for a response of length N.
struct TruncationPolicy {
  TruncationDistribution distribution = TruncationDistribution::uniform;
  std::uint64_t seed = 0;
};

/// One pair per example: the (possibly truncated) response conditions the
/// channel model and the framed document is the target.
std::vector<TrainingPair> make_channel_training_pairs(std::span<const GroundedExample> examples,
                                                      const TruncationPolicy& policy);

/// Framed response given document, context and (optionally) control tokens.
std::vector<TrainingPair> make_direct_training_pairs(std::span<const GroundedExample> examples,
                                                     bool use_control = false);

/// Framed response given context only.
std::vector<TrainingPair> make_lm_training_pairs(std::span<const GroundedExample> examples);

/// Fraction of distinct response tokens that also occur in the document.
double lexical_precision(std::span<const TokenId> response, std::span<const TokenId> document);

/// Single control token bucketing lexical precision: >= high gives
/// <ctrl-high>, <= low gives <ctrl-low>, anything between <ctrl-mid>. Empty
/// responses get <ctrl-low>. The vocabulary must contain the control tokens.
TokenSeq annotate_control_tokens(const GroundedExample& example, const Vocabulary& vocab, double high_threshold,
                                 double low_threshold);

/// The control sequence forced at inference time.
TokenSeq inference_control_tokens(const Vocabulary& vocab);

}  // namespace ncd
