#pragma once

#include <span>

#include "ncd/scorers/scorer.hpp"

namespace ncd {

/// Every token gets -ln|V| regardless of condition and prefix.
class UniformScorer final : public Scorer {
 public:
  explicit UniformScorer(std::size_t vocab_size);
  std::size_t vocab_size() const override { return vocab_size_; }
  LogProbVector next_token_logprobs(const Condition& condition, std::span<const TokenId> prefix) const override;

 private:
  std::size_t vocab_size_;
};

/// All mass on a single response string. Prefixes that leave the string get
/// a uniform distribution so every row stays normalized.
class PointMassScorer final : public Scorer {
 public:
  PointMassScorer(std::size_t vocab_size, TokenSeq sequence);
  std::size_t vocab_size() const override { return vocab_size_; }
  LogProbVector next_token_logprobs(const Condition& condition, std::span<const TokenId> prefix) const override;

 private:
  std::size_t vocab_size_;
  TokenSeq sequence_;
};

/// Token-level conditionals of a finite weighted set of sequences. The next
/// token after `prefix` (without <sos>) has probability proportional to the
/// weight of sequences extending prefix+token; <eos> takes the weight of the
/// sequence equal to the prefix. Zero-mass prefixes yield a uniform row.
LogProbVector next_token_from_weighted(std::span<const TokenSeq> sequences, std::span<const double> weights,
                                       std::span<const TokenId> prefix, std::size_t vocab_size);

}  // namespace ncd
