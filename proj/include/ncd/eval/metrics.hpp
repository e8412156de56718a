#pragma once

#include <array>
#include <span>
#include <vector>

#include "ncd/core/types.hpp"
#include "ncd/scorers/scorer.hpp"

namespace ncd {

/// F1 of the multiset token overlap; 0 when either side is empty.
double token_f1(std::span<const TokenId> response, std::span<const TokenId> document);

/// LCS length divided by the response length; 0 for an empty response.
std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b);
double lcs_ratio(std::span<const TokenId> response, std::span<const TokenId> document);

/// Corpus-summed n-gram statistics for BLEU.
struct BleuStats {
  static constexpr int kMaxOrder = 4;
  std::array<double, kMaxOrder> matches{};
  std::array<double, kMaxOrder> totals{};
  std::array<double, kMaxOrder> reference_totals{};
  double hypothesis_length = 0.0;
  double reference_length = 0.0;

  void add(std::span<const TokenId> hypothesis, std::span<const TokenId> reference, int max_n = kMaxOrder);
  BleuStats& operator+=(const BleuStats& other);
  /// Geometric mean of clipped precisions (each floored at epsilon) times
  /// the brevity penalty. An order with no n-grams on either side of the
  /// corpus is left out of the mean.
  double score(int max_n = kMaxOrder, double epsilon = 1e-9) const;
};

/// Throws ConfigError when the lists differ in length or are empty.
double corpus_bleu(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references, int max_n = 4,
                   double epsilon = 1e-9);

/// Pooled log-probability and token count (tokens include <eos>).
struct PerplexityStats {
  double log_prob = 0.0;
  double tokens = 0.0;

  PerplexityStats& operator+=(const PerplexityStats& other);
  double perplexity() const;
};

/// Scores one response under an LM condition.
PerplexityStats perplexity_stats(const Scorer& lm, const Condition& condition, std::span<const TokenId> response);

/// exp(-sum log p / sum tokens) over the corpus.
double perplexity(const Scorer& lm, std::span<const TokenSeq> responses, std::span<const Condition> conditions);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace ncd
