#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ncd/core/vocabulary.hpp"
#include "ncd/scorers/scorer.hpp"

namespace ncd {

struct NgramConfig {
  int order = 3;
  double k = 0.1;  // add-k constant
  LinearizationOptions linearization;
};

/// A conditioning/target pair. The target starts with <sos>; every token
/// after it is a counted event.
struct TrainingPair {
  Condition condition;
  TokenSeq target;
};

struct TokenSeqHash {
  std::size_t operator()(const TokenSeq& seq) const noexcept;
};

/// Add-k smoothed n-gram model over the linearized conditioning followed by
/// the target. Histories never seen in training back off to their longest
/// seen suffix, so each returned row is a single add-k distribution.
class NgramScorer final : public Scorer {
 public:
  NgramScorer(Role role, NgramConfig config, std::size_t vocab_size, std::string vocab_hash);

  void observe(const Condition& condition, std::span<const TokenId> target);

  std::size_t vocab_size() const override { return vocab_size_; }
  LogProbVector next_token_logprobs(const Condition& condition, std::span<const TokenId> prefix) const override;

  Role role() const { return role_; }
  const NgramConfig& config() const { return config_; }
  const std::string& vocab_hash() const { return vocab_hash_; }

  /// Deterministic text dump: header, then histories in sorted order.
  std::string to_text() const;
  /// Throws DataError when the stored vocabulary hash differs from `vocab`.
  static NgramScorer parse(std::string_view text, const Vocabulary& vocab);
  void save(const std::filesystem::path& path) const;
  static NgramScorer load(const std::filesystem::path& path, const Vocabulary& vocab);

 private:
  struct Counts {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> next;
  };

  const Counts* lookup(std::span<const TokenId> history) const;

  Role role_;
  NgramConfig config_;
  std::size_t vocab_size_;
  std::string vocab_hash_;
  std::unordered_map<TokenSeq, Counts, TokenSeqHash> table_;
};

/// Fits one scorer on pairs that all share the same role.
NgramScorer fit_ngram(std::span<const TrainingPair> corpus, const NgramConfig& config, const Vocabulary& vocab);

}  // namespace ncd
