#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncd/core/types.hpp"
#include "ncd/scorers/scorer.hpp"

namespace ncd {

/// Weights of the direct, channel and response-LM log-probabilities.
struct ScalingConfig {
  double lambda_direct = 1.0;
  double lambda_channel = 0.0;
  double lambda_lm = 0.0;

  static ScalingConfig direct_only() { return {1.0, 0.0, 0.0}; }
  static ScalingConfig rerank_default() { return {1.0, 0.5, 0.2}; }
  static ScalingConfig online_default() { return {1.0, 0.6, 0.4}; }

  /// Throws ConfigError unless every weight is finite and >= 0.
  void validate() const;

  friend bool operator==(const ScalingConfig&, const ScalingConfig&) = default;
};

struct BeamConfig {
  int beam = 4;
  int liu_k1 = 2;
  int liu_k2 = 2;
  int max_len = 16;  // generated tokens before <eos>
  bool length_normalize_final = true;
  // Accumulate the response LM per step instead of rescoring the prefix.
  bool incremental_lm = false;
  // Never generated, in addition to <sos>, <unk> and <sep>.
  std::vector<TokenId> banned_tokens;

  void validate() const;

  friend bool operator==(const BeamConfig&, const BeamConfig&) = default;
};

enum class DecoderKind { direct, rerank, online_ours, online_liu, oracle };

const char* to_string(DecoderKind kind);
DecoderKind parse_decoder_kind(const std::string& text);

/// k for direct search, reranking and ours; k1 * k2 for the Liu variant.
int effective_beam_size(DecoderKind kind, const BeamConfig& cfg);

/// The scaling a decoder uses when none is configured.
ScalingConfig default_scaling(DecoderKind kind);

struct ScoreBreakdown {
  double direct_lp = 0.0;
  double channel_lp = 0.0;
  double lm_lp = 0.0;

  friend bool operator==(const ScoreBreakdown&, const ScoreBreakdown&) = default;
};

struct Hypothesis {
  TokenSeq tokens;  // starts with <sos>, ends with <eos> when finished
  bool finished = false;
  ScoreBreakdown breakdown;
  double combined = 0.0;

  /// Generated tokens without <sos> and <eos>.
  TokenSeq response() const;
  /// Generated tokens including <eos>.
  std::size_t length() const { return tokens.empty() ? 0 : tokens.size() - 1; }

  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

/// The lambda-weighted sum. Zero weights drop their term, so a -inf score
/// under a zero weight does not produce NaN.
double combined_score(const ScoreBreakdown& breakdown, const ScalingConfig& scaling);
double combined_score(const Hypothesis& hyp, const ScalingConfig& scaling);

/// Score used for the final pick: combined, or combined / length.
double selection_score(const Hypothesis& hyp, bool length_normalize);

struct Provenance {
  std::string decoder;
  ScalingConfig scaling;
  BeamConfig beam;
  int effective_beam = 0;
  std::optional<std::uint64_t> seed;
};

struct NBestList {
  std::vector<Hypothesis> hypotheses;  // combined descending, ties lexicographic
  Provenance provenance;
  // false when no hypothesis finished and the unfinished ones are reported
  bool complete = true;
};

/// Sorts by combined score descending, ties by smaller token sequence.
void sort_nbest(std::vector<Hypothesis>& hyps);

/// Scorers for the three roles. Channel and LM may be null for direct
/// search; the noisy-channel decoders require all three.
struct ScorerSet {
  const Scorer* direct = nullptr;
  const Scorer* channel = nullptr;
  const Scorer* lm = nullptr;
};

/// Outcome of any decoder: the selected hypothesis, the finished pool and
/// per-hypothesis warnings (reranking exclusions).
struct DecodeResult {
  Hypothesis best;
  NBestList nbest;
  std::vector<std::string> warnings;
};

/// Ids allowed after <sos>, ascending: everything except <sos>, <unk>,
/// <sep> and the banned tokens.
std::vector<TokenId> generation_alphabet(std::size_t vocab_size, std::span<const TokenId> banned);

/// Beam search over the direct log-probability. `condition` is a direct
/// condition. Returns up to k finished hypotheses.
NBestList beam_search_direct(const Scorer& direct, const Condition& condition, const BeamConfig& cfg);

/// Direct beam search in which every entry proposes only its best
/// `expansions` next tokens.
NBestList beam_search_direct_limited(const Scorer& direct, const Condition& condition, const BeamConfig& cfg,
                                     int expansions);

/// Rescores every hypothesis with the full-sequence channel and LM and
/// returns the argmax of the combined score. A hypothesis whose scorer call
/// fails is dropped with a warning; ScorerError when all fail.
DecodeResult rerank(const NBestList& nbest, const ScorerSet& scorers, const Condition& condition,
                    const ScalingConfig& scaling);

/// Online noisy-channel decoding: extensions are ranked by the direct
/// next-token log-prob plus the prefix's combined score, the top k survive
/// and are rescored on their new prefixes.
DecodeResult online_decode(const ScorerSet& scorers, const Condition& condition, const ScalingConfig& scaling,
                           const BeamConfig& cfg);

/// Variant where each of k2 entries proposes its top-k1 direct extensions
/// and the pooled candidates are pruned to k2 by the combined score.
DecodeResult online_decode_liu(const ScorerSet& scorers, const Condition& condition, const ScalingConfig& scaling,
                               const BeamConfig& cfg);

struct OracleResult {
  Hypothesis best;
  std::vector<Hypothesis> table;  // every enumerated response, length-major then lexicographic
};

/// Scores every <eos>-terminated response of up to `max_len` generated tokens
/// over the generation alphabet. Channel and LM are only required when their
/// weight is non-zero. Throws ConfigError when |alphabet|^max_len > 1e6.
OracleResult enumerate_oracle(const ScorerSet& scorers, const Condition& condition, const ScalingConfig& scaling,
                              int max_len, bool length_normalize = false, std::span<const TokenId> banned = {});

/// Runs one decoder by kind.
DecodeResult run_decoder(DecoderKind kind, const ScorerSet& scorers, const Condition& condition,
                         const ScalingConfig& scaling, const BeamConfig& cfg);

}  // namespace ncd
