#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncd/core/types.hpp"

namespace ncd {

/// Which factor of the noisy-channel decomposition a scorer plays.
enum class Role {
  direct,       // p(response | context, document)
  channel,      // p(document | response, context)
  response_lm,  // p(response | context)
};

const char* to_string(Role role);
Role parse_role(const std::string& text);

/// Conditioning side of a scoring call. For the channel role the response
/// (possibly a prefix) is part of the conditioning and the document is the
/// scored sequence, so `document` must be empty.
struct Condition {
  Role role = Role::direct;
  std::vector<Turn> context;
  std::optional<TokenSeq> document;
  std::optional<TokenSeq> control;
  std::optional<TokenSeq> response;
  // Channel only: the response is complete rather than a prefix. Scorers
  // trained on truncated responses may ignore it.
  bool response_complete = false;

  static Condition direct(std::vector<Turn> context, TokenSeq document, std::optional<TokenSeq> control = {});
  static Condition channel(std::vector<Turn> context, TokenSeq response, bool complete);
  static Condition response_lm(std::vector<Turn> context);

  /// Throws ConfigError if the role invariants do not hold.
  void validate() const;
};

enum class TruncateSide { keep_recent, keep_oldest };

/// Input-length limits applied during linearization. History keeps the most
/// recent tokens by default; documents are cut off at the end.
struct LinearizationOptions {
  std::size_t max_history = 384;
  std::size_t max_document = 128;
  TruncateSide history_side = TruncateSide::keep_recent;

  friend bool operator==(const LinearizationOptions&, const LinearizationOptions&) = default;
};

/// Token sequence that precedes the <sos> of the scored target:
///   direct       document <sep> context <sep> [control]
///   channel      context <sep> response
///   response_lm  context
std::vector<TokenId> linearize(const Condition& condition, const LinearizationOptions& options = {});

using LogProbVector = Eigen::VectorXd;

/// <sos> tokens <eos>
TokenSeq frame(std::span<const TokenId> tokens);

/// Locally-normalized conditional sequence model. Implementations must be
/// safe to call concurrently through a const reference.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::size_t vocab_size() const = 0;

  /// Natural-log distribution over the whole vocabulary for the token that
  /// follows `prefix`. The prefix starts with <sos>.
  virtual LogProbVector next_token_logprobs(const Condition& condition, std::span<const TokenId> prefix) const = 0;

  /// Log-probability of a <sos>...<eos> framed sequence, as the sum of the
  /// per-step entries.
  virtual double sequence_logprob(const Condition& condition, std::span<const TokenId> framed) const;
};

/// Checks that exp(logprobs) sums to one within `tolerance`.
bool is_normalized(const LogProbVector& logprobs, double tolerance);

}  // namespace ncd
