#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ncd/scorers/scorer.hpp"

namespace ncd::wire {

// Line-delimited JSON scorer protocol. One object per line, no other
// framing. Non-finite log-probabilities are sent as null and read back as
// -inf. The optional "response"/"complete" fields carry the channel model's
// conditioning response; "document" is null for the channel role.

enum class Op { next, seq };

struct Request {
  std::string id;
  Op op = Op::next;
  Role role = Role::direct;
  TokenSeq context;
  std::optional<TokenSeq> document;
  std::optional<TokenSeq> control;
  std::optional<TokenSeq> response;
  bool complete = false;
  TokenSeq prefix;
  std::optional<TokenSeq> target;
};

struct Response {
  std::string id;
  std::optional<std::vector<double>> logprobs;  // "next"
  std::optional<double> logprob;                // "seq"
  std::optional<std::string> error;
};

std::string encode(const Request& request);
std::string encode(const Response& response);

/// Throws DataError on malformed input.
Request decode_request(std::string_view line);
Response decode_response(std::string_view line);

/// Best-effort id of a line that failed to decode, empty if none found.
std::string salvage_id(std::string_view line);

Request make_request(std::string id, Op op, const Condition& condition, std::span<const TokenId> sequence);
Condition condition_of(const Request& request);

/// Server-side evaluation of one request line; never throws, failures
/// become error responses that echo the request id.
std::string answer_line(std::string_view line, const Scorer* direct, const Scorer* channel, const Scorer* lm);

}  // namespace ncd::wire
