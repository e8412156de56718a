#include "ncd/scorers/scorer.hpp"

#include <cmath>

#include "ncd/core/error.hpp"
#include "ncd/core/vocabulary.hpp"

namespace ncd {

const char* to_string(Role role) {
  switch (role) {
    case Role::direct: return "direct";
    case Role::channel: return "channel";
    case Role::response_lm: return "lm";
  }
  return "?";
}

Role parse_role(const std::string& text) {
  if (text == "direct") return Role::direct;
  if (text == "channel") return Role::channel;
  if (text == "lm" || text == "response_lm") return Role::response_lm;
  throw ConfigError("unknown scorer role '" + text + "'");
}

Condition Condition::direct(std::vector<Turn> context, TokenSeq document, std::optional<TokenSeq> control) {
  Condition c;
  c.role = Role::direct;
  c.context = std::move(context);
  c.document = std::move(document);
  c.control = std::move(control);
  return c;
}

Condition Condition::channel(std::vector<Turn> context, TokenSeq response, bool complete) {
  Condition c;
  c.role = Role::channel;
  c.context = std::move(context);
  c.response = std::move(response);
  c.response_complete = complete;
  return c;
}

Condition Condition::response_lm(std::vector<Turn> context) {
  Condition c;
  c.role = Role::response_lm;
  c.context = std::move(context);
  return c;
}

void Condition::validate() const {
  switch (role) {
    case Role::direct:
      if (!document) throw ConfigError("direct condition requires a document");
      break;
    case Role::channel:
      if (document) throw ConfigError("channel condition must not carry the scored document");
      break;
    case Role::response_lm:
      if (document) throw ConfigError("response LM condition must not carry a document");
      break;
  }
}

namespace {

void append_history(std::vector<TokenId>& out, const TokenSeq& history, const LinearizationOptions& opt) {
  if (history.size() <= opt.max_history) {
    out.insert(out.end(), history.begin(), history.end());
  } else if (opt.history_side == TruncateSide::keep_recent) {
    out.insert(out.end(), history.end() - static_cast<std::ptrdiff_t>(opt.max_history), history.end());
  } else {
    out.insert(out.end(), history.begin(), history.begin() + static_cast<std::ptrdiff_t>(opt.max_history));
  }
}

}  // namespace

std::vector<TokenId> linearize(const Condition& condition, const LinearizationOptions& options) {
  condition.validate();
  std::vector<TokenId> out;
  const auto history = flatten(condition.context);
  switch (condition.role) {
    case Role::direct: {
      const auto& doc = *condition.document;
      auto n = std::min(doc.size(), options.max_document);
      out.insert(out.end(), doc.begin(), doc.begin() + static_cast<std::ptrdiff_t>(n));
      out.push_back(Vocabulary::kSep);
      append_history(out, history, options);
      out.push_back(Vocabulary::kSep);
      if (condition.control) out.insert(out.end(), condition.control->begin(), condition.control->end());
      break;
    }
    case Role::channel:
      append_history(out, history, options);
      out.push_back(Vocabulary::kSep);
      if (condition.response) out.insert(out.end(), condition.response->begin(), condition.response->end());
      break;
    case Role::response_lm:
      append_history(out, history, options);
      break;
  }
  return out;
}

TokenSeq frame(std::span<const TokenId> tokens) {
  TokenSeq out;
  out.reserve(tokens.size() + 2);
  out.push_back(Vocabulary::kSos);
  out.insert(out.end(), tokens.begin(), tokens.end());
  out.push_back(Vocabulary::kEos);
  return out;
}

double Scorer::sequence_logprob(const Condition& condition, std::span<const TokenId> framed) const {
  if (framed.size() < 2 || framed.front() != Vocabulary::kSos || framed.back() != Vocabulary::kEos) {
    throw ConfigError("sequence_logprob expects a <sos> ... <eos> framed sequence");
  }
  double total = 0.0;
  for (std::size_t i = 1; i < framed.size(); ++i) {
    auto lp = next_token_logprobs(condition, framed.first(i));
    total += lp(framed[i]);
  }
  return total;
}

bool is_normalized(const LogProbVector& logprobs, double tolerance) {
  if (logprobs.size() == 0) return false;
  double sum = logprobs.array().exp().sum();
  return std::isfinite(sum) && std::abs(sum - 1.0) <= tolerance;
}

}  // namespace ncd
