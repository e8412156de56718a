#include "ncd/core/types.hpp"

#include "ncd/core/error.hpp"

namespace ncd {

const char* to_string(Speaker speaker) { return speaker == Speaker::user ? "user" : "system"; }

Speaker parse_speaker(const std::string& text) {
  if (text == "user") return Speaker::user;
  if (text == "system") return Speaker::system;
  throw DataError("unknown speaker '" + text + "'");
}

TokenSeq flatten(std::span<const Turn> turns) {
  TokenSeq out;
  for (const auto& turn : turns) out.insert(out.end(), turn.tokens.begin(), turn.tokens.end());
  return out;
}

DocumentCollection::DocumentCollection(std::map<std::string, TokenSeq> documents)
    : documents_(std::move(documents)) {}

void DocumentCollection::add(const std::string& id, TokenSeq tokens) {
  if (!documents_.emplace(id, std::move(tokens)).second) {
    throw DataError("duplicate document id '" + id + "'");
  }
}

const TokenSeq& DocumentCollection::at(const std::string& id) const {
  auto it = documents_.find(id);
  if (it == documents_.end()) throw DataError("unknown document id '" + id + "'");
  return it->second;
}

}  // namespace ncd
