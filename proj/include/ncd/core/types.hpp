#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ncd {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

enum class Speaker { user, system };

const char* to_string(Speaker speaker);
Speaker parse_speaker(const std::string& text);

struct Turn {
  Speaker speaker = Speaker::user;
  TokenSeq tokens;

  friend bool operator==(const Turn&, const Turn&) = default;
};

/// One dialog example: context turns, grounding document, gold response and
/// optional control tokens. Stored sequences never contain reserved markers.
struct GroundedExample {
  std::string id;
  std::vector<Turn> context;
  TokenSeq document;
  std::optional<TokenSeq> response;
  std::optional<TokenSeq> control;
  // Gold document id, when the example comes from a known collection.
  std::optional<std::string> document_id;

  friend bool operator==(const GroundedExample&, const GroundedExample&) = default;
};

/// Concatenation of all turn tokens in order.
TokenSeq flatten(std::span<const Turn> turns);

/// Document base keyed by id. Iteration order is sorted by id.
class DocumentCollection {
 public:
  DocumentCollection() = default;
  explicit DocumentCollection(std::map<std::string, TokenSeq> documents);

  void add(const std::string& id, TokenSeq tokens);
  const TokenSeq& at(const std::string& id) const;
  bool contains(const std::string& id) const { return documents_.count(id) != 0; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }

  auto begin() const { return documents_.begin(); }
  auto end() const { return documents_.end(); }

 private:
  std::map<std::string, TokenSeq> documents_;
};

}  // namespace ncd
