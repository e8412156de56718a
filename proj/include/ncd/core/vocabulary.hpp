#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ncd/core/types.hpp"

namespace ncd {

inline constexpr std::string_view kSosSymbol = "<sos>";
inline constexpr std::string_view kEosSymbol = "<eos>";
inline constexpr std::string_view kUnkSymbol = "<unk>";
inline constexpr std::string_view kSepSymbol = "<sep>";

inline constexpr std::string_view kCtrlHigh = "<ctrl-high>";
inline constexpr std::string_view kCtrlMid = "<ctrl-mid>";
inline constexpr std::string_view kCtrlLow = "<ctrl-low>";

/// Closed token inventory. Ids 0..3 are always <sos>, <eos>, <unk>, <sep>.
class Vocabulary {
 public:
  static constexpr TokenId kSos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kSep = 3;
  static constexpr std::size_t kNumReserved = 4;

  /// Builds from the ordinary (non-reserved) tokens; reserved symbols are
  /// prepended. Throws ConfigError on duplicates or reserved surface forms.
  explicit Vocabulary(std::span<const std::string> ordinary_tokens = {});

  /// Parses the one-token-per-line file format.
  static Vocabulary parse(std::string_view text);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_text() const;

  /// Total lookup, unknown surface forms map to <unk>.
  TokenId id(std::string_view token) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;

  std::size_t size() const { return tokens_.size(); }
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }
  static bool is_reserved(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumReserved); }
  static bool is_reserved_symbol(std::string_view token);

  /// Copy with extra ordinary tokens appended (already present ones skipped).
  Vocabulary with_tokens(std::span<const std::string> extra) const;
  /// Copy that contains the three control tokens.
  Vocabulary with_control_tokens() const;

  /// SHA-256 of the file representation.
  std::string hash() const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Lowercased whitespace split mapped through the vocabulary. Reserved
/// surface forms are not honoured and map to <unk>.
TokenSeq tokenize(std::string_view text, const Vocabulary& vocab);

/// Joins token surface forms with single spaces.
std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab);

/// Lowercased whitespace tokens of a string, without vocabulary lookup.
std::vector<std::string> split_words(std::string_view text);

/// Reserved symbols followed by every token with count >= min_count, ordered
/// by descending frequency and then lexicographically.
Vocabulary build_vocabulary(std::span<const std::string> corpus, int min_count);

}  // namespace ncd
