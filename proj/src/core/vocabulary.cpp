#include "ncd/core/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "ncd/core/error.hpp"
#include "ncd/core/hash.hpp"

namespace ncd {
namespace {

constexpr std::string_view kReserved[] = {kSosSymbol, kEosSymbol, kUnkSymbol, kSepSymbol};

}  // namespace

bool Vocabulary::is_reserved_symbol(std::string_view token) {
  return std::find(std::begin(kReserved), std::end(kReserved), token) != std::end(kReserved);
}

Vocabulary::Vocabulary(std::span<const std::string> ordinary_tokens) {
  tokens_.reserve(kNumReserved + ordinary_tokens.size());
  for (auto r : kReserved) tokens_.emplace_back(r);
  for (const auto& t : ordinary_tokens) {
    if (is_reserved_symbol(t)) throw ConfigError("reserved symbol '" + t + "' listed as ordinary token");
    if (t.empty() || std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); })) {
      throw ConfigError("vocabulary token must be non-empty without whitespace");
    }
    tokens_.push_back(t);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < kNumReserved) throw DataError("vocabulary file shorter than the reserved block");
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (lines[i] != kReserved[i]) {
      throw DataError("vocabulary line " + std::to_string(i + 1) + " must be " + std::string(kReserved[i]));
    }
  }
  std::vector<std::string> ordinary(lines.begin() + kNumReserved, lines.end());
  try {
    return Vocabulary(ordinary);
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void Vocabulary::save(const std::filesystem::path& path) const { write_file(path, to_text()); }

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) throw DataError("token id " + std::to_string(id) + " out of vocabulary range");
  return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::with_tokens(std::span<const std::string> extra) const {
  std::vector<std::string> ordinary(tokens_.begin() + kNumReserved, tokens_.end());
  for (const auto& t : extra) {
    if (!index_.count(t)) ordinary.push_back(t);
  }
  return Vocabulary(ordinary);
}

Vocabulary Vocabulary::with_control_tokens() const {
  const std::vector<std::string> ctrl = {std::string(kCtrlHigh), std::string(kCtrlMid), std::string(kCtrlLow)};
  return with_tokens(ctrl);
}

std::string Vocabulary::hash() const { return sha256_hex(to_text()); }

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSeq ids;
  for (const auto& w : split_words(text)) {
    ids.push_back(Vocabulary::is_reserved_symbol(w) ? Vocabulary::kUnk : vocab.id(w));
  }
  return ids;
}

std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(tokens[i]);
  }
  return out;
}

Vocabulary build_vocabulary(std::span<const std::string> corpus, int min_count) {
  if (corpus.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string, long> counts;
  for (const auto& line : corpus) {
    for (auto& w : split_words(line)) {
      if (!Vocabulary::is_reserved_symbol(w)) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_count) kept.emplace_back(w, c);
  }
  // counts is already lexicographic, stable sort keeps that for ties
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> ordinary;
  ordinary.reserve(kept.size());
  for (auto& [w, c] : kept) ordinary.push_back(w);
  return Vocabulary(ordinary);
}

}  // namespace ncd
