#include "ncd/scorers/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "ncd/core/error.hpp"
#include "ncd/core/hash.hpp"

namespace ncd {

std::size_t TokenSeqHash::operator()(const TokenSeq& seq) const noexcept {
  std::size_t h = seq.size();
  for (auto t : seq) h ^= static_cast<std::size_t>(t) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

NgramScorer::NgramScorer(Role role, NgramConfig config, std::size_t vocab_size, std::string vocab_hash)
    : role_(role), config_(config), vocab_size_(vocab_size), vocab_hash_(std::move(vocab_hash)) {
  if (config_.order < 1 || config_.order > 6) throw ConfigError("n-gram order must be in [1, 6]");
  if (!(config_.k > 0.0) || !std::isfinite(config_.k)) throw ConfigError("add-k constant must be > 0");
  if (vocab_size_ == 0) throw ConfigError("n-gram scorer needs a non-empty vocabulary");
}

void NgramScorer::observe(const Condition& condition, std::span<const TokenId> target) {
  if (condition.role != role_) throw ConfigError("training pair role does not match the scorer role");
  if (target.empty() || target.front() != Vocabulary::kSos) throw ConfigError("training target must start with <sos>");
  auto history = linearize(condition, config_.linearization);
  const auto max_hist = static_cast<std::size_t>(config_.order - 1);
  history.push_back(target.front());
  for (std::size_t i = 1; i < target.size(); ++i) {
    const TokenId next = target[i];
    if (next < 0 || static_cast<std::size_t>(next) >= vocab_size_) throw ConfigError("training token out of range");
    const std::size_t usable = std::min(max_hist, history.size());
    for (std::size_t len = 0; len <= usable; ++len) {
      TokenSeq key(history.end() - static_cast<std::ptrdiff_t>(len), history.end());
      auto& counts = table_[std::move(key)];
      ++counts.total;
      ++counts.next[next];
    }
    history.push_back(next);
  }
}

const NgramScorer::Counts* NgramScorer::lookup(std::span<const TokenId> history) const {
  const auto max_hist = static_cast<std::size_t>(config_.order - 1);
  for (std::size_t len = std::min(max_hist, history.size()) + 1; len-- > 0;) {
    TokenSeq key(history.end() - static_cast<std::ptrdiff_t>(len), history.end());
    auto it = table_.find(key);
    if (it != table_.end() && it->second.total > 0) return &it->second;
  }
  return nullptr;
}

LogProbVector NgramScorer::next_token_logprobs(const Condition& condition, std::span<const TokenId> prefix) const {
  if (condition.role != role_) throw ConfigError(std::string("scorer fitted for role ") + to_string(role_) +
                                                 " called with role " + to_string(condition.role));
  if (prefix.empty() || prefix.front() != Vocabulary::kSos) throw ConfigError("prefix must begin with <sos>");
  auto history = linearize(condition, config_.linearization);
  history.insert(history.end(), prefix.begin(), prefix.end());

  const auto v = static_cast<double>(vocab_size_);
  const Counts* counts = lookup(history);
  if (!counts) {
    return LogProbVector::Constant(static_cast<Eigen::Index>(vocab_size_), -std::log(v));
  }
  const double denom = static_cast<double>(counts->total) + config_.k * v;
  LogProbVector out = LogProbVector::Constant(static_cast<Eigen::Index>(vocab_size_), std::log(config_.k / denom));
  for (const auto& [token, c] : counts->next) {
    out(token) = std::log((static_cast<double>(c) + config_.k) / denom);
  }
  return out;
}

std::string NgramScorer::to_text() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "ncd-ngram 1\n";
  out << "role " << to_string(role_) << '\n';
  out << "order " << config_.order << '\n';
  out << "k " << config_.k << '\n';
  out << "vocab_size " << vocab_size_ << '\n';
  out << "vocab_hash " << vocab_hash_ << '\n';
  out << "linearization " << config_.linearization.max_history << ' ' << config_.linearization.max_document << ' '
      << (config_.linearization.history_side == TruncateSide::keep_recent ? "recent" : "oldest") << '\n';
  std::vector<const std::pair<const TokenSeq, Counts>*> rows;
  rows.reserve(table_.size());
  for (const auto& row : table_) rows.push_back(&row);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
  out << "histories " << rows.size() << '\n';
  for (const auto* row : rows) {
    out << row->first.size();
    for (auto t : row->first) out << ' ' << t;
    out << " | " << row->second.total << " |";
    for (const auto& [token, c] : row->second.next) out << ' ' << token << ':' << c;
    out << '\n';
  }
  return out.str();
}

NgramScorer NgramScorer::parse(std::string_view text, const Vocabulary& vocab) {
  std::istringstream in{std::string(text)};
  auto expect = [&](const std::string& key) {
    std::string word;
    if (!(in >> word) || word != key) throw DataError("model file: expected '" + key + "'");
  };
  expect("ncd-ngram");
  int version = 0;
  in >> version;
  if (version != 1) throw DataError("model file: unsupported version");
  std::string role_text, hash, side;
  NgramConfig config;
  std::size_t vocab_size = 0;
  expect("role");
  in >> role_text;
  expect("order");
  in >> config.order;
  expect("k");
  in >> config.k;
  expect("vocab_size");
  in >> vocab_size;
  expect("vocab_hash");
  in >> hash;
  expect("linearization");
  in >> config.linearization.max_history >> config.linearization.max_document >> side;
  config.linearization.history_side = side == "oldest" ? TruncateSide::keep_oldest : TruncateSide::keep_recent;
  if (!in) throw DataError("model file: truncated header");
  if (hash != vocab.hash() || vocab_size != vocab.size()) {
    throw DataError("model file vocabulary hash " + hash + " does not match vocabulary " + vocab.hash());
  }
  NgramScorer model(parse_role(role_text), config, vocab_size, hash);
  std::size_t rows = 0;
  expect("histories");
  in >> rows;
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t len = 0;
    in >> len;
    TokenSeq key(len);
    for (auto& t : key) in >> t;
    std::string bar;
    Counts counts;
    in >> bar >> counts.total >> bar;
    std::string line;
    std::getline(in, line);
    std::istringstream entries(line);
    std::string entry;
    while (entries >> entry) {
      auto colon = entry.find(':');
      if (colon == std::string::npos) throw DataError("model file: bad count entry");
      counts.next[std::stoi(entry.substr(0, colon))] = std::stoull(entry.substr(colon + 1));
    }
    if (!in) throw DataError("model file: truncated history table");
    model.table_.emplace(std::move(key), std::move(counts));
  }
  return model;
}

void NgramScorer::save(const std::filesystem::path& path) const { write_file(path, to_text()); }

NgramScorer NgramScorer::load(const std::filesystem::path& path, const Vocabulary& vocab) {
  return parse(read_file(path), vocab);
}

NgramScorer fit_ngram(std::span<const TrainingPair> corpus, const NgramConfig& config, const Vocabulary& vocab) {
  if (corpus.empty()) throw ConfigError("cannot fit an n-gram model on an empty corpus");
  const Role role = corpus.front().condition.role;
  NgramScorer model(role, config, vocab.size(), vocab.hash());
  for (const auto& pair : corpus) model.observe(pair.condition, pair.target);
  return model;
}

}  // namespace ncd
