#include "ncd/scorers/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ncd/core/error.hpp"
#include "ncd/core/vocabulary.hpp"

namespace ncd {
namespace {

LogProbVector uniform_row(std::size_t vocab_size) {
  return LogProbVector::Constant(static_cast<Eigen::Index>(vocab_size), -std::log(static_cast<double>(vocab_size)));
}

void check_prefix(std::span<const TokenId> prefix, std::size_t vocab_size) {
  if (prefix.empty() || prefix.front() != Vocabulary::kSos) throw ConfigError("prefix must begin with <sos>");
  for (auto t : prefix) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) throw ConfigError("prefix token out of range");
  }
}

}  // namespace

UniformScorer::UniformScorer(std::size_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size == 0) throw ConfigError("uniform scorer needs a non-empty vocabulary");
}

LogProbVector UniformScorer::next_token_logprobs(const Condition&, std::span<const TokenId> prefix) const {
  check_prefix(prefix, vocab_size_);
  return uniform_row(vocab_size_);
}

PointMassScorer::PointMassScorer(std::size_t vocab_size, TokenSeq sequence)
    : vocab_size_(vocab_size), sequence_(std::move(sequence)) {
  for (auto t : sequence_) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_ || Vocabulary::is_reserved(t)) {
      throw ConfigError("point-mass sequence must use ordinary in-range tokens");
    }
  }
}

LogProbVector PointMassScorer::next_token_logprobs(const Condition&, std::span<const TokenId> prefix) const {
  check_prefix(prefix, vocab_size_);
  auto body = prefix.subspan(1);
  if (body.size() > sequence_.size() || !std::equal(body.begin(), body.end(), sequence_.begin())) {
    return uniform_row(vocab_size_);
  }
  LogProbVector out = LogProbVector::Constant(static_cast<Eigen::Index>(vocab_size_),
                                              -std::numeric_limits<double>::infinity());
  TokenId next = body.size() == sequence_.size() ? Vocabulary::kEos : sequence_[body.size()];
  out(next) = 0.0;
  return out;
}

LogProbVector next_token_from_weighted(std::span<const TokenSeq> sequences, std::span<const double> weights,
                                       std::span<const TokenId> prefix, std::size_t vocab_size) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab_size));
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    if (s.size() < prefix.size() || !std::equal(prefix.begin(), prefix.end(), s.begin())) continue;
    TokenId next = s.size() == prefix.size() ? Vocabulary::kEos : s[prefix.size()];
    mass(next) += weights[i];
  }
  double total = mass.sum();
  if (!(total > 0.0)) return uniform_row(vocab_size);
  return (mass / total).array().log().matrix();
}

}  // namespace ncd
