#include "ncd/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ncd/core/error.hpp"

namespace ncd {
namespace {

std::map<TokenId, std::size_t> bag(std::span<const TokenId> tokens) {
  std::map<TokenId, std::size_t> out;
  for (auto t : tokens) ++out[t];
  return out;
}

std::map<TokenSeq, double> ngrams(std::span<const TokenId> tokens, std::size_t n) {
  std::map<TokenSeq, double> out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) out[TokenSeq(tokens.begin() + i, tokens.begin() + i + n)] += 1.0;
  return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double token_f1(std::span<const TokenId> response, std::span<const TokenId> document) {
  if (response.empty() || document.empty()) return 0.0;
  const auto r = bag(response);
  const auto d = bag(document);
  std::size_t overlap = 0;
  for (const auto& [t, c] : r) {
    if (auto it = d.find(t); it != d.end()) overlap += std::min(c, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(response.size());
  const double q = static_cast<double>(overlap) / static_cast<double>(document.size());
  return 2.0 * p * q / (p + q);
}

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double lcs_ratio(std::span<const TokenId> response, std::span<const TokenId> document) {
  if (response.empty()) return 0.0;
  return static_cast<double>(lcs_length(response, document)) / static_cast<double>(response.size());
}

void BleuStats::add(std::span<const TokenId> hypothesis, std::span<const TokenId> reference, int max_n) {
  for (int n = 1; n <= max_n && n <= kMaxOrder; ++n) {
    const auto h = ngrams(hypothesis, static_cast<std::size_t>(n));
    const auto r = ngrams(reference, static_cast<std::size_t>(n));
    for (const auto& [g, c] : r) reference_totals[static_cast<std::size_t>(n - 1)] += c;
    for (const auto& [g, c] : h) {
      totals[static_cast<std::size_t>(n - 1)] += c;
      if (auto it = r.find(g); it != r.end()) matches[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
    }
  }
  hypothesis_length += static_cast<double>(hypothesis.size());
  reference_length += static_cast<double>(reference.size());
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t i = 0; i < kMaxOrder; ++i) {
    matches[i] += o.matches[i];
    totals[i] += o.totals[i];
    reference_totals[i] += o.reference_totals[i];
  }
  hypothesis_length += o.hypothesis_length;
  reference_length += o.reference_length;
  return *this;
}

double BleuStats::score(int max_n, double epsilon) const {
  if (max_n < 1 || max_n > kMaxOrder) throw ConfigError("BLEU order must be in 1..4");
  if (hypothesis_length == 0.0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < max_n; ++n) {
    const auto i = static_cast<std::size_t>(n);
    if (totals[i] == 0.0 && reference_totals[i] == 0.0) continue;
    const double p = totals[i] > 0.0 ? matches[i] / totals[i] : 0.0;
    log_sum += std::log(std::max(p, epsilon));
    ++orders;
  }
  const double bp =
      hypothesis_length >= reference_length ? 1.0 : std::exp(1.0 - reference_length / hypothesis_length);
  return bp * std::exp(log_sum / orders);
}

double corpus_bleu(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references, int max_n,
                   double epsilon) {
  if (hypotheses.size() != references.size()) throw ConfigError("BLEU needs one reference per hypothesis");
  if (references.empty()) throw ConfigError("BLEU needs at least one reference");
  BleuStats stats;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) stats.add(hypotheses[i], references[i], max_n);
  return stats.score(max_n, epsilon);
}

PerplexityStats& PerplexityStats::operator+=(const PerplexityStats& o) {
  log_prob += o.log_prob;
  tokens += o.tokens;
  return *this;
}

double PerplexityStats::perplexity() const {
  if (tokens == 0.0) return 1.0;
  return std::exp(-log_prob / tokens);
}

PerplexityStats perplexity_stats(const Scorer& lm, const Condition& condition, std::span<const TokenId> response) {
  const auto framed = frame(response);
  return {lm.sequence_logprob(condition, framed), static_cast<double>(framed.size() - 1)};
}

double perplexity(const Scorer& lm, std::span<const TokenSeq> responses, std::span<const Condition> conditions) {
  if (responses.size() != conditions.size()) throw ConfigError("perplexity needs one condition per sequence");
  PerplexityStats stats;
  for (std::size_t i = 0; i < responses.size(); ++i) stats += perplexity_stats(lm, conditions[i], responses[i]);
  return stats.perplexity();
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman needs two equal series of length >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ncd
