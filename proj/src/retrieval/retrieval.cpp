#include "ncd/retrieval/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "ncd/core/error.hpp"

namespace ncd {
namespace {

std::map<TokenId, double> counts(std::span<const TokenId> tokens) {
  std::map<TokenId, double> out;
  for (auto t : tokens) out[t] += 1.0;
  return out;
}

void rank(std::vector<ScoredDocument>& docs, std::size_t k) {
  std::sort(docs.begin(), docs.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
    return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
  });
  if (docs.size() > k) docs.resize(k);
}

}  // namespace

RetrievalIndex::RetrievalIndex(const DocumentCollection& collection, std::string vocab_hash, Bm25Params bm25)
    : vocab_hash_(std::move(vocab_hash)), bm25_(bm25) {
  if (collection.empty()) throw ConfigError("cannot index an empty collection");
  TokenId max_id = 0;
  for (const auto& [id, tokens] : collection) {
    for (auto t : tokens) {
      if (t < 0) throw DataError("negative token id in document " + id);
      max_id = std::max(max_id, t);
    }
  }
  dimension_ = static_cast<Eigen::Index>(max_id) + 1;
  df_.assign(static_cast<std::size_t>(dimension_), 0);
  double total_length = 0.0;
  for (const auto& [id, tokens] : collection) {
    ids_.push_back(id);
    TermVector tf(dimension_);
    for (const auto& [t, c] : counts(tokens)) {
      tf.insert(t) = c;
      ++df_[static_cast<std::size_t>(t)];
    }
    tf_.push_back(std::move(tf));
    lengths_.push_back(static_cast<double>(tokens.size()));
    total_length += static_cast<double>(tokens.size());
  }
  average_length_ = total_length / static_cast<double>(ids_.size());
  for (const auto& tf : tf_) {
    TermVector w = tf;
    for (TermVector::InnerIterator it(w); it; ++it) it.valueRef() *= idf(static_cast<TokenId>(it.index()));
    tfidf_norm_.push_back(w.norm());
    tfidf_.push_back(std::move(w));
  }
}

std::size_t RetrievalIndex::document_frequency(TokenId term) const {
  if (term < 0 || term >= dimension_) return 0;
  return df_[static_cast<std::size_t>(term)];
}

double RetrievalIndex::idf(TokenId term) const {
  const double n = static_cast<double>(ids_.size());
  return std::log((n + 1.0) / (static_cast<double>(document_frequency(term)) + 1.0)) + 1.0;
}

double RetrievalIndex::cosine(std::span<const TokenId> query, std::size_t doc) const {
  double dot = 0.0;
  double query_norm2 = 0.0;
  for (const auto& [t, c] : counts(query)) {
    const double w = c * idf(t);
    query_norm2 += w * w;
    if (t >= 0 && t < dimension_) dot += w * tfidf_[doc].coeff(t);
  }
  if (query_norm2 == 0.0 || tfidf_norm_[doc] == 0.0) return 0.0;
  return dot / (std::sqrt(query_norm2) * tfidf_norm_[doc]);
}

double RetrievalIndex::bm25_score(std::span<const TokenId> query, std::size_t doc) const {
  const double norm = bm25_.k1 * (1.0 - bm25_.b + bm25_.b * lengths_[doc] / std::max(average_length_, 1e-12));
  double score = 0.0;
  for (const auto& [t, c] : counts(query)) {
    if (t < 0 || t >= dimension_) continue;
    const double tf = tf_[doc].coeff(t);
    if (tf == 0.0) continue;
    score += idf(t) * tf * (bm25_.k1 + 1.0) / (tf + norm);
  }
  return score;
}

std::optional<std::size_t> RetrievalIndex::position(const std::string& id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

const char* to_string(RetrieverKind kind) { return kind == RetrieverKind::bi ? "bi" : "cross"; }

RetrieverKind parse_retriever_kind(const std::string& text) {
  if (text == "bi") return RetrieverKind::bi;
  if (text == "cross") return RetrieverKind::cross;
  throw ConfigError("unknown retriever '" + text + "' (bi | cross)");
}

RetrievalIndex index_documents(const DocumentCollection& collection, std::string vocab_hash, Bm25Params bm25) {
  return RetrievalIndex(collection, std::move(vocab_hash), bm25);
}

RetrievalResult retrieve_bi(const RetrievalIndex& index, std::span<const Turn> context, std::size_t k,
                            std::string query_id) {
  if (k < 1) throw ConfigError("k must be >= 1");
  const auto query = flatten(context);
  RetrievalResult out{std::move(query_id), {}};
  for (std::size_t d = 0; d < index.size(); ++d) out.ranked.push_back({index.ids()[d], index.cosine(query, d)});
  rank(out.ranked, k);
  return out;
}

RetrievalResult retrieve_cross(const RetrievalIndex& index, std::span<const Turn> context, std::size_t k,
                               const std::optional<RetrievalResult>& candidates, std::string query_id) {
  if (k < 1) throw ConfigError("k must be >= 1");
  const auto query = flatten(context);
  RetrievalResult out{std::move(query_id), {}};
  if (candidates) {
    for (const auto& c : candidates->ranked) {
      auto d = index.position(c.doc_id);
      if (!d) throw DataError("candidate document '" + c.doc_id + "' is not indexed");
      out.ranked.push_back({c.doc_id, index.bm25_score(query, *d)});
    }
  } else {
    for (std::size_t d = 0; d < index.size(); ++d) out.ranked.push_back({index.ids()[d], index.bm25_score(query, d)});
  }
  rank(out.ranked, k);
  return out;
}

double recall_at_1(std::span<const RetrievalResult> results, const std::map<std::string, std::string>& gold) {
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    auto it = gold.find(r.query_id);
    if (it == gold.end()) throw DataError("no gold document for query '" + r.query_id + "'");
    if (!r.ranked.empty() && r.ranked.front().doc_id == it->second) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::string retrieval_jsonl(std::span<const RetrievalResult> results) {
  std::string out;
  for (const auto& r : results) {
    nlohmann::ordered_json line;
    line["query_id"] = r.query_id;
    line["ranked"] = nlohmann::ordered_json::array();
    for (const auto& d : r.ranked) line["ranked"].push_back({{"doc_id", d.doc_id}, {"score", d.score}});
    out += line.dump();
    out += '\n';
  }
  return out;
}

PipelineResult pipeline_decode(const RetrievalIndex& index, const DocumentCollection& collection,
                               const PipelineConfig& config, const ScorerSet& scorers, const GroundedExample& example,
                               const std::optional<std::string>& injected_document) {
  PipelineResult out;
  if (injected_document) {
    out.document_id = *injected_document;
    out.retrieval.query_id = example.id;
    out.retrieval.ranked.push_back({*injected_document, 0.0});
  } else {
    if (config.retriever == RetrieverKind::bi) {
      out.retrieval = retrieve_bi(index, example.context, 1, example.id);
    } else if (config.rerank_candidates > 0) {
      auto candidates = retrieve_bi(index, example.context, config.rerank_candidates, example.id);
      out.retrieval = retrieve_cross(index, example.context, 1, candidates, example.id);
    } else {
      out.retrieval = retrieve_cross(index, example.context, 1, std::nullopt, example.id);
    }
    out.document_id = out.retrieval.ranked.front().doc_id;
  }
  auto condition = Condition::direct(example.context, collection.at(out.document_id), example.control);
  out.decode = run_decoder(config.decoder, scorers, condition, config.scaling, config.beam);
  return out;
}

}  // namespace ncd
