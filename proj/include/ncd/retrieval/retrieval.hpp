#pragma once

#include <Eigen/SparseCore>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncd/core/types.hpp"
#include "ncd/decode/decode.hpp"

namespace ncd {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Term statistics of a document collection. Documents keep the collection's
/// id order.
class RetrievalIndex {
 public:
  using TermVector = Eigen::SparseVector<double>;

  /// Throws ConfigError on an empty collection.
  explicit RetrievalIndex(const DocumentCollection& collection, std::string vocab_hash = {}, Bm25Params bm25 = {});

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& vocab_hash() const { return vocab_hash_; }
  const Bm25Params& bm25() const { return bm25_; }

  /// ln((N + 1) / (df + 1)) + 1
  double idf(TokenId term) const;
  std::size_t document_frequency(TokenId term) const;
  const TermVector& term_frequencies(std::size_t doc) const { return tf_[doc]; }
  double length(std::size_t doc) const { return lengths_[doc]; }
  double average_length() const { return average_length_; }

  /// Cosine similarity between tf-idf vectors.
  double cosine(std::span<const TokenId> query, std::size_t doc) const;
  double bm25_score(std::span<const TokenId> query, std::size_t doc) const;

  std::optional<std::size_t> position(const std::string& id) const;

 private:
  Eigen::Index dimension_ = 0;
  std::vector<std::string> ids_;
  std::vector<TermVector> tf_;
  std::vector<TermVector> tfidf_;
  std::vector<double> tfidf_norm_;
  std::vector<double> lengths_;
  std::vector<std::size_t> df_;
  double average_length_ = 0.0;
  std::string vocab_hash_;
  Bm25Params bm25_;
};

struct ScoredDocument {
  std::string doc_id;
  double score = 0.0;

  friend bool operator==(const ScoredDocument&, const ScoredDocument&) = default;
};

struct RetrievalResult {
  std::string query_id;
  std::vector<ScoredDocument> ranked;  // score descending, ties by doc id

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

enum class RetrieverKind { bi, cross };

const char* to_string(RetrieverKind kind);
RetrieverKind parse_retriever_kind(const std::string& text);

RetrievalIndex index_documents(const DocumentCollection& collection, std::string vocab_hash = {}, Bm25Params bm25 = {});

/// tf-idf cosine over the whole collection, top k.
RetrievalResult retrieve_bi(const RetrievalIndex& index, std::span<const Turn> context, std::size_t k,
                            std::string query_id = {});

/// BM25 over the collection, or over `candidates` only when given.
RetrievalResult retrieve_cross(const RetrievalIndex& index, std::span<const Turn> context, std::size_t k,
                               const std::optional<RetrievalResult>& candidates = std::nullopt,
                               std::string query_id = {});

/// Fraction of results whose rank-1 document is the gold one. Throws
/// DataError naming the first query without a gold label.
double recall_at_1(std::span<const RetrievalResult> results, const std::map<std::string, std::string>& gold);

/// JSONL: {"query_id", "ranked": [{"doc_id", "score"}...]}
std::string retrieval_jsonl(std::span<const RetrievalResult> results);

struct PipelineConfig {
  RetrieverKind retriever = RetrieverKind::cross;
  std::size_t rerank_candidates = 10;  // cross rescoring depth over bi results; 0 scores everything
  DecoderKind decoder = DecoderKind::online_ours;
  ScalingConfig scaling = ScalingConfig::online_default();
  BeamConfig beam;
};

struct PipelineResult {
  std::string document_id;
  RetrievalResult retrieval;
  DecodeResult decode;
};

/// Retrieves the rank-1 document and decodes the example grounded on it. An
/// injected document id bypasses the retriever.
PipelineResult pipeline_decode(const RetrievalIndex& index, const DocumentCollection& collection,
                               const PipelineConfig& config, const ScorerSet& scorers, const GroundedExample& example,
                               const std::optional<std::string>& injected_document = std::nullopt);

}  // namespace ncd
