#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncd/core/types.hpp"
#include "ncd/core/vocabulary.hpp"
#include "ncd/scorers/scorer.hpp"

namespace ncd {

/// Row-major so a table row (one conditioning event) is contiguous.
using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Recipe for a synthetic grounded-dialog world small enough to enumerate.
struct WorldSpec {
  int vocab_size = 6;  // generated tokens t0..t{n-1}, excluding reserved
  int num_documents = 3;
  int max_context_len = 2;
  int max_doc_len = 3;
  int max_response_len = 3;
  double grounding_strength = 0.7;  // weight of the document-copying process
  std::uint64_t seed = 1;
  int context_pool_size = 8;
  // Contexts are drawn from the tokens of one named document, documents use
  // disjoint token sets, and p(d|c) puts all mass on the named document.
  bool lexical_contexts = false;
  double copy_smoothing = 0.05;
  // Overrides the random p(d|c) with the same prior for every context.
  std::optional<std::vector<double>> document_prior;

  /// Throws ConfigError, including when vocab_size^max_response_len > 1e6.
  void validate() const;

  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

inline constexpr double kEnumerabilityLimit = 1e6;

/// Explicit joint p(c) p(d|c) p(u|c,d) over a context pool, a document set
/// and every response of length 1..max_response_len. Responses are indexed
/// length-major, then lexicographically by token id.
class WorldModel {
 public:
  WorldModel(WorldSpec spec, std::vector<TokenSeq> contexts, std::vector<TokenSeq> documents,
             Eigen::VectorXd context_prior, Table document_given_context, Table response_table);

  const WorldSpec& spec() const { return spec_; }
  const Vocabulary& vocabulary() const { return vocabulary_; }
  const std::vector<TokenSeq>& contexts() const { return contexts_; }
  const std::vector<TokenSeq>& documents() const { return documents_; }
  std::size_t num_contexts() const { return contexts_.size(); }
  std::size_t num_documents() const { return documents_.size(); }

  /// p(c)
  const Eigen::VectorXd& context_prior() const { return context_prior_; }
  /// p(d|c), contexts x documents
  const Table& document_given_context() const { return document_given_context_; }
  /// p(u|c,d), row c * |D| + d, one column per enumerated response string
  const Table& response_table() const { return response_table_; }
  /// p(u|c) = sum_d p(d|c) p(u|c,d), contexts x responses
  const Table& response_lm_table() const { return lm_table_; }

  /// Probability mass of all responses starting with `prefix` (the empty
  /// prefix has mass one). Zero for prefixes outside the enumerated space.
  double prefix_mass(std::size_t row, std::span<const TokenId> prefix) const;
  double lm_prefix_mass(std::size_t context, std::span<const TokenId> prefix) const;

  std::size_t row(std::size_t context, std::size_t document) const { return context * documents_.size() + document; }

  std::size_t alphabet_size() const { return static_cast<std::size_t>(spec_.vocab_size); }
  TokenId first_token() const { return static_cast<TokenId>(Vocabulary::kNumReserved); }
  std::size_t num_responses() const { return static_cast<std::size_t>(response_table_.cols()); }
  TokenSeq response(std::size_t index) const;
  /// Index of a response string (length 1..max), nullopt when not enumerated.
  std::optional<std::size_t> response_index(std::span<const TokenId> response) const;

  std::optional<std::size_t> context_index(std::span<const TokenId> flattened) const;
  std::optional<std::size_t> document_index(std::span<const TokenId> document) const;
  static std::string document_id(std::size_t index) { return "d" + std::to_string(index); }
  DocumentCollection collection() const;

  /// Single JSON document with the spec and every factor table.
  std::string to_json() const;
  static WorldModel from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static WorldModel load(const std::filesystem::path& path);

 private:
  void derive();
  std::optional<std::size_t> prefix_index(std::span<const TokenId> prefix) const;

  WorldSpec spec_;
  Vocabulary vocabulary_;
  std::vector<TokenSeq> contexts_;
  std::vector<TokenSeq> documents_;
  Eigen::VectorXd context_prior_;
  Table document_given_context_;
  Table response_table_;
  // derived; prefix tables index every string of length 0..max, empty first
  Table lm_table_;
  Table prefix_mass_;
  Table lm_prefix_mass_;
  std::vector<std::size_t> length_offset_;
  std::map<TokenSeq, std::size_t> context_lookup_;
  std::map<TokenSeq, std::size_t> document_lookup_;
};

/// Deterministic in spec.seed. p(u|c,d) mixes a document-copying Markov
/// chain (weight grounding_strength) with a context-only chain.
WorldModel build_world(const WorldSpec& spec);

enum class ExactRole { direct, channel, channel_partial, response_lm };

/// Tabular scorer over the world's exact conditionals. The world must outlive
/// the scorer. `channel` scores p(d|u,c) for complete responses and the
/// prefix-marginal p(d|u_0^n,c) for prefixes; `channel_partial` always uses
/// the prefix-marginal.
std::unique_ptr<Scorer> exact_conditional(const WorldModel& world, ExactRole role);

/// p(d|c), contexts x documents.
Table retrieval_posterior(const WorldModel& world);

/// Exact document posterior of the channel model for one context, given a
/// complete response or a response prefix.
Eigen::VectorXd document_posterior(const WorldModel& world, std::size_t context, std::span<const TokenId> response,
                                   bool complete);

/// n i.i.d. draws from the joint, reproducible under seed. n must be >= 1.
std::vector<GroundedExample> sample_dataset(const WorldModel& world, std::size_t n, std::uint64_t seed);

}  // namespace ncd
