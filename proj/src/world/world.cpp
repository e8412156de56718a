#include "ncd/world/world.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>

#include "ncd/core/error.hpp"
#include "ncd/core/hash.hpp"
#include "ncd/scorers/tabular.hpp"

namespace ncd {
namespace {

using nlohmann::json;

constexpr double kRowTolerance = 1e-9;

std::vector<std::string> generated_tokens(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("t" + std::to_string(i));
  return out;
}

double ipow(double base, int exp) {
  double r = 1.0;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

Eigen::VectorXd dirichlet(std::mt19937_64& rng, Eigen::Index n, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = gamma(rng) + 1e-12;
  return v / v.sum();
}

/// First-order Markov chain over the alphabet.
struct Chain {
  Eigen::VectorXd initial;
  Table transition;  // rows sum to one

  double probability(std::span<const int> digits) const {
    double p = initial(digits[0]);
    for (std::size_t i = 1; i < digits.size(); ++i) p *= transition(digits[i - 1], digits[i]);
    return p;
  }
};

Chain babble_chain(std::mt19937_64& rng, int alphabet) {
  Chain c;
  c.initial = dirichlet(rng, alphabet, 0.5);
  c.transition.resize(alphabet, alphabet);
  for (int i = 0; i < alphabet; ++i) c.transition.row(i) = dirichlet(rng, alphabet, 0.5).transpose();
  return c;
}

/// Favours document tokens, and document bigrams for transitions. A small
/// jitter breaks the exact ties that permutation symmetry would create.
Chain copy_chain(std::mt19937_64& rng, const TokenSeq& doc, int alphabet, TokenId first, double smoothing) {
  std::uniform_real_distribution<double> jitter(0.0, 0.02);
  Eigen::VectorXd unigram = Eigen::VectorXd::Zero(alphabet);
  Table bigram = Table::Zero(alphabet, alphabet);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    unigram(doc[i] - first) += 1.0;
    if (i + 1 < doc.size()) bigram(doc[i] - first, doc[i + 1] - first) += 1.0;
  }
  Chain c;
  c.initial.resize(alphabet);
  for (int v = 0; v < alphabet; ++v) c.initial(v) = unigram(v) + smoothing + jitter(rng);
  c.initial /= c.initial.sum();
  c.transition.resize(alphabet, alphabet);
  for (int u = 0; u < alphabet; ++u) {
    for (int v = 0; v < alphabet; ++v) c.transition(u, v) = 2.0 * bigram(u, v) + unigram(v) + smoothing + jitter(rng);
    c.transition.row(u) /= c.transition.row(u).sum();
  }
  return c;
}

TokenSeq random_sequence(std::mt19937_64& rng, int max_len, std::span<const TokenId> pool) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  TokenSeq s(static_cast<std::size_t>(len(rng)));
  for (auto& t : s) t = pool[pick(rng)];
  return s;
}

template <typename Fn>
std::vector<TokenSeq> distinct_sequences(std::size_t count, Fn&& draw, const char* what) {
  std::set<TokenSeq> seen;
  std::vector<TokenSeq> out;
  for (int attempt = 0; out.size() < count; ++attempt) {
    if (attempt > 100000) throw ConfigError(std::string("cannot draw enough distinct ") + what);
    auto s = draw();
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

void renormalize_rows(Table& table, const char* what) {
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    double sum = table.row(r).sum();
    if (!(sum > 0.0)) throw ConfigError(std::string("zero-mass row in ") + what);
    if (std::abs(sum - 1.0) > 1e-6) throw ConfigError(std::string("row drift too large in ") + what);
    table.row(r) /= sum;
  }
}

json table_to_json(const Table& t) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < t.rows(); ++r) rows.push_back(std::vector<double>(t.row(r).data(), t.row(r).data() + t.cols()));
  return rows;
}

Table table_from_json(const json& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Table t(n, m);
  for (Eigen::Index r = 0; r < n; ++r) {
    auto values = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != m) throw DataError("world dump: ragged table");
    for (Eigen::Index c = 0; c < m; ++c) t(r, c) = values[static_cast<std::size_t>(c)];
  }
  return t;
}

json spec_to_json(const WorldSpec& s) {
  json j = {{"vocab_size", s.vocab_size},
            {"num_documents", s.num_documents},
            {"max_context_len", s.max_context_len},
            {"max_doc_len", s.max_doc_len},
            {"max_response_len", s.max_response_len},
            {"grounding_strength", s.grounding_strength},
            {"seed", s.seed},
            {"context_pool_size", s.context_pool_size},
            {"lexical_contexts", s.lexical_contexts},
            {"copy_smoothing", s.copy_smoothing}};
  j["document_prior"] = s.document_prior ? json(*s.document_prior) : json(nullptr);
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

void WorldSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("world vocab_size must be >= 2");
  if (num_documents < 1) throw ConfigError("world needs at least one document");
  if (max_context_len < 1 || max_doc_len < 1 || max_response_len < 1) throw ConfigError("world lengths must be >= 1");
  if (context_pool_size < 1) throw ConfigError("context pool must be non-empty");
  if (!(grounding_strength >= 0.0 && grounding_strength <= 1.0)) throw ConfigError("grounding_strength must be in [0,1]");
  if (!(copy_smoothing > 0.0)) throw ConfigError("copy_smoothing must be > 0");
  if (ipow(vocab_size, max_response_len) > kEnumerabilityLimit) {
    throw ConfigError("enumerability guard: vocab_size^max_response_len = " +
                      std::to_string(ipow(vocab_size, max_response_len)) + " exceeds 1e6");
  }
  if (lexical_contexts && vocab_size < num_documents * max_doc_len) {
    throw ConfigError("lexical worlds need vocab_size >= num_documents * max_doc_len");
  }
  if (document_prior) {
    if (static_cast<int>(document_prior->size()) != num_documents) throw ConfigError("document_prior size mismatch");
    double sum = 0.0;
    for (double p : *document_prior) {
      if (!(p >= 0.0)) throw ConfigError("document_prior entries must be >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("document_prior must sum to one");
  }
}

WorldModel::WorldModel(WorldSpec spec, std::vector<TokenSeq> contexts, std::vector<TokenSeq> documents,
                       Eigen::VectorXd context_prior, Table document_given_context, Table response_table)
    : spec_(std::move(spec)),
      vocabulary_(generated_tokens(spec_.vocab_size)),
      contexts_(std::move(contexts)),
      documents_(std::move(documents)),
      context_prior_(std::move(context_prior)),
      document_given_context_(std::move(document_given_context)),
      response_table_(std::move(response_table)) {
  spec_.validate();
  const auto C = static_cast<Eigen::Index>(contexts_.size());
  const auto D = static_cast<Eigen::Index>(documents_.size());
  if (context_prior_.size() != C || document_given_context_.rows() != C || document_given_context_.cols() != D ||
      response_table_.rows() != C * D) {
    throw DataError("world tables have inconsistent shapes");
  }
  derive();
}

void WorldModel::derive() {
  const int A = spec_.vocab_size;
  const int L = spec_.max_response_len;
  length_offset_.assign(static_cast<std::size_t>(L) + 2, 0);
  for (int len = 0; len <= L; ++len) {
    length_offset_[static_cast<std::size_t>(len) + 1] =
        length_offset_[static_cast<std::size_t>(len)] + static_cast<std::size_t>(ipow(A, len));
  }
  const auto strings = static_cast<Eigen::Index>(length_offset_.back());
  if (response_table_.cols() != strings - 1) throw DataError("response table width does not match the spec");

  for (std::size_t i = 0; i < contexts_.size(); ++i) context_lookup_[contexts_[i]] = i;
  for (std::size_t i = 0; i < documents_.size(); ++i) document_lookup_[documents_[i]] = i;
  if (context_lookup_.size() != contexts_.size() || document_lookup_.size() != documents_.size()) {
    throw DataError("world contexts and documents must be distinct");
  }

  const auto C = static_cast<Eigen::Index>(contexts_.size());
  const auto D = static_cast<Eigen::Index>(documents_.size());
  lm_table_ = Table::Zero(C, response_table_.cols());
  for (Eigen::Index c = 0; c < C; ++c) {
    for (Eigen::Index d = 0; d < D; ++d) {
      lm_table_.row(c) += document_given_context_(c, d) * response_table_.row(c * D + d);
    }
  }

  // mass(w) = p(w) + sum_v mass(w v), longest strings first
  auto accumulate = [&](const Table& probs) {
    Table mass = Table::Zero(probs.rows(), strings);
    mass.rightCols(strings - 1) = probs;
    for (int len = L - 1; len >= 0; --len) {
      const auto begin = static_cast<Eigen::Index>(length_offset_[static_cast<std::size_t>(len)]);
      const auto count = static_cast<Eigen::Index>(ipow(A, len));
      const auto child_begin = static_cast<Eigen::Index>(length_offset_[static_cast<std::size_t>(len) + 1]);
      for (Eigen::Index r = 0; r < mass.rows(); ++r) {
        Eigen::Map<const Eigen::MatrixXd> children(mass.row(r).data() + child_begin, A, count);
        mass.row(r).segment(begin, count) += children.colwise().sum();
      }
    }
    return mass;
  };
  prefix_mass_ = accumulate(response_table_);
  lm_prefix_mass_ = accumulate(lm_table_);
}

std::optional<std::size_t> WorldModel::prefix_index(std::span<const TokenId> prefix) const {
  const auto A = static_cast<std::size_t>(spec_.vocab_size);
  if (prefix.size() > static_cast<std::size_t>(spec_.max_response_len)) return std::nullopt;
  std::size_t within = 0;
  for (auto t : prefix) {
    const auto digit = static_cast<std::int64_t>(t) - first_token();
    if (digit < 0 || digit >= static_cast<std::int64_t>(A)) return std::nullopt;
    within = within * A + static_cast<std::size_t>(digit);
  }
  return length_offset_[prefix.size()] + within;
}

std::optional<std::size_t> WorldModel::response_index(std::span<const TokenId> response) const {
  if (response.empty()) return std::nullopt;
  auto idx = prefix_index(response);
  if (!idx) return std::nullopt;
  return *idx - 1;
}

TokenSeq WorldModel::response(std::size_t index) const {
  const auto A = static_cast<std::size_t>(spec_.vocab_size);
  const std::size_t s = index + 1;
  std::size_t len = 0;
  while (length_offset_[len + 1] <= s) ++len;
  std::size_t within = s - length_offset_[len];
  TokenSeq out(len);
  for (std::size_t i = len; i-- > 0;) {
    out[i] = first_token() + static_cast<TokenId>(within % A);
    within /= A;
  }
  return out;
}

double WorldModel::prefix_mass(std::size_t row, std::span<const TokenId> prefix) const {
  auto idx = prefix_index(prefix);
  return idx ? prefix_mass_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(*idx)) : 0.0;
}

double WorldModel::lm_prefix_mass(std::size_t context, std::span<const TokenId> prefix) const {
  auto idx = prefix_index(prefix);
  return idx ? lm_prefix_mass_(static_cast<Eigen::Index>(context), static_cast<Eigen::Index>(*idx)) : 0.0;
}

std::optional<std::size_t> WorldModel::context_index(std::span<const TokenId> flattened) const {
  auto it = context_lookup_.find(TokenSeq(flattened.begin(), flattened.end()));
  if (it == context_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> WorldModel::document_index(std::span<const TokenId> document) const {
  auto it = document_lookup_.find(TokenSeq(document.begin(), document.end()));
  if (it == document_lookup_.end()) return std::nullopt;
  return it->second;
}

DocumentCollection WorldModel::collection() const {
  DocumentCollection out;
  for (std::size_t i = 0; i < documents_.size(); ++i) out.add(document_id(i), documents_[i]);
  return out;
}

std::string WorldModel::to_json() const {
  json j;
  j["format"] = "ncd-world/1";
  j["spec"] = spec_to_json(spec_);
  j["contexts"] = contexts_;
  j["documents"] = documents_;
  j["context_prior"] = std::vector<double>(context_prior_.data(), context_prior_.data() + context_prior_.size());
  j["document_given_context"] = table_to_json(document_given_context_);
  j["response_given_context_document"] = table_to_json(response_table_);
  return j.dump();
}

WorldModel WorldModel::from_json(std::string_view text) {
  try {
    auto j = json::parse(text);
    if (j.value("format", "") != "ncd-world/1") throw DataError("not a world dump");
    const auto& s = j.at("spec");
    WorldSpec spec;
    spec.vocab_size = s.at("vocab_size");
    spec.num_documents = s.at("num_documents");
    spec.max_context_len = s.at("max_context_len");
    spec.max_doc_len = s.at("max_doc_len");
    spec.max_response_len = s.at("max_response_len");
    spec.grounding_strength = s.at("grounding_strength");
    spec.seed = s.at("seed");
    spec.context_pool_size = s.at("context_pool_size");
    spec.lexical_contexts = s.at("lexical_contexts");
    spec.copy_smoothing = s.at("copy_smoothing");
    if (!s.at("document_prior").is_null()) spec.document_prior = s.at("document_prior").get<std::vector<double>>();
    auto prior = j.at("context_prior").get<std::vector<double>>();
    return WorldModel(spec, j.at("contexts").get<std::vector<TokenSeq>>(), j.at("documents").get<std::vector<TokenSeq>>(),
                      Eigen::Map<Eigen::VectorXd>(prior.data(), static_cast<Eigen::Index>(prior.size())),
                      table_from_json(j.at("document_given_context")),
                      table_from_json(j.at("response_given_context_document")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("world dump: ") + e.what());
  }
}

void WorldModel::save(const std::filesystem::path& path) const { write_file(path, to_json()); }

WorldModel WorldModel::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

// ---------------------------------------------------------------------------

WorldModel build_world(const WorldSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const int A = spec.vocab_size;
  const int L = spec.max_response_len;
  const auto first = static_cast<TokenId>(Vocabulary::kNumReserved);
  std::vector<TokenId> alphabet(static_cast<std::size_t>(A));
  std::iota(alphabet.begin(), alphabet.end(), first);

  std::vector<TokenSeq> documents;
  std::vector<TokenSeq> contexts;
  const auto D = static_cast<std::size_t>(spec.num_documents);
  const auto C = static_cast<std::size_t>(spec.context_pool_size);
  if (spec.lexical_contexts) {
    auto shuffled = alphabet;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto M = static_cast<std::size_t>(spec.max_doc_len);
    for (std::size_t d = 0; d < D; ++d) documents.emplace_back(shuffled.begin() + d * M, shuffled.begin() + (d + 1) * M);
    // context c is drawn from the tokens of document c mod |D|
    std::set<TokenSeq> seen;
    for (std::size_t c = 0; c < C; ++c) {
      const auto& doc = documents[c % D];
      for (int attempt = 0;; ++attempt) {
        if (attempt > 100000) throw ConfigError("cannot draw enough distinct contexts");
        auto s = random_sequence(rng, std::min(spec.max_context_len, spec.max_doc_len), doc);
        if (seen.insert(s).second) {
          contexts.push_back(std::move(s));
          break;
        }
      }
    }
  } else {
    documents = distinct_sequences(D, [&] { return random_sequence(rng, spec.max_doc_len, alphabet); }, "documents");
    contexts = distinct_sequences(C, [&] { return random_sequence(rng, spec.max_context_len, alphabet); }, "contexts");
  }

  Eigen::VectorXd context_prior = dirichlet(rng, static_cast<Eigen::Index>(C), 5.0);
  Table doc_given_ctx(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(D));
  for (std::size_t c = 0; c < C; ++c) {
    Eigen::VectorXd row = dirichlet(rng, static_cast<Eigen::Index>(D), 1.0);
    if (spec.lexical_contexts) {
      row.setZero();
      row(static_cast<Eigen::Index>(c % D)) = 1.0;
    } else if (spec.document_prior) {
      row = Eigen::Map<const Eigen::VectorXd>(spec.document_prior->data(), static_cast<Eigen::Index>(D));
    }
    doc_given_ctx.row(static_cast<Eigen::Index>(c)) = row.transpose();
  }

  std::vector<Eigen::VectorXd> length_dist;
  std::vector<Chain> babble;
  for (std::size_t c = 0; c < C; ++c) {
    length_dist.push_back(dirichlet(rng, L, 2.0));
    babble.push_back(babble_chain(rng, A));
  }
  std::vector<Chain> copy;
  for (const auto& doc : documents) copy.push_back(copy_chain(rng, doc, A, first, spec.copy_smoothing));

  Eigen::Index num_responses = 0;
  for (int len = 1; len <= L; ++len) num_responses += static_cast<Eigen::Index>(ipow(A, len));
  Table responses(static_cast<Eigen::Index>(C * D), num_responses);
  const double g = spec.grounding_strength;
  std::vector<int> digits;
  Eigen::Index col = 0;
  for (int len = 1; len <= L; ++len) {
    digits.assign(static_cast<std::size_t>(len), 0);
    const auto count = static_cast<std::size_t>(ipow(A, len));
    for (std::size_t i = 0; i < count; ++i, ++col) {
      for (std::size_t c = 0; c < C; ++c) {
        const double pl = length_dist[c](len - 1);
        const double pb = babble[c].probability(digits);
        for (std::size_t d = 0; d < D; ++d) {
          const double pc = copy[d].probability(digits);
          responses(static_cast<Eigen::Index>(c * D + d), col) = pl * (g * pc + (1.0 - g) * pb);
        }
      }
      for (int pos = len - 1; pos >= 0; --pos) {  // odometer increment
        if (++digits[static_cast<std::size_t>(pos)] < A) break;
        digits[static_cast<std::size_t>(pos)] = 0;
      }
    }
  }
  renormalize_rows(responses, "p(u|c,d)");
  renormalize_rows(doc_given_ctx, "p(d|c)");
  context_prior /= context_prior.sum();
  return WorldModel(spec, std::move(contexts), std::move(documents), std::move(context_prior), std::move(doc_given_ctx),
                    std::move(responses));
}

// ---------------------------------------------------------------------------

namespace {

LogProbVector uniform_row(std::size_t vocab_size) {
  return LogProbVector::Constant(static_cast<Eigen::Index>(vocab_size), -std::log(static_cast<double>(vocab_size)));
}

class WorldScorer final : public Scorer {
 public:
  WorldScorer(const WorldModel& world, ExactRole role) : world_(world), role_(role) {}

  std::size_t vocab_size() const override { return world_.vocabulary().size(); }

  LogProbVector next_token_logprobs(const Condition& condition, std::span<const TokenId> prefix) const override {
    if (prefix.empty() || prefix.front() != Vocabulary::kSos) throw ConfigError("prefix must begin with <sos>");
    const auto body = prefix.subspan(1);
    const std::size_t c = context_of(condition);
    switch (role_) {
      case ExactRole::direct: {
        if (condition.role != Role::direct || !condition.document) throw ConfigError("direct scorer needs a direct condition");
        auto d = world_.document_index(*condition.document);
        if (!d) throw ScorerError("document is not part of the world");
        const auto row = world_.row(c, *d);
        return response_row([&](std::span<const TokenId> p) { return world_.prefix_mass(row, p); },
                            world_.response_table().row(static_cast<Eigen::Index>(row)), body);
      }
      case ExactRole::response_lm:
        if (condition.role != Role::response_lm) throw ConfigError("response LM scorer needs an LM condition");
        return response_row([&](std::span<const TokenId> p) { return world_.lm_prefix_mass(c, p); },
                            world_.response_lm_table().row(static_cast<Eigen::Index>(c)), body);
      case ExactRole::channel:
      case ExactRole::channel_partial: {
        if (condition.role != Role::channel) throw ConfigError("channel scorer needs a channel condition");
        const TokenSeq empty;
        const auto& response = condition.response ? *condition.response : empty;
        const bool complete = role_ == ExactRole::channel && condition.response_complete;
        Eigen::VectorXd weights = document_posterior(world_, c, response, complete);
        return next_token_from_weighted(world_.documents(), std::span<const double>(weights.data(), weights.size()), body,
                                        vocab_size());
      }
    }
    return uniform_row(vocab_size());
  }

 private:
  std::size_t context_of(const Condition& condition) const {
    auto c = world_.context_index(flatten(condition.context));
    if (!c) throw ScorerError("context is not part of the world");
    return *c;
  }

  template <typename MassFn, typename Row>
  LogProbVector response_row(MassFn&& mass, const Row& complete, std::span<const TokenId> body) const {
    const double total = mass(body);
    if (!(total > 0.0)) return uniform_row(vocab_size());
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab_size()));
    TokenSeq extended(body.begin(), body.end());
    extended.push_back(0);
    for (std::size_t a = 0; a < world_.alphabet_size(); ++a) {
      const TokenId t = world_.first_token() + static_cast<TokenId>(a);
      extended.back() = t;
      const double m = mass(extended);
      p(t) = m;
    }
    if (auto u = world_.response_index(body)) p(Vocabulary::kEos) = complete(static_cast<Eigen::Index>(*u));
    return (p / p.sum()).array().log().matrix();
  }

  const WorldModel& world_;
  ExactRole role_;
};

}  // namespace

std::unique_ptr<Scorer> exact_conditional(const WorldModel& world, ExactRole role) {
  return std::make_unique<WorldScorer>(world, role);
}

Table retrieval_posterior(const WorldModel& world) { return world.document_given_context(); }

Eigen::VectorXd document_posterior(const WorldModel& world, std::size_t context, std::span<const TokenId> response,
                                   bool complete) {
  const auto D = world.num_documents();
  Eigen::VectorXd w(static_cast<Eigen::Index>(D));
  const auto u = complete ? world.response_index(response) : std::nullopt;
  for (std::size_t d = 0; d < D; ++d) {
    const double prior = world.document_given_context()(static_cast<Eigen::Index>(context), static_cast<Eigen::Index>(d));
    const auto row = world.row(context, d);
    const double likelihood =
        complete ? (u ? world.response_table()(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(*u)) : 0.0)
                 : world.prefix_mass(row, response);
    w(static_cast<Eigen::Index>(d)) = prior * likelihood;
  }
  const double total = w.sum();
  if (!(total > 0.0)) return world.document_given_context().row(static_cast<Eigen::Index>(context)).transpose();
  return w / total;
}

std::vector<GroundedExample> sample_dataset(const WorldModel& world, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample_dataset needs n >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const auto& weights) {
    const double r = unit(rng);
    double acc = 0.0;
    const auto size = weights.size();
    for (Eigen::Index i = 0; i < size; ++i) {
      acc += weights(i);
      if (r < acc) return static_cast<std::size_t>(i);
    }
    // rounding left r above the cumulative sum: take the last positive entry
    for (Eigen::Index i = size; i-- > 0;) {
      if (weights(i) > 0.0) return static_cast<std::size_t>(i);
    }
    return static_cast<std::size_t>(size - 1);
  };
  std::vector<GroundedExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = draw(world.context_prior());
    const auto d = draw(world.document_given_context().row(static_cast<Eigen::Index>(c)));
    const auto u = draw(world.response_table().row(static_cast<Eigen::Index>(world.row(c, d))));
    GroundedExample ex;
    ex.id = "s" + std::to_string(seed) + "-" + std::to_string(i);
    ex.context.push_back(Turn{Speaker::user, world.contexts()[c]});
    ex.document = world.documents()[d];
    ex.response = world.response(u);
    ex.document_id = WorldModel::document_id(d);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace ncd
