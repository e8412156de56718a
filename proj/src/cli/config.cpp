#include "ncd/cli/config.hpp"

#include "ncd/core/error.hpp"
#include "ncd/core/hash.hpp"

namespace ncd::cli {
namespace {

const Json* find_path(const Json& config, const std::string& dotted) {
  const Json* node = &config;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    auto dot = dotted.find('.', start);
    auto key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return node;
}

}  // namespace

Json default_config() {
  return Json::parse(R"({
    "seed": 1,
    "workers": 0,
    "world": {
      "vocab_size": 6, "num_documents": 3, "max_context_len": 2, "max_doc_len": 3,
      "max_response_len": 3, "grounding_strength": 0.7, "context_pool_size": 8,
      "lexical_contexts": false, "copy_smoothing": 0.05
    },
    "data": {"train": 2000, "valid": 200, "test": 500},
    "train": {
      "order": 3, "k": 0.1, "channel_truncation": "uniform", "use_control": false,
      "control_high": 0.7, "control_low": 0.3, "max_history": 384, "max_document": 128
    },
    "scorers": {"source": "ngram", "endpoint": "", "timeout_ms": 10000},
    "decode": {
      "decoder": "online-ours", "beam": 4, "liu_k1": 2, "liu_k2": 2, "max_len": 16,
      "length_normalize": true, "incremental_lm": false,
      "lambda_direct": null, "lambda_channel": null, "lambda_lm": null
    },
    "sweep": {"channel": "0:2:0.1", "lm": "0:2:0.1", "metric": "token_f1"},
    "curve": {"kinds": "direct,online-ours,online-liu", "budgets": "1,2,4,8,16"},
    "retrieve": {
      "retriever": "cross", "k": 10, "rerank_candidates": 10, "bm25_k1": 1.2, "bm25_b": 0.75,
      "decode": false
    }
  })");
}

void merge_config(Json& base, const Json& overlay, const std::string& where) {
  if (!overlay.is_object()) throw ConfigError("configuration " + (where.empty() ? "root" : where) + " must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const auto path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + path + "'");
    auto& slot = base[it.key()];
    if (slot.is_object()) {
      merge_config(slot, it.value(), path);
    } else {
      if (it.value().is_object()) throw ConfigError("configuration key '" + path + "' is not a section");
      // "0.5" given for a string-valued key stays a string
      if (slot.is_string() && (it.value().is_number() || it.value().is_boolean())) {
        slot = it.value().dump();
      } else {
        slot = it.value();
      }
    }
  }
}

void apply_override(Json& config, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value, got '" + assignment + "'");
  const auto key = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::exception&) {
    value = text;
  }
  Json overlay = value;
  // {"a": {"b": value}} from "a.b"
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (auto dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
    parts.push_back(key.substr(start, dot - start));
    start = dot + 1;
  }
  parts.push_back(key.substr(start));
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("empty key segment in override '" + assignment + "'");
    Json wrapped = Json::object();
    wrapped[*it] = std::move(overlay);
    overlay = std::move(wrapped);
  }
  merge_config(config, overlay);
}

Json resolve_config(const std::filesystem::path& file, std::span<const std::string> overrides) {
  auto config = default_config();
  if (!file.empty()) {
    Json parsed;
    try {
      parsed = Json::parse(read_file(file));
    } catch (const Json::exception& e) {
      throw ConfigError("cannot parse config " + file.string() + ": " + e.what());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    merge_config(config, parsed);
  }
  for (const auto& o : overrides) apply_override(config, o);
  return config;
}

template <typename T>
T get(const Json& config, const std::string& dotted) {
  const Json* node = find_path(config, dotted);
  if (!node) throw ConfigError("missing configuration key '" + dotted + "'");
  try {
    return node->get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("configuration key '" + dotted + "' has the wrong type");
  }
}

template int get<int>(const Json&, const std::string&);
template bool get<bool>(const Json&, const std::string&);
template double get<double>(const Json&, const std::string&);
template std::string get<std::string>(const Json&, const std::string&);
template std::uint64_t get<std::uint64_t>(const Json&, const std::string&);

std::optional<double> get_optional_double(const Json& config, const std::string& dotted) {
  const Json* node = find_path(config, dotted);
  if (!node) throw ConfigError("missing configuration key '" + dotted + "'");
  if (node->is_null()) return std::nullopt;
  if (!node->is_number()) throw ConfigError("configuration key '" + dotted + "' must be a number or null");
  return node->get<double>();
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& label) {
  const auto hex = sha256_hex(std::to_string(seed) + "/" + label);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

}  // namespace ncd::cli
