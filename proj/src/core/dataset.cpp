#include "ncd/core/dataset.hpp"

#include <json.hpp>
#include <sstream>

#include "ncd/core/error.hpp"
#include "ncd/core/hash.hpp"

namespace ncd {
namespace {

using nlohmann::json;

std::string at_line(std::size_t line) { return " at line " + std::to_string(line); }

const json& require(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) throw DataError(std::string(field) + " missing" + at_line(line));
  return *it;
}

std::string require_string(const json& obj, const char* field, std::size_t line) {
  const auto& v = require(obj, field, line);
  if (!v.is_string()) throw DataError(std::string(field) + " must be a string" + at_line(line));
  return v.get<std::string>();
}

TokenSeq checked_tokens(const std::string& text, const char* field, std::size_t line, const Vocabulary& vocab) {
  for (const auto& w : split_words(text)) {
    if (Vocabulary::is_reserved_symbol(w)) {
      throw DataError("reserved symbol " + w + " in " + field + at_line(line));
    }
  }
  return tokenize(text, vocab);
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line, line_no);
    pos = end + 1;
  }
}

json parse_line(std::string_view line, std::size_t line_no) {
  try {
    auto obj = json::parse(line);
    if (!obj.is_object()) throw DataError("expected a JSON object" + at_line(line_no));
    return obj;
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON" + at_line(line_no) + ": " + e.what());
  }
}

}  // namespace

std::vector<GroundedExample> parse_dataset(std::string_view text, const Vocabulary& vocab) {
  std::vector<GroundedExample> examples;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    auto obj = parse_line(line, line_no);
    GroundedExample ex;
    ex.id = require_string(obj, "id", line_no);
    const auto& ctx = require(obj, "context", line_no);
    if (!ctx.is_array()) throw DataError("context must be an array" + at_line(line_no));
    for (const auto& turn : ctx) {
      if (!turn.is_object()) throw DataError("context turn must be an object" + at_line(line_no));
      Turn t;
      auto speaker = require_string(turn, "speaker", line_no);
      if (speaker != "user" && speaker != "system") {
        throw DataError("unknown speaker '" + speaker + "'" + at_line(line_no));
      }
      t.speaker = parse_speaker(speaker);
      t.tokens = checked_tokens(require_string(turn, "text", line_no), "context", line_no, vocab);
      ex.context.push_back(std::move(t));
    }
    ex.document = checked_tokens(require_string(obj, "document", line_no), "document", line_no, vocab);
    if (auto it = obj.find("response"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw DataError("response must be a string" + at_line(line_no));
      ex.response = checked_tokens(it->get<std::string>(), "response", line_no, vocab);
    }
    if (auto it = obj.find("control"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw DataError("control must be a string" + at_line(line_no));
      ex.control = checked_tokens(it->get<std::string>(), "control", line_no, vocab);
    }
    if (auto it = obj.find("document_id"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw DataError("document_id must be a string" + at_line(line_no));
      ex.document_id = it->get<std::string>();
    }
    examples.push_back(std::move(ex));
  });
  return examples;
}

std::vector<GroundedExample> load_dataset(const std::filesystem::path& path, const Vocabulary& vocab) {
  return parse_dataset(read_file(path), vocab);
}

std::string serialize_dataset(const std::vector<GroundedExample>& examples, const Vocabulary& vocab) {
  std::string out;
  for (const auto& ex : examples) {
    json obj = json::object();
    obj["id"] = ex.id;
    json ctx = json::array();
    for (const auto& t : ex.context) {
      ctx.push_back({{"speaker", to_string(t.speaker)}, {"text", detokenize(t.tokens, vocab)}});
    }
    obj["context"] = std::move(ctx);
    obj["document"] = detokenize(ex.document, vocab);
    if (ex.response) obj["response"] = detokenize(*ex.response, vocab);
    if (ex.control) obj["control"] = detokenize(*ex.control, vocab);
    if (ex.document_id) obj["document_id"] = *ex.document_id;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<GroundedExample>& examples,
                  const Vocabulary& vocab) {
  write_file(path, serialize_dataset(examples, vocab));
}

DocumentCollection load_collection(const std::filesystem::path& path, const Vocabulary& vocab) {
  DocumentCollection collection;
  for_each_line(read_file(path), [&](std::string_view line, std::size_t line_no) {
    auto obj = parse_line(line, line_no);
    auto id = require_string(obj, "doc_id", line_no);
    collection.add(id, checked_tokens(require_string(obj, "text", line_no), "text", line_no, vocab));
  });
  if (collection.empty()) throw DataError("collection " + path.string() + " has no documents");
  return collection;
}

std::string serialize_collection(const DocumentCollection& collection, const Vocabulary& vocab) {
  std::string out;
  for (const auto& [id, tokens] : collection) {
    out += json{{"doc_id", id}, {"text", detokenize(tokens, vocab)}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<std::string> dataset_texts(const std::filesystem::path& path) {
  std::vector<std::string> texts;
  for_each_line(read_file(path), [&](std::string_view line, std::size_t line_no) {
    auto obj = parse_line(line, line_no);
    if (auto it = obj.find("context"); it != obj.end() && it->is_array()) {
      for (const auto& t : *it) {
        if (t.is_object() && t.contains("text") && t["text"].is_string()) texts.push_back(t["text"]);
      }
    }
    for (const char* field : {"document", "response", "control", "text"}) {
      if (auto it = obj.find(field); it != obj.end() && it->is_string()) texts.push_back(*it);
    }
  });
  return texts;
}

}  // namespace ncd
