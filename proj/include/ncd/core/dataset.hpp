#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ncd/core/types.hpp"
#include "ncd/core/vocabulary.hpp"

namespace ncd {

/// Parses dataset JSONL text. Blank lines are skipped. Errors name the
/// 1-based line number ("document missing at line 3").
std::vector<GroundedExample> parse_dataset(std::string_view text, const Vocabulary& vocab);
std::vector<GroundedExample> load_dataset(const std::filesystem::path& path, const Vocabulary& vocab);

/// One JSON object per example, text rendered through the vocabulary.
std::string serialize_dataset(const std::vector<GroundedExample>& examples, const Vocabulary& vocab);
void save_dataset(const std::filesystem::path& path, const std::vector<GroundedExample>& examples,
                  const Vocabulary& vocab);

/// Collection file: {"doc_id": ..., "text": ...} per line.
DocumentCollection load_collection(const std::filesystem::path& path, const Vocabulary& vocab);
std::string serialize_collection(const DocumentCollection& collection, const Vocabulary& vocab);

/// Every whitespace token of a dataset file's text fields, for vocabulary building.
std::vector<std::string> dataset_texts(const std::filesystem::path& path);

}  // namespace ncd
