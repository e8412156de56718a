#pragma once

#include <string>

#include "ncd/core/vocabulary.hpp"
#include "ncd/decode/decode.hpp"

namespace ncd {

/// One JSON line per hypothesis with example_id, rank, tokens, text, the
/// three log-probs, combined and finished. -inf log-probs are written as null.
std::string nbest_jsonl(const std::string& example_id, const NBestList& nbest, const Vocabulary& vocab);

}  // namespace ncd
