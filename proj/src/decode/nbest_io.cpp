#include "ncd/decode/nbest_io.hpp"

#include <cmath>
#include <json.hpp>

namespace ncd {
namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string nbest_jsonl(const std::string& example_id, const NBestList& nbest, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t rank = 0; rank < nbest.hypotheses.size(); ++rank) {
    const auto& h = nbest.hypotheses[rank];
    nlohmann::ordered_json line;
    line["example_id"] = example_id;
    line["rank"] = rank;
    line["tokens"] = h.tokens;
    line["text"] = detokenize(h.response(), vocab);
    line["direct_lp"] = number_or_null(h.breakdown.direct_lp);
    line["channel_lp"] = number_or_null(h.breakdown.channel_lp);
    line["lm_lp"] = number_or_null(h.breakdown.lm_lp);
    line["combined"] = number_or_null(h.combined);
    line["finished"] = h.finished;
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace ncd
