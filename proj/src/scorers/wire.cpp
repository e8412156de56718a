#include "ncd/scorers/wire.hpp"

#include <cmath>
#include <json.hpp>
#include <limits>

#include "ncd/core/error.hpp"

namespace ncd::wire {
namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

ordered optional_seq(const std::optional<TokenSeq>& seq) { return seq ? ordered(*seq) : ordered(nullptr); }

std::optional<TokenSeq> read_optional_seq(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw DataError(std::string("field ") + field + " must be an array");
  return it->get<TokenSeq>();
}

double read_logprob(const json& v) {
  if (v.is_null()) return -std::numeric_limits<double>::infinity();
  if (!v.is_number()) throw DataError("log-probability must be a number");
  return v.get<double>();
}

ordered write_logprob(double v) { return std::isfinite(v) ? ordered(v) : ordered(nullptr); }

json parse_object(std::string_view line) {
  try {
    auto obj = json::parse(line);
    if (!obj.is_object()) throw DataError("protocol line is not a JSON object");
    return obj;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed protocol line: ") + e.what());
  }
}

}  // namespace

std::string encode(const Request& r) {
  ordered obj = {{"id", r.id},
              {"op", r.op == Op::next ? "next" : "seq"},
              {"role", to_string(r.role)},
              {"context", r.context},
              {"document", optional_seq(r.document)},
              {"control", optional_seq(r.control)},
              {"prefix", r.prefix},
              {"target", optional_seq(r.target)}};
  if (r.response) {
    obj["response"] = *r.response;
    obj["complete"] = r.complete;
  }
  return obj.dump() + "\n";
}

std::string encode(const Response& r) {
  ordered obj = {{"id", r.id}};
  if (r.error) {
    obj["error"] = *r.error;
  } else if (r.logprobs) {
    ordered arr = ordered::array();
    for (double v : *r.logprobs) arr.push_back(write_logprob(v));
    obj["logprobs"] = std::move(arr);
  } else if (r.logprob) {
    obj["logprob"] = write_logprob(*r.logprob);
  }
  return obj.dump() + "\n";
}

Request decode_request(std::string_view line) {
  auto obj = parse_object(line);
  try {
    Request r;
    r.id = obj.at("id").get<std::string>();
    auto op = obj.at("op").get<std::string>();
    if (op == "next") {
      r.op = Op::next;
    } else if (op == "seq") {
      r.op = Op::seq;
    } else {
      throw DataError("unknown op '" + op + "'");
    }
    r.role = parse_role(obj.at("role").get<std::string>());
    r.context = obj.at("context").get<TokenSeq>();
    r.document = read_optional_seq(obj, "document");
    r.control = read_optional_seq(obj, "control");
    r.response = read_optional_seq(obj, "response");
    r.complete = obj.value("complete", false);
    r.prefix = obj.at("prefix").get<TokenSeq>();
    r.target = read_optional_seq(obj, "target");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid request: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("invalid request: ") + e.what());
  }
}

Response decode_response(std::string_view line) {
  auto obj = parse_object(line);
  try {
    Response r;
    r.id = obj.at("id").get<std::string>();
    if (auto it = obj.find("error"); it != obj.end()) {
      r.error = it->get<std::string>();
    } else if (auto lp = obj.find("logprobs"); lp != obj.end()) {
      std::vector<double> values;
      for (const auto& v : *lp) values.push_back(read_logprob(v));
      r.logprobs = std::move(values);
    } else if (auto one = obj.find("logprob"); one != obj.end()) {
      r.logprob = read_logprob(*one);
    } else {
      throw DataError("response carries neither logprobs nor logprob");
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid response: ") + e.what());
  }
}

std::string salvage_id(std::string_view line) {
  try {
    auto obj = json::parse(line);
    if (obj.is_object() && obj.contains("id") && obj["id"].is_string()) return obj["id"];
  } catch (const json::exception&) {
  }
  auto key = line.find("\"id\"");
  if (key == std::string_view::npos) return {};
  auto open = line.find('"', line.find(':', key));
  if (open == std::string_view::npos) return {};
  auto close = line.find('"', open + 1);
  if (close == std::string_view::npos) return {};
  return std::string(line.substr(open + 1, close - open - 1));
}

Request make_request(std::string id, Op op, const Condition& condition, std::span<const TokenId> sequence) {
  Request r;
  r.id = std::move(id);
  r.op = op;
  r.role = condition.role;
  r.context = flatten(condition.context);
  r.document = condition.document;
  r.control = condition.control;
  r.response = condition.response;
  r.complete = condition.response_complete;
  if (op == Op::next) {
    r.prefix.assign(sequence.begin(), sequence.end());
  } else {
    r.target = TokenSeq(sequence.begin(), sequence.end());
  }
  return r;
}

Condition condition_of(const Request& r) {
  Condition c;
  c.role = r.role;
  if (!r.context.empty()) c.context.push_back(Turn{Speaker::user, r.context});
  c.document = r.document;
  c.control = r.control;
  c.response = r.response;
  c.response_complete = r.complete;
  if (c.role == Role::channel && !c.response) c.response = TokenSeq{};
  return c;
}

std::string answer_line(std::string_view line, const Scorer* direct, const Scorer* channel, const Scorer* lm) {
  Response out;
  try {
    auto request = decode_request(line);
    out.id = request.id;
    const Scorer* scorer = request.role == Role::direct ? direct : request.role == Role::channel ? channel : lm;
    if (!scorer) throw ScorerError(std::string("no scorer configured for role ") + to_string(request.role));
    auto condition = condition_of(request);
    for (auto t : request.prefix) {
      if (t < 0 || static_cast<std::size_t>(t) >= scorer->vocab_size()) throw DataError("token id out of range");
    }
    if (request.op == Op::next) {
      auto lp = scorer->next_token_logprobs(condition, request.prefix);
      out.logprobs = std::vector<double>(lp.data(), lp.data() + lp.size());
    } else {
      if (!request.target) throw DataError("seq request without target");
      out.logprob = scorer->sequence_logprob(condition, *request.target);
    }
  } catch (const std::exception& e) {
    if (out.id.empty()) out.id = salvage_id(line);
    out.logprobs.reset();
    out.logprob.reset();
    out.error = e.what();
  }
  return encode(out);
}

}  // namespace ncd::wire
