#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "ncd/cli/app.hpp"
#include "ncd/core/dataset.hpp"
#include "ncd/core/error.hpp"
#include "ncd/core/hash.hpp"
#include "ncd/decode/nbest_io.hpp"
#include "ncd/eval/experiment.hpp"
#include "ncd/retrieval/retrieval.hpp"
#include "ncd/scorers/ngram.hpp"
#include "ncd/scorers/remote.hpp"
#include "ncd/scorers/training.hpp"
#include "ncd/world/world.hpp"

namespace ncd::cli {

namespace fs = std::filesystem;

namespace {

const std::string kFactualityNote = "token_f1 is the factuality proxy; Q2, BERTScore and METEOR are not computed";
const std::string kRetrieverNote = "retrievers are lexical: bi = tf-idf cosine, cross = BM25";

struct Context {
  const Json& config;
  const std::map<std::string, fs::path>& inputs;
  fs::path out;
  std::ostream& log;
  RunRecord& record;

  bool has(const std::string& role) const { return inputs.count(role) != 0; }
  const fs::path& input(const std::string& role) const {
    auto it = inputs.find(role);
    if (it == inputs.end()) throw ConfigError(command() + " needs --" + role);
    return it->second;
  }
  std::string command() const { return record.command; }
  void write(const std::string& name, std::string_view contents) const { write_file(out / name, contents); }
  std::size_t workers() const {
    const int w = get<int>(config, "workers");
    if (w < 0) throw ConfigError("workers must be >= 0");
    return w == 0 ? default_workers() : static_cast<std::size_t>(w);
  }
};

/// Direct, channel and LM scorers from n-gram files, a world or a remote
/// endpoint, with the vocabulary they share.
struct Models {
  Vocabulary vocab;
  std::unique_ptr<WorldModel> world;
  std::unique_ptr<Scorer> direct, channel, lm;

  ScorerSet set() const { return {direct.get(), channel.get(), lm.get()}; }
};

Models load_models(const Context& ctx) {
  Models m;
  const auto source = get<std::string>(ctx.config, "scorers.source");
  if (source == "ngram") {
    const auto& dir = ctx.input("models");
    m.vocab = Vocabulary::load(dir / "vocab.txt");
    m.direct = std::make_unique<NgramScorer>(NgramScorer::load(dir / "direct.model", m.vocab));
    m.channel = std::make_unique<NgramScorer>(NgramScorer::load(dir / "channel.model", m.vocab));
    m.lm = std::make_unique<NgramScorer>(NgramScorer::load(dir / "lm.model", m.vocab));
  } else if (source == "world") {
    m.world = std::make_unique<WorldModel>(WorldModel::load(ctx.input("world")));
    m.vocab = m.world->vocabulary();
    m.direct = exact_conditional(*m.world, ExactRole::direct);
    m.channel = exact_conditional(*m.world, ExactRole::channel);
    m.lm = exact_conditional(*m.world, ExactRole::response_lm);
  } else if (source == "remote") {
    m.vocab = ctx.has("vocab") ? Vocabulary::load(ctx.input("vocab")) : Vocabulary::load(ctx.input("models") / "vocab.txt");
    auto endpoint = Endpoint::parse(get<std::string>(ctx.config, "scorers.endpoint"));
    std::chrono::milliseconds timeout(get<int>(ctx.config, "scorers.timeout_ms"));
    m.direct = std::make_unique<RemoteScorer>(endpoint, m.vocab.size(), timeout);
    m.channel = std::make_unique<RemoteScorer>(endpoint, m.vocab.size(), timeout);
    m.lm = std::make_unique<RemoteScorer>(endpoint, m.vocab.size(), timeout);
  } else {
    throw ConfigError("scorers.source must be ngram, world or remote, got '" + source + "'");
  }
  ctx.record.vocab_hash = m.vocab.hash();
  return m;
}

/// Loads a dataset and forces the high-overlap control token when the
/// vocabulary was trained with control tokens.
std::vector<GroundedExample> load_examples(const fs::path& path, const Vocabulary& vocab) {
  auto data = load_dataset(path, vocab);
  if (data.empty()) throw DataError("dataset " + path.string() + " is empty");
  if (vocab.find(kCtrlHigh)) {
    const auto control = inference_control_tokens(vocab);
    for (auto& ex : data) ex.control = control;
  }
  return data;
}

BeamConfig beam_config(const Json& config) {
  BeamConfig b;
  b.beam = get<int>(config, "decode.beam");
  b.liu_k1 = get<int>(config, "decode.liu_k1");
  b.liu_k2 = get<int>(config, "decode.liu_k2");
  b.max_len = get<int>(config, "decode.max_len");
  b.length_normalize_final = get<bool>(config, "decode.length_normalize");
  b.incremental_lm = get<bool>(config, "decode.incremental_lm");
  b.validate();
  return b;
}

ScalingConfig scaling_config(const Json& config) {
  auto kind = parse_decoder_kind(get<std::string>(config, "decode.decoder"));
  auto s = default_scaling(kind);
  if (auto v = get_optional_double(config, "decode.lambda_direct")) s.lambda_direct = *v;
  if (auto v = get_optional_double(config, "decode.lambda_channel")) s.lambda_channel = *v;
  if (auto v = get_optional_double(config, "decode.lambda_lm")) s.lambda_lm = *v;
  s.validate();
  return s;
}

std::string outputs_jsonl(std::span<const ExampleOutcome> outcomes, const Vocabulary& vocab, bool normalize) {
  std::string out;
  for (const auto& o : outcomes) {
    Json line;
    line["example_id"] = o.example_id;
    if (o.result) {
      const auto& best = o.result->best;
      const auto response = best.response();
      line["tokens"] = response;
      line["text"] = detokenize(response, vocab);
      line["combined"] = std::isfinite(best.combined) ? Json(best.combined) : Json(nullptr);
      const double sel = selection_score(best, normalize);
      line["selection"] = std::isfinite(sel) ? Json(sel) : Json(nullptr);
      line["finished"] = best.finished;
    } else {
      line["error"] = o.error;
    }
    out += line.dump() + "\n";
  }
  return out;
}

std::string report_with_config(const Json& config, const MetricReport& report, const std::vector<std::string>& notes) {
  Json j;
  j["config"] = config;
  j["metrics"] = Json::parse(report_json(report));
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

void log_failures(std::ostream& log, std::span<const ExampleOutcome> outcomes) {
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    if (!o.result) {
      log << "example " << o.example_id << " failed: " << o.error << "\n";
      ++failed;
    } else {
      for (const auto& w : o.result->warnings) log << "example " << o.example_id << ": " << w << "\n";
    }
  }
  if (failed == outcomes.size() && failed > 0) throw ScorerError("every example failed to decode");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void world_gen(Context& ctx) {
  const auto& c = ctx.config;
  const auto seed = get<std::uint64_t>(c, "seed");
  WorldSpec spec;
  spec.vocab_size = get<int>(c, "world.vocab_size");
  spec.num_documents = get<int>(c, "world.num_documents");
  spec.max_context_len = get<int>(c, "world.max_context_len");
  spec.max_doc_len = get<int>(c, "world.max_doc_len");
  spec.max_response_len = get<int>(c, "world.max_response_len");
  spec.grounding_strength = get<double>(c, "world.grounding_strength");
  spec.context_pool_size = get<int>(c, "world.context_pool_size");
  spec.lexical_contexts = get<bool>(c, "world.lexical_contexts");
  spec.copy_smoothing = get<double>(c, "world.copy_smoothing");
  spec.seed = derive_seed(seed, "world");
  auto world = build_world(spec);
  world.save(ctx.out / "world.json");
  world.vocabulary().save(ctx.out / "vocab.txt");
  ctx.record.vocab_hash = world.vocabulary().hash();
  for (const char* split : {"train", "valid", "test"}) {
    const int n = get<int>(c, std::string("data.") + split);
    if (n < 0) throw ConfigError(std::string("data.") + split + " must be >= 0");
    if (n == 0) continue;
    auto data = sample_dataset(world, static_cast<std::size_t>(n), derive_seed(seed, split));
    ctx.write(std::string(split) + ".jsonl", serialize_dataset(data, world.vocabulary()));
  }
  ctx.write("collection.jsonl", serialize_collection(world.collection(), world.vocabulary()));
}

void train(Context& ctx) {
  const auto& c = ctx.config;
  const auto& data_path = ctx.input("data");
  auto vocab = ctx.has("vocab") ? Vocabulary::load(ctx.input("vocab")) : Vocabulary::load(data_path.parent_path() / "vocab.txt");
  const bool use_control = get<bool>(c, "train.use_control");
  if (use_control) vocab = vocab.with_control_tokens();
  auto data = load_dataset(data_path, vocab);
  if (data.empty()) throw DataError("training data " + data_path.string() + " is empty");
  for (auto& ex : data) {
    if (!ex.response) throw DataError("training example '" + ex.id + "' has no response");
    if (use_control) {
      ex.control = annotate_control_tokens(ex, vocab, get<double>(c, "train.control_high"), get<double>(c, "train.control_low"));
    }
  }
  NgramConfig cfg;
  cfg.order = get<int>(c, "train.order");
  cfg.k = get<double>(c, "train.k");
  cfg.linearization.max_history = static_cast<std::size_t>(get<int>(c, "train.max_history"));
  cfg.linearization.max_document = static_cast<std::size_t>(get<int>(c, "train.max_document"));
  TruncationPolicy policy;
  const auto truncation = get<std::string>(c, "train.channel_truncation");
  if (truncation == "uniform") {
    policy.distribution = TruncationDistribution::uniform;
  } else if (truncation == "none") {
    policy.distribution = TruncationDistribution::none;
  } else {
    throw ConfigError("train.channel_truncation must be uniform or none");
  }
  policy.seed = derive_seed(get<std::uint64_t>(c, "seed"), "truncation");
  auto direct = fit_ngram(make_direct_training_pairs(data, use_control), cfg, vocab);
  auto channel = fit_ngram(make_channel_training_pairs(data, policy), cfg, vocab);
  auto lm = fit_ngram(make_lm_training_pairs(data), cfg, vocab);
  vocab.save(ctx.out / "vocab.txt");
  direct.save(ctx.out / "direct.model");
  channel.save(ctx.out / "channel.model");
  lm.save(ctx.out / "lm.model");
  ctx.record.vocab_hash = vocab.hash();
}

void decode(Context& ctx) {
  auto models = load_models(ctx);
  auto data = load_examples(ctx.input("data"), models.vocab);
  const auto kind = parse_decoder_kind(get<std::string>(ctx.config, "decode.decoder"));
  const auto beam = beam_config(ctx.config);
  const auto scaling = scaling_config(ctx.config);
  auto outcomes = decode_examples(data, kind, models.set(), scaling, beam, ctx.workers());
  std::string nbest;
  for (const auto& o : outcomes) {
    if (o.result) nbest += nbest_jsonl(o.example_id, o.result->nbest, models.vocab);
  }
  ctx.write("nbest.jsonl", nbest);
  ctx.write("outputs.jsonl", outputs_jsonl(outcomes, models.vocab, beam.length_normalize_final));
  models.vocab.save(ctx.out / "vocab.txt");
  auto report = evaluate(data, outcomes, models.lm.get(), beam.length_normalize_final);
  ctx.record.notes.push_back(kFactualityNote);
  ctx.write("report.json", report_with_config(ctx.config, report, ctx.record.notes));
  ctx.write("examples.jsonl", report_examples_jsonl(report));
  log_failures(ctx.log, outcomes);
}

/// Reads a decode run's outputs.jsonl into outcomes keyed by example id.
std::map<std::string, ExampleOutcome> read_outputs(const fs::path& path) {
  std::map<std::string, ExampleOutcome> out;
  std::istringstream in(read_file(path));
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = Json::parse(line);
      ExampleOutcome o;
      o.example_id = j.at("example_id").get<std::string>();
      if (j.contains("error")) {
        o.error = j["error"].get<std::string>();
      } else {
        DecodeResult r;
        r.best.tokens = {Vocabulary::kSos};
        for (auto t : j.at("tokens").get<TokenSeq>()) r.best.tokens.push_back(t);
        r.best.finished = j.value("finished", true);
        if (r.best.finished) r.best.tokens.push_back(Vocabulary::kEos);
        const auto& comb = j.value("combined", Json(nullptr));
        r.best.combined = comb.is_number() ? comb.get<double>() : -std::numeric_limits<double>::infinity();
        o.result = std::move(r);
      }
      auto id = o.example_id;
      if (!out.emplace(id, std::move(o)).second) throw DataError("duplicate example id '" + id + "'");
    } catch (const Json::exception& e) {
      throw DataError("malformed output at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void eval(Context& ctx) {
  const auto& run_dir = ctx.input("run");
  auto vocab = Vocabulary::load(run_dir / "vocab.txt");
  ctx.record.vocab_hash = vocab.hash();
  auto references = load_dataset(ctx.input("references"), vocab);
  if (references.empty()) throw DataError("reference set is empty");
  auto outputs = read_outputs(run_dir / "outputs.jsonl");
  std::vector<ExampleOutcome> outcomes;
  for (const auto& ex : references) {
    auto it = outputs.find(ex.id);
    if (it == outputs.end()) throw DataError("run has no output for example '" + ex.id + "'");
    outcomes.push_back(it->second);
  }
  std::unique_ptr<Models> models;
  if (ctx.has("models") || ctx.has("world")) models = std::make_unique<Models>(load_models(ctx));
  auto report = evaluate(references, outcomes, models ? models->lm.get() : nullptr, false);
  ctx.record.notes.push_back(kFactualityNote);
  ctx.write("report.json", report_with_config(ctx.config, report, ctx.record.notes));
  ctx.write("examples.jsonl", report_examples_jsonl(report));
}

void sweep_command(Context& ctx) {
  auto models = load_models(ctx);
  auto data = load_examples(ctx.input("data"), models.vocab);
  const auto kind = parse_decoder_kind(get<std::string>(ctx.config, "decode.decoder"));
  auto channel_axis = parse_grid_axis(get<std::string>(ctx.config, "sweep.channel"));
  auto lm_axis = parse_grid_axis(get<std::string>(ctx.config, "sweep.lm"));
  std::vector<std::pair<double, double>> grid;
  for (double a : channel_axis) {
    for (double b : lm_axis) grid.emplace_back(a, b);
  }
  const auto lambda_direct = scaling_config(ctx.config).lambda_direct;
  auto result = sweep(data, models.set(), kind, beam_config(ctx.config), grid, get<std::string>(ctx.config, "sweep.metric"),
                      lambda_direct, ctx.workers(), sha256_file(ctx.input("data")).substr(0, 16));
  ctx.record.notes.push_back(kFactualityNote);
  Json j;
  j["config"] = ctx.config;
  j["sweep"] = Json::parse(sweep_json(result));
  j["notes"] = ctx.record.notes;
  ctx.write("sweep.json", j.dump(2) + "\n");
  if (result.best) {
    const auto& p = result.points[*result.best];
    ctx.log << "best lambda_channel=" << p.lambda_channel << " lambda_lm=" << p.lambda_lm << "\n";
  }
}

void curve(Context& ctx) {
  auto models = load_models(ctx);
  auto data = load_examples(ctx.input("data"), models.vocab);
  std::vector<DecoderKind> kinds;
  for (const auto& k : split_list(get<std::string>(ctx.config, "curve.kinds"))) kinds.push_back(parse_decoder_kind(k));
  std::vector<int> budgets;
  for (const auto& b : split_list(get<std::string>(ctx.config, "curve.budgets"))) {
    try {
      std::size_t used = 0;
      budgets.push_back(std::stoi(b, &used));
      if (used != b.size()) throw std::invalid_argument(b);
    } catch (const std::exception&) {
      throw ConfigError("curve.budgets must be a comma separated list of integers, got '" + b + "'");
    }
  }
  if (kinds.empty() || budgets.empty()) throw ConfigError("curve needs at least one kind and one budget");
  auto rows = budget_curve(data, models.set(), kinds, budgets, beam_config(ctx.config), default_scaling, ctx.workers());
  ctx.write("curve.csv", curve_csv(rows));
}

void retrieve(Context& ctx) {
  const auto& c = ctx.config;
  std::unique_ptr<Models> models;
  Vocabulary vocab;
  if (get<bool>(c, "retrieve.decode") || ctx.has("models") || ctx.has("world")) {
    models = std::make_unique<Models>(load_models(ctx));
    vocab = models->vocab;
  } else {
    vocab = Vocabulary::load(ctx.input("vocab"));
    ctx.record.vocab_hash = vocab.hash();
  }
  auto collection = load_collection(ctx.input("collection"), vocab);
  auto data = load_examples(ctx.input("data"), vocab);
  Bm25Params bm25{get<double>(c, "retrieve.bm25_k1"), get<double>(c, "retrieve.bm25_b")};
  auto index = index_documents(collection, vocab.hash(), bm25);
  const auto retriever = parse_retriever_kind(get<std::string>(c, "retrieve.retriever"));
  const int k = get<int>(c, "retrieve.k");
  const int depth = get<int>(c, "retrieve.rerank_candidates");
  if (k < 1 || depth < 0) throw ConfigError("retrieve.k must be >= 1 and retrieve.rerank_candidates >= 0");

  std::vector<RetrievalResult> results(data.size());
  parallel_for(data.size(), ctx.workers(), [&](std::size_t i) {
    const auto& ex = data[i];
    if (retriever == RetrieverKind::bi) {
      results[i] = retrieve_bi(index, ex.context, static_cast<std::size_t>(k), ex.id);
    } else if (depth > 0) {
      auto candidates = retrieve_bi(index, ex.context, static_cast<std::size_t>(std::max(depth, k)), ex.id);
      results[i] = retrieve_cross(index, ex.context, static_cast<std::size_t>(k), candidates, ex.id);
    } else {
      results[i] = retrieve_cross(index, ex.context, static_cast<std::size_t>(k), std::nullopt, ex.id);
    }
  });
  ctx.write("retrieval.jsonl", retrieval_jsonl(results));
  ctx.record.notes.push_back(kRetrieverNote);

  Json report;
  report["config"] = c;
  report["queries"] = data.size();
  std::map<std::string, std::string> gold;
  for (const auto& ex : data) {
    if (ex.document_id) gold[ex.id] = *ex.document_id;
  }
  report["recall_at_1"] = gold.size() == data.size() ? Json(recall_at_1(results, gold)) : Json(nullptr);

  if (get<bool>(c, "retrieve.decode")) {
    PipelineConfig pipeline;
    pipeline.retriever = retriever;
    pipeline.rerank_candidates = static_cast<std::size_t>(depth);
    pipeline.decoder = parse_decoder_kind(get<std::string>(c, "decode.decoder"));
    pipeline.scaling = scaling_config(c);
    pipeline.beam = beam_config(c);
    std::vector<ExampleOutcome> outcomes(data.size());
    std::vector<std::string> retrieved(data.size());
    parallel_for(data.size(), ctx.workers(), [&](std::size_t i) {
      outcomes[i].example_id = data[i].id;
      try {
        auto r = pipeline_decode(index, collection, pipeline, models->set(), data[i]);
        retrieved[i] = r.document_id;
        outcomes[i].result = std::move(r.decode);
      } catch (const ScorerError& e) {
        outcomes[i].error = e.what();
      }
    });
    ctx.write("outputs.jsonl", outputs_jsonl(outcomes, vocab, pipeline.beam.length_normalize_final));
    auto metrics = evaluate(data, outcomes, models->lm.get(), pipeline.beam.length_normalize_final);
    ctx.record.notes.push_back(kFactualityNote);
    report["metrics"] = Json::parse(report_json(metrics));
    ctx.write("examples.jsonl", report_examples_jsonl(metrics));
    vocab.save(ctx.out / "vocab.txt");
    log_failures(ctx.log, outcomes);
  }
  report["notes"] = ctx.record.notes;
  ctx.write("report.json", report.dump(2) + "\n");
}

void dispatch(const std::string& command, Context& ctx) {
  if (command == "world-gen") {
    world_gen(ctx);
  } else if (command == "train") {
    train(ctx);
  } else if (command == "decode") {
    decode(ctx);
  } else if (command == "eval") {
    eval(ctx);
  } else if (command == "sweep") {
    sweep_command(ctx);
  } else if (command == "curve") {
    curve(ctx);
  } else if (command == "retrieve") {
    retrieve(ctx);
  } else {
    throw ConfigError("cannot record command '" + command + "'");
  }
}

}  // namespace

void finalize_config(const std::string& command, Json& config) {
  if (command != "decode" && command != "sweep" && command != "retrieve") return;
  auto kind = parse_decoder_kind(get<std::string>(config, "decode.decoder"));
  auto s = default_scaling(kind);
  auto fill = [&](const char* key, double value) {
    auto& slot = config["decode"][key];
    if (slot.is_null()) slot = value;
  };
  fill("lambda_direct", s.lambda_direct);
  fill("lambda_channel", s.lambda_channel);
  fill("lambda_lm", s.lambda_lm);
}

RunRecord execute(const Invocation& inv, std::ostream& log) {
  RunRecord record;
  record.command = inv.command;
  record.config = inv.config;
  finalize_config(inv.command, record.config);
  for (const auto& [role, path] : inv.inputs) record.inputs[role] = {fs::absolute(path), hash_input(path)};
  record.run_id = make_run_id(record.command, record.config, record.inputs);
  record.timestamp = utc_timestamp();
  const fs::path out = inv.out.empty() ? default_output_root() / (inv.command + "-" + record.run_id) : inv.out;
  for (const auto& [role, in] : record.inputs) {
    if (fs::absolute(out) == in.path) throw ConfigError("output directory must differ from input " + role);
  }
  const bool fresh = !fs::exists(out);
  fs::create_directories(out);

  Context ctx{record.config, inv.inputs, out, log, record};
  try {
    dispatch(inv.command, ctx);
  } catch (...) {
    if (fresh) fs::remove_all(out);
    throw;
  }

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.is_regular_file() && e.path().filename() != "run.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) record.outputs[f.filename().string()] = sha256_file(f);
  write_file(out / "run.json", record.to_json().dump(2) + "\n");
  log << inv.command << " run " << record.run_id << " -> " << out.string() << "\n";
  return record;
}

}  // namespace ncd::cli
