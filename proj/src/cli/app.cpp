#include "ncd/cli/app.hpp"

#include <CLI11.hpp>
#include <csignal>
#include <iostream>

#include "ncd/core/error.hpp"
#include "ncd/scorers/ngram.hpp"
#include "ncd/scorers/remote.hpp"
#include "ncd/world/world.hpp"

namespace ncd::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  int workers = -1;
  std::map<std::string, std::string> inputs;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_file, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override a configuration key, e.g. decode.beam=8");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--workers", o.workers, "worker threads, 0 = all processors")->check(CLI::NonNegativeNumber);
}

void add_input(CLI::App* cmd, Options& o, const std::string& role, const std::string& help, bool required = false) {
  auto* opt = cmd->add_option("--" + role, o.inputs[role], help);
  if (required) opt->required();
}

Invocation make_invocation(const std::string& command, const Options& o) {
  Invocation inv;
  inv.command = command;
  inv.config = resolve_config(o.config_file, o.sets);
  if (o.workers >= 0) inv.config["workers"] = o.workers;
  for (const auto& [role, path] : o.inputs) {
    if (!path.empty()) inv.inputs[role] = path;
  }
  inv.out = o.out;
  return inv;
}

void serve(const Options& o, int port, std::ostream& out) {
  auto config = resolve_config(o.config_file, o.sets);
  std::unique_ptr<WorldModel> world;
  std::unique_ptr<Scorer> direct, channel, lm;
  const auto models = o.inputs.count("models") ? o.inputs.at("models") : "";
  const auto world_path = o.inputs.count("world") ? o.inputs.at("world") : "";
  if (!world_path.empty()) {
    world = std::make_unique<WorldModel>(WorldModel::load(world_path));
    direct = exact_conditional(*world, ExactRole::direct);
    channel = exact_conditional(*world, ExactRole::channel);
    lm = exact_conditional(*world, ExactRole::response_lm);
  } else if (!models.empty()) {
    auto vocab = Vocabulary::load(fs::path(models) / "vocab.txt");
    direct = std::make_unique<NgramScorer>(NgramScorer::load(fs::path(models) / "direct.model", vocab));
    channel = std::make_unique<NgramScorer>(NgramScorer::load(fs::path(models) / "channel.model", vocab));
    lm = std::make_unique<NgramScorer>(NgramScorer::load(fs::path(models) / "lm.model", vocab));
  } else {
    throw ConfigError("serve-mock-scorer needs --models or --world");
  }
  // handled by sigwait below rather than by the default action
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  ScorerServer server(direct.get(), channel.get(), lm.get());
  const int bound = server.start(port);
  out << "listening on 127.0.0.1:" << bound << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  server.stop();
}

int rerun(const std::string& record_path, const std::string& out_dir, std::ostream& out, std::ostream& log) {
  auto record = RunRecord::load(record_path);
  Invocation inv;
  inv.command = record.command;
  inv.config = record.config;
  for (const auto& [role, in] : record.inputs) {
    const auto actual = hash_input(in.path);
    if (actual != in.sha256) throw DataError("input " + role + " (" + in.path.string() + ") changed since the run");
    inv.inputs[role] = in.path;
  }
  inv.out = out_dir.empty() ? default_output_root() / (record.command + "-" + record.run_id + "-rerun") : fs::path(out_dir);
  auto again = execute(inv, log);
  std::vector<std::string> differing;
  for (const auto& [name, hash] : record.outputs) {
    auto it = again.outputs.find(name);
    if (it == again.outputs.end() || it->second != hash) differing.push_back(name);
  }
  for (const auto& [name, hash] : again.outputs) {
    if (!record.outputs.count(name)) differing.push_back(name);
  }
  if (differing.empty()) {
    out << "identical: " << again.outputs.size() << " output files match run " << record.run_id << "\n";
    return kSuccess;
  }
  for (const auto& name : differing) out << "differs: " << name << "\n";
  return kRuntimeFailure;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Noisy-channel decoding for grounded dialog"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::map<std::string, Options> options;
  std::map<std::string, CLI::App*> commands;
  auto command = [&](const std::string& name, const std::string& help) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, options[name]);
    commands[name] = cmd;
    return cmd;
  };

  command("world-gen", "build a synthetic world and sample train/valid/test data");
  auto* train = command("train", "fit direct, channel and LM n-gram scorers");
  add_input(train, options["train"], "data", "training dataset (JSONL)", true);
  add_input(train, options["train"], "vocab", "vocabulary file (default: vocab.txt next to the data)");

  auto* decode = command("decode", "decode a dataset and write n-best lists");
  add_input(decode, options["decode"], "data", "dataset to decode", true);
  add_input(decode, options["decode"], "models", "directory written by train");
  add_input(decode, options["decode"], "world", "world file, for scorers.source=world");
  add_input(decode, options["decode"], "vocab", "vocabulary, for scorers.source=remote");

  auto* eval = command("eval", "score a decode run against references");
  add_input(eval, options["eval"], "run", "output directory of a decode run", true);
  add_input(eval, options["eval"], "references", "dataset with gold responses", true);
  add_input(eval, options["eval"], "models", "models for perplexity");
  add_input(eval, options["eval"], "world", "world for perplexity, with scorers.source=world");

  for (const char* name : {"sweep", "curve"}) {
    auto* cmd = command(name, std::string(name) == "sweep" ? "grid search over the channel and LM weights"
                                                           : "metrics by effective beam size");
    add_input(cmd, options[name], "data", "dataset", true);
    add_input(cmd, options[name], "models", "directory written by train");
    add_input(cmd, options[name], "world", "world file, for scorers.source=world");
    add_input(cmd, options[name], "vocab", "vocabulary, for scorers.source=remote");
  }

  auto* retrieve = command("retrieve", "rank documents for each example, optionally decode on the top one");
  add_input(retrieve, options["retrieve"], "collection", "document collection (JSONL)", true);
  add_input(retrieve, options["retrieve"], "data", "dataset", true);
  add_input(retrieve, options["retrieve"], "vocab", "vocabulary");
  add_input(retrieve, options["retrieve"], "models", "directory written by train");
  add_input(retrieve, options["retrieve"], "world", "world file, for scorers.source=world");

  auto* serve_cmd = app.add_subcommand("serve-mock-scorer", "serve local scorers over the line protocol");
  Options serve_options;
  int port = 0;
  serve_cmd->add_option("--port", port, "TCP port, 0 picks a free one")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--config", serve_options.config_file)->check(CLI::ExistingFile);
  serve_cmd->add_option("--set", serve_options.sets);
  serve_cmd->add_option("--models", serve_options.inputs["models"], "directory written by train");
  serve_cmd->add_option("--world", serve_options.inputs["world"], "world file, exact conditionals");

  auto* rerun_cmd = app.add_subcommand("rerun", "repeat a run from its run.json and compare outputs");
  std::string record_path, rerun_out;
  rerun_cmd->add_option("record", record_path, "run.json of the original run")->required()->check(CLI::ExistingFile);
  rerun_cmd->add_option("--out", rerun_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (serve_cmd->parsed()) {
      serve(serve_options, port, std::cout);
      return kSuccess;
    }
    if (rerun_cmd->parsed()) return rerun(record_path, rerun_out, std::cout, std::cerr);
    for (const auto& [name, cmd] : commands) {
      if (cmd->parsed()) {
        execute(make_invocation(name, options[name]), std::cerr);
        return kSuccess;
      }
    }
    return kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

}  // namespace ncd::cli
