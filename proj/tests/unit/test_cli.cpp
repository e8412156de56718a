#include <doctest.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "ncd/cli/config.hpp"
#include "ncd/core/dataset.hpp"
#include "ncd/core/error.hpp"
#include "ncd/core/hash.hpp"
#include "ncd/scorers/remote.hpp"

extern char** environ;

using namespace ncd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = NCD_CLI_PATH;

/// Scratch directory shared by the cases, created once per process.
const fs::path& scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("ncd_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const auto cmd = kCli + " " + args + " >" + (scratch() / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string last_log() { return read_file(scratch() / "last.log"); }

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

std::string p(const std::string& name) { return (scratch() / name).string(); }

/// A small world with datasets and trained models, built once.
void ensure_fixture() {
  static bool done = false;
  if (done) return;
  REQUIRE(run("world-gen --out " + p("w") + " --set data.train=400 --set data.valid=0 --set data.test=15") == 0);
  REQUIRE(run("train --data " + p("w/train.jsonl") + " --out " + p("m") + " --set train.order=4") == 0);
  done = true;
}

}  // namespace

TEST_CASE("config overrides and seeds") {
  auto c = cli::default_config();
  cli::apply_override(c, "decode.beam=8");
  cli::apply_override(c, "sweep.lm=0.5");
  cli::apply_override(c, "decode.decoder=rerank");
  CHECK(c["decode"]["beam"] == 8);
  CHECK(c["sweep"]["lm"] == "0.5");
  CHECK(c["decode"]["decoder"] == "rerank");
  CHECK_THROWS_AS(cli::apply_override(c, "decode.nope=1"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "decode=1"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "novalue"), ConfigError);
  CHECK(cli::get<int>(c, "decode.beam") == 8);
  CHECK_THROWS_AS(cli::get<int>(c, "decode.decoder"), ConfigError);
  CHECK_FALSE(cli::get_optional_double(c, "decode.lambda_lm"));
  CHECK(cli::derive_seed(1, "world") == cli::derive_seed(1, "world"));
  CHECK(cli::derive_seed(1, "world") != cli::derive_seed(1, "train"));
  CHECK(cli::derive_seed(1, "world") != cli::derive_seed(2, "world"));
}

TEST_CASE("world-gen writes a loadable world and is deterministic") {
  REQUIRE(run("world-gen --out " + p("wg1") + " --set data.train=20 --set data.test=5") == 0);
  REQUIRE(run("world-gen --out " + p("wg2") + " --set data.train=20 --set data.test=5") == 0);
  for (const char* f : {"world.json", "vocab.txt", "train.jsonl", "valid.jsonl", "test.jsonl", "collection.jsonl"}) {
    CAPTURE(f);
    CHECK(sha256_file(p("wg1/") + f) == sha256_file(p("wg2/") + f));
  }
  auto r1 = read_json(p("wg1/run.json"));
  auto r2 = read_json(p("wg2/run.json"));
  CHECK(r1["run_id"] == r2["run_id"]);
  CHECK(r1["outputs"] == r2["outputs"]);
  CHECK(r1["config"]["world"]["vocab_size"] == 6);
  CHECK(run("world-gen --out " + p("wg3") + " --set seed=2 --set data.train=20") == 0);
  CHECK(sha256_file(p("wg1/world.json")) != sha256_file(p("wg3/world.json")));
}

TEST_CASE("world-gen rejects an oversize spec") {
  CHECK(run("world-gen --out " + p("big") + " --set world.vocab_size=30 --set world.max_response_len=5") == 1);
  CHECK(last_log().find("1e6") != std::string::npos);
}

TEST_CASE("train is deterministic and truncates channel data by default") {
  ensure_fixture();
  REQUIRE(run("train --data " + p("w/train.jsonl") + " --out " + p("m2") + " --set train.order=4") == 0);
  for (const char* f : {"direct.model", "channel.model", "lm.model", "vocab.txt"}) {
    CHECK(sha256_file(p("m/") + f) == sha256_file(p("m2/") + f));
  }
  CHECK(read_json(p("m/run.json"))["config"]["train"]["channel_truncation"] == "uniform");
  REQUIRE(run("train --data " + p("w/train.jsonl") + " --out " + p("m3") +
              " --set train.order=4 --set train.channel_truncation=none") == 0);
  CHECK(sha256_file(p("m/channel.model")) != sha256_file(p("m3/channel.model")));
  CHECK(sha256_file(p("m/direct.model")) == sha256_file(p("m3/direct.model")));
}

TEST_CASE("exit codes") {
  CHECK(run("train --data " + p("missing.jsonl") + " --out " + p("x")) == 2);
  CHECK(run("frobnicate") == 1);
  CHECK(run("decode") == 1);
  CHECK(run("--help") == 0);
  ensure_fixture();
  CHECK(run("decode --data " + p("w/test.jsonl") + " --models " + p("m") + " --set decode.beam=0 --out " + p("b0")) == 1);
  CHECK_FALSE(fs::exists(p("b0")));
  CHECK(run("decode --data " + p("w/test.jsonl") + " --models " + p("m") + " --set decode.decoder=sampling") == 1);
  write_file(scratch() / "broken.jsonl", "{\"id\": \"b\", \"context\": []}\n");
  CHECK(run("decode --data " + p("broken.jsonl") + " --models " + p("m") + " --out " + p("bx")) == 2);
  CHECK(last_log().find("line 1") != std::string::npos);
  // no scorer listening
  CHECK(run("decode --data " + p("w/test.jsonl") + " --vocab " + p("m/vocab.txt") +
            " --set scorers.source=remote --set scorers.endpoint=:1 --out " + p("rx")) == 3);
}

TEST_CASE("decoder default scalings are recorded") {
  ensure_fixture();
  REQUIRE(run("decode --data " + p("w/test.jsonl") + " --models " + p("m") + " --out " + p("dr") +
              " --set decode.decoder=rerank --set decode.beam=3") == 0);
  auto rerank = read_json(p("dr/run.json"))["config"]["decode"];
  CHECK(rerank["lambda_channel"] == 0.5);
  CHECK(rerank["lambda_lm"] == 0.2);
  REQUIRE(run("decode --data " + p("w/test.jsonl") + " --models " + p("m") + " --out " + p("do") +
              " --set decode.beam=3") == 0);
  auto online = read_json(p("do/run.json"))["config"]["decode"];
  CHECK(online["decoder"] == "online-ours");
  CHECK(online["lambda_channel"] == 0.6);
  CHECK(online["lambda_lm"] == 0.4);
  for (const char* f : {"nbest.jsonl", "outputs.jsonl", "report.json", "examples.jsonl", "vocab.txt"}) {
    CHECK(fs::exists(p("do/") + f));
  }
  auto report = read_json(p("do/report.json"));
  CHECK(report["metrics"]["count"] == 15);
  CHECK(report["config"]["decode"]["lambda_lm"] == 0.4);
}

TEST_CASE("oracle decoding on a |V|=6, max_len=4 world finishes within a minute") {
  REQUIRE(run("world-gen --out " + p("wo") + " --set world.max_response_len=4 --set data.train=0 --set data.valid=0 "
              "--set data.test=5") == 0);
  auto start = std::chrono::steady_clock::now();
  CHECK(run("decode --data " + p("wo/test.jsonl") + " --world " + p("wo/world.json") + " --out " + p("wod") +
            " --set scorers.source=world --set decode.decoder=oracle --set decode.max_len=4") == 0);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(60));
}

TEST_CASE("eval of references against themselves gives BLEU 1") {
  ensure_fixture();
  fs::create_directories(p("selfrun"));
  fs::copy_file(p("w/vocab.txt"), p("selfrun/vocab.txt"), fs::copy_options::overwrite_existing);
  auto refs = load_dataset(p("w/test.jsonl"), Vocabulary::load(p("w/vocab.txt")));
  std::string outputs;
  for (const auto& ex : refs) outputs += json{{"example_id", ex.id}, {"tokens", *ex.response}}.dump() + "\n";
  write_file(p("selfrun/outputs.jsonl"), outputs);
  REQUIRE(run("eval --run " + p("selfrun") + " --references " + p("w/test.jsonl") + " --out " + p("se")) == 0);
  auto report = read_json(p("se/report.json"));
  CHECK(report["metrics"]["bleu"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report["metrics"]["factuality_proxy"] == "token_f1");

  write_file(p("selfrun/outputs.jsonl"), json{{"example_id", refs[0].id}, {"tokens", *refs[0].response}}.dump() + "\n");
  CHECK(run("eval --run " + p("selfrun") + " --references " + p("w/test.jsonl") + " --out " + p("se2")) == 2);
}

TEST_CASE("sweep accepts range syntax") {
  ensure_fixture();
  REQUIRE(run("sweep --data " + p("w/test.jsonl") + " --models " + p("m") + " --out " + p("sw") +
              " --set sweep.channel=0.1:2.0:0.1 --set sweep.lm=0.5 --set decode.beam=2 --set decode.max_len=4") == 0);
  auto sweep = read_json(p("sw/sweep.json"))["sweep"];
  CHECK(sweep["points"].size() == 20);
  CHECK(sweep["selection_metric"] == "token_f1");
  CHECK(sweep.contains("best"));
}

TEST_CASE("curve writes plot-ready CSV") {
  ensure_fixture();
  REQUIRE(run("curve --data " + p("w/test.jsonl") + " --models " + p("m") + " --out " + p("cv") +
              " --set curve.budgets=1,2,4 --set decode.max_len=4") == 0);
  std::istringstream csv(read_file(p("cv/curve.csv")));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "kind,budget,metric,value");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 3);
    ++rows;
  }
  CHECK(rows > 9);
}

TEST_CASE("retrieve reports recall and pipeline metrics") {
  ensure_fixture();
  REQUIRE(run("retrieve --collection " + p("w/collection.jsonl") + " --data " + p("w/test.jsonl") + " --vocab " +
              p("w/vocab.txt") + " --out " + p("rt")) == 0);
  auto report = read_json(p("rt/report.json"));
  CHECK(report["recall_at_1"].is_number());
  CHECK(report["queries"] == 15);
  REQUIRE(run("retrieve --collection " + p("w/collection.jsonl") + " --data " + p("w/test.jsonl") + " --models " +
              p("m") + " --set retrieve.decode=true --set decode.max_len=4 --out " + p("rtd")) == 0);
  CHECK(read_json(p("rtd/report.json"))["metrics"]["count"] == 15);
  CHECK(fs::exists(p("rtd/outputs.jsonl")));
}

TEST_CASE("rerun reproduces outputs and detects changed inputs") {
  ensure_fixture();
  REQUIRE(run("decode --data " + p("w/test.jsonl") + " --models " + p("m") + " --out " + p("rr") +
              " --set decode.decoder=online-liu --set decode.max_len=4") == 0);
  CHECK(run("rerun " + p("rr/run.json") + " --out " + p("rr2")) == 0);
  CHECK(last_log().find("identical") != std::string::npos);
  for (const char* f : {"nbest.jsonl", "outputs.jsonl", "report.json"}) {
    CHECK(read_file(p("rr/") + f) == read_file(p("rr2/") + f));
  }
  fs::create_directories(p("mut"));
  fs::copy_file(p("w/test.jsonl"), p("mut/test.jsonl"), fs::copy_options::overwrite_existing);
  REQUIRE(run("decode --data " + p("mut/test.jsonl") + " --models " + p("m") + " --out " + p("rm") +
              " --set decode.max_len=4") == 0);
  write_file(p("mut/test.jsonl"), read_file(p("mut/test.jsonl")) + "\n\n");
  CHECK(run("rerun " + p("rm/run.json") + " --out " + p("rm2")) == 2);
}

TEST_CASE("worker count does not change outputs") {
  ensure_fixture();
  REQUIRE(run("decode --data " + p("w/test.jsonl") + " --models " + p("m") + " --out " + p("w1") + " --workers 1") == 0);
  REQUIRE(run("decode --data " + p("w/test.jsonl") + " --models " + p("m") + " --out " + p("w4") + " --workers 4") == 0);
  CHECK(read_file(p("w1/outputs.jsonl")) == read_file(p("w4/outputs.jsonl")));
  CHECK(read_file(p("w1/nbest.jsonl")) == read_file(p("w4/nbest.jsonl")));
}

TEST_CASE("NC_DECODER_HOME sets the output root") {
  ensure_fixture();
  const auto home = p("home");
  ::setenv("NC_DECODER_HOME", home.c_str(), 1);
  const int code = run("decode --data " + p("w/test.jsonl") + " --models " + p("m") + " --set decode.max_len=3");
  ::unsetenv("NC_DECODER_HOME");
  REQUIRE(code == 0);
  std::size_t runs = 0;
  for (const auto& e : fs::directory_iterator(fs::path(home) / "runs")) {
    CHECK(e.path().filename().string().rfind("decode-", 0) == 0);
    CHECK(fs::exists(e.path() / "run.json"));
    ++runs;
  }
  CHECK(runs == 1);
}

TEST_CASE("serve-mock-scorer answers the protocol and stops on SIGTERM") {
  ensure_fixture();
  int pipefd[2];
  REQUIRE(::pipe(pipefd) == 0);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, pipefd[0]);
  const auto models = p("m");
  std::vector<std::string> args{kCli, "serve-mock-scorer", "--models", models, "--port", "0"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  REQUIRE(posix_spawn(&pid, kCli.c_str(), &actions, nullptr, argv.data(), environ) == 0);
  posix_spawn_file_actions_destroy(&actions);
  ::close(pipefd[1]);
  std::string banner;
  char ch = 0;
  while (::read(pipefd[0], &ch, 1) == 1 && ch != '\n') banner += ch;
  ::close(pipefd[0]);
  REQUIRE(banner.rfind("listening on 127.0.0.1:", 0) == 0);
  Endpoint endpoint = Endpoint::parse(banner.substr(std::string("listening on ").size()));

  RemoteSession session(endpoint, std::chrono::milliseconds(5000));
  auto bad = json::parse(session.exchange("{\"id\":\"x-17\",\"op\":\"next\",\"role\":\"lm\"}\n", "x-17"));
  CHECK(bad["id"] == "x-17");
  CHECK(bad.contains("error"));
  auto vocab = Vocabulary::load(p("m/vocab.txt"));
  RemoteScorer lm(endpoint, vocab.size());
  auto lp = lm.next_token_logprobs(Condition::response_lm({Turn{Speaker::user, {4}}}), TokenSeq{0});
  CHECK(lp.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));

  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}
