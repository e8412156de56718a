#include "ncd/cli/run_record.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>

#include "ncd/core/error.hpp"
#include "ncd/core/hash.hpp"

namespace ncd::cli {

namespace fs = std::filesystem;

Json RunRecord::to_json() const {
  Json j;
  j["run_id"] = run_id;
  j["command"] = command;
  j["timestamp"] = timestamp;
  j["versions"] = {{"ncdecode", kVersion}, {"record_format", kRecordFormat}};
  j["config"] = config;
  j["inputs"] = Json::object();
  for (const auto& [role, in] : inputs) j["inputs"][role] = {{"path", in.path.string()}, {"sha256", in.sha256}};
  j["vocab_hash"] = vocab_hash;
  j["outputs"] = Json::object();
  for (const auto& [name, hash] : outputs) j["outputs"][name] = hash;
  j["notes"] = notes;
  return j;
}

RunRecord RunRecord::from_json(const Json& j) {
  try {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.command = j.at("command").get<std::string>();
    r.timestamp = j.value("timestamp", "");
    r.config = j.at("config");
    for (auto it = j.at("inputs").begin(); it != j.at("inputs").end(); ++it) {
      r.inputs[it.key()] = {it.value().at("path").get<std::string>(), it.value().at("sha256").get<std::string>()};
    }
    r.vocab_hash = j.value("vocab_hash", "");
    for (auto it = j.at("outputs").begin(); it != j.at("outputs").end(); ++it) {
      r.outputs[it.key()] = it.value().get<std::string>();
    }
    if (j.contains("notes")) r.notes = j["notes"].get<std::vector<std::string>>();
    return r;
  } catch (const Json::exception& e) {
    throw DataError(std::string("invalid run record: ") + e.what());
  }
}

RunRecord RunRecord::load(const fs::path& path) {
  try {
    return from_json(Json::parse(read_file(path)));
  } catch (const Json::exception& e) {
    throw DataError("cannot parse run record " + path.string() + ": " + e.what());
  }
}

std::string make_run_id(const std::string& command, const Json& config, const std::map<std::string, InputFile>& inputs) {
  std::string key = command + "\n" + config.dump() + "\n";
  for (const auto& [role, in] : inputs) key += role + "=" + in.sha256 + "\n";
  return sha256_hex(key).substr(0, 16);
}

std::string hash_input(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("input not found: " + path.string());
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().filename() != "run.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files) listing += f.filename().string() + " " + sha256_file(f) + "\n";
  return sha256_hex(listing);
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path default_output_root() {
  if (const char* home = std::getenv("NC_DECODER_HOME"); home && *home) return fs::path(home) / "runs";
  return fs::path("runs");
}

}  // namespace ncd::cli
