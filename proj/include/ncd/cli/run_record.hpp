#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "ncd/cli/config.hpp"

namespace ncd::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kRecordFormat = 1;

struct InputFile {
  std::filesystem::path path;
  std::string sha256;
};

/// Everything needed to repeat a command: the resolved configuration, the
/// hashed inputs and the hashes of what it wrote.
struct RunRecord {
  std::string run_id;
  std::string command;
  std::string timestamp;  // UTC, informational only
  Json config;
  std::map<std::string, InputFile> inputs;  // by role: data, models, world, ...
  std::string vocab_hash;
  std::map<std::string, std::string> outputs;  // file name -> sha256
  std::vector<std::string> notes;

  Json to_json() const;
  static RunRecord from_json(const Json& j);
  static RunRecord load(const std::filesystem::path& path);
};

/// Hash of command, resolved configuration and input hashes; identical
/// invocations get identical ids.
std::string make_run_id(const std::string& command, const Json& config,
                        const std::map<std::string, InputFile>& inputs);

/// A directory's input hash covers every regular file in it, by name.
std::string hash_input(const std::filesystem::path& path);

std::string utc_timestamp();

/// $NC_DECODER_HOME/runs, or ./runs when unset.
std::filesystem::path default_output_root();

}  // namespace ncd::cli
