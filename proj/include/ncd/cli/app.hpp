#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "ncd/cli/run_record.hpp"

namespace ncd::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kRuntimeFailure = 3 };

/// One recorded command: resolved configuration, named inputs and the
/// output directory (empty picks <output root>/<command>-<run id>).
struct Invocation {
  std::string command;
  Json config;
  std::map<std::string, std::filesystem::path> inputs;
  std::filesystem::path out;
};

/// Fills configuration values that depend on other values (decoder
/// default scalings) so the recorded configuration is explicit.
void finalize_config(const std::string& command, Json& config);

/// Runs a recorded command and writes run.json next to its outputs.
RunRecord execute(const Invocation& invocation, std::ostream& log);

/// Entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace ncd::cli
