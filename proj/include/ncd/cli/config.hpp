#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <json.hpp>
#include <span>
#include <string>

namespace ncd::cli {

using Json = nlohmann::ordered_json;

/// Every recognized key with its default. Keys absent here are rejected.
Json default_config();

/// Deep-merges `overlay` into `base`. Unknown keys throw ConfigError.
void merge_config(Json& base, const Json& overlay, const std::string& where = "");

/// Applies one "a.b.c=value" override. The value is read as JSON when it
/// parses, otherwise as a string.
void apply_override(Json& config, const std::string& assignment);

/// defaults < file < overrides
Json resolve_config(const std::filesystem::path& file, std::span<const std::string> overrides);

/// Value at a dotted path; ConfigError naming the key when missing or of
/// the wrong type.
template <typename T>
T get(const Json& config, const std::string& dotted);

std::optional<double> get_optional_double(const Json& config, const std::string& dotted);

/// Seed of a named random stream: the first 8 bytes of
/// sha256("<seed>/<label>") read big-endian.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& label);

}  // namespace ncd::cli
