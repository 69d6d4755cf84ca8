#pragma once

#include <filesystem>
#include <string>

#include "expert/config.hpp"

namespace expert::harness {

// JSON <-> RunConfig. Parsing is strict: unknown keys and type mismatches
// throw ConfigError naming the offending path; absent keys keep their
// defaults. serialize(parse(text)) round-trips every field exactly.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& config);

}  // namespace expert::harness
