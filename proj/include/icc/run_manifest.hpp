#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

namespace icc {

inline constexpr const char* kToolVersion = "0.1.0";

/// Reproducibility record written into every output directory.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    std::map<std::string, std::string> input_hashes;  // path -> sha256
    std::string tool_version = kToolVersion;
    std::string timestamp;                             // UTC, ISO 8601
};

nlohmann::json to_json(const RunManifest& m);

/// SHA-256 of a file, or of the sorted "relative path  digest" listing of a directory tree.
std::string hash_input(const std::filesystem::path& path);

std::string utc_timestamp();

/// Writes <dir>/run_manifest.json, replacing any earlier one.
void write_run_manifest(const RunManifest& m, const std::filesystem::path& dir);

}  // namespace icc
