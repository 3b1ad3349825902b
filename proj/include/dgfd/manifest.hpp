#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "json.hpp"

namespace dgfd {

inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one command invocation: the effective config, the root seed,
/// and a content hash for every file read or written.
struct RunManifest {
    std::string command;
    std::string tool_version = kToolVersion;
    uint64_t seed = 0;
    nlohmann::json config;                        // effective (post-precedence) settings
    std::map<std::string, std::string> inputs;    // path -> content hash
    std::map<std::string, std::string> outputs;   // path -> content hash
};

/// FNV-1a over the file bytes, as 16 hex digits. Fails if unreadable.
std::string hash_file(const std::string& path);

void add_input(RunManifest& m, const std::string& path);
void add_output(RunManifest& m, const std::string& path);

void write_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

/// Re-hashes every artifact listed in the manifest found next to `path`
/// (its directory's manifest.json) and fails on the first mismatch. Missing
/// manifest is accepted; a missing or altered artifact is not.
void verify_against_manifest(const std::string& path);

}  // namespace dgfd
