#include "dgfd/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dgfd/common.hpp"

namespace dgfd {

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(cat("cannot read ", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

void add_input(RunManifest& m, const std::string& path) { m.inputs[path] = hash_file(path); }

void add_output(RunManifest& m, const std::string& path) {
    // keyed by file name: outputs live next to their manifest
    m.outputs[std::filesystem::path(path).filename().string()] = hash_file(path);
}

void write_manifest(const RunManifest& m, const std::string& path) {
    nlohmann::json j{{"command", m.command}, {"tool_version", m.tool_version},
                     {"seed", m.seed},       {"config", m.config},
                     {"inputs", m.inputs},   {"outputs", m.outputs}};
    std::ofstream out(path);
    if (!out) fail(cat("cannot write ", path));
    out << j.dump(2) << '\n';
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(cat("cannot read ", path));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        fail(cat(path, ": ", ex.what()));
    }
    RunManifest m;
    m.command = j.value("command", "");
    m.tool_version = j.value("tool_version", "");
    m.seed = j.value("seed", uint64_t{0});
    m.config = j.value("config", nlohmann::json::object());
    m.inputs = j.value("inputs", std::map<std::string, std::string>{});
    m.outputs = j.value("outputs", std::map<std::string, std::string>{});
    return m;
}

void verify_against_manifest(const std::string& path) {
    if (!std::filesystem::exists(path)) fail(cat("missing artifact ", path));
    std::filesystem::path p(path);
    std::filesystem::path mf = p.parent_path() / "manifest.json";
    if (!std::filesystem::exists(mf)) return;  // unmanifested inputs are allowed
    RunManifest m = load_manifest(mf.string());
    auto it = m.outputs.find(p.filename().string());
    if (it == m.outputs.end()) return;
    if (hash_file(path) != it->second)
        fail(cat(path, ": content does not match the hash recorded in ", mf.string()));
}

}  // namespace dgfd
