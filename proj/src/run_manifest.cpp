#include "icc/run_manifest.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <vector>

#include "icc/error.hpp"
#include "icc/hash.hpp"

namespace icc {

namespace fs = std::filesystem;

nlohmann::json to_json(const RunManifest& m) {
    return {{"command", m.command},
            {"config", m.config},
            {"seeds", m.seeds},
            {"input_hashes", m.input_hashes},
            {"tool_version", m.tool_version},
            {"timestamp", m.timestamp}};
}

std::string hash_input(const fs::path& path) {
    if (!fs::is_directory(path)) return sha256_file(path);
    std::vector<std::string> lines;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), path).generic_string();
        if (rel == "run_manifest.json") continue;
        lines.push_back(rel + "  " + sha256_file(e.path()) + "\n");
    }
    std::sort(lines.begin(), lines.end());
    std::string all;
    for (const auto& l : lines) all += l;
    return sha256_hex(all);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_run_manifest(const RunManifest& m, const fs::path& dir) {
    fs::create_directories(dir);
    const auto path = dir / "run_manifest.json";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError(path.string() + ": cannot open for writing");
    f << to_json(m).dump(2) << "\n";
}

}  // namespace icc
