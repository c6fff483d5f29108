#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace psmt {

inline constexpr const char* kCheckpointVersion = "psmt-ckpt-1";

// Single-file container: the 8-byte magic "PSMTCKPT", a little-endian u64
// header length, a JSON header, then the named double arrays back to back
// (little-endian). The header lists every array as {name, offset, size}.
struct Checkpoint {
    nlohmann::json header = nlohmann::json::object();
    std::map<std::string, std::vector<double>> arrays;

    [[nodiscard]] const std::vector<double>& array(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace psmt
