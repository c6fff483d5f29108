#include "psmt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "psmt/error.hpp"

namespace psmt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'S', 'M', 'T', 'C', 'K', 'P', 'T'};

}  // namespace

const std::vector<double>& Checkpoint::array(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw DataError("checkpoint has no entry '" + name + "'");
    return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header = ckpt.header;
    header["version"] = kCheckpointVersion;
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, values] : ckpt.arrays) {
        entries.push_back({{"name", name}, {"offset", offset}, {"size", values.size()}});
        offset += values.size();
    }
    header["entries"] = entries;
    const std::string text = header.dump();
    const std::uint64_t len = text.size();

    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof kMagic);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, values] : ckpt.arrays) {
            out.write(reinterpret_cast<const char*>(values.data()),
                      static_cast<std::streamsize>(values.size() * sizeof(double)));
        }
        if (!out) throw DataError("short write to checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw DataError("not a checkpoint file: " + path.string());
    }
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    Checkpoint ckpt;
    try {
        ckpt.header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    if (ckpt.header.value("version", std::string{}) != kCheckpointVersion) {
        throw DataError("checkpoint " + path.string() + " is not version " + kCheckpointVersion);
    }
    const auto base = in.tellg();
    for (const auto& e : ckpt.header.at("entries")) {
        const auto offset = e.at("offset").get<std::uint64_t>();
        const auto size = e.at("size").get<std::uint64_t>();
        std::vector<double> values(size);
        in.seekg(base + static_cast<std::streamoff>(offset * sizeof(double)));
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(size * sizeof(double)));
        if (!in) throw DataError("truncated checkpoint " + path.string());
        ckpt.arrays.emplace(e.at("name").get<std::string>(), std::move(values));
    }
    return ckpt;
}

}  // namespace psmt
