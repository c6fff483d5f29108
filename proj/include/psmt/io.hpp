#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace psmt::io {

// 8-bit PNG pixels, interleaved, row-major.
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;
};

// Throws DataError naming the path on any libpng failure.
PngImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngImage& image);

std::string read_text(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void write_text(const std::filesystem::path& path, std::string_view text);

// Hex SHA-1 of "blob <size>\0<bytes>", the way git names file contents.
std::string content_hash(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace psmt::io
