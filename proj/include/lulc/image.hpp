#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lulc/error.hpp"

namespace lulc {

/// 8-bit RGB raster, row-major interleaved.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    ImageBuffer() = default;
    ImageBuffer(int w, int h)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

/// Binary PPM (P6, maxval 255). encode/decode work on in-memory bytes so
/// round trips can be checked bit-exactly.
std::string encode_ppm(const ImageBuffer& img);
ImageBuffer decode_ppm(const std::string& bytes);

ImageBuffer read_ppm(const std::filesystem::path& path);
void write_ppm(const ImageBuffer& img, const std::filesystem::path& path);

/// Writes via a temporary file in the same directory, then renames.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace lulc
