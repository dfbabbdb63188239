#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "contalign/raster.hpp"

namespace contalign::io {

// 8-bit grayscale on disk; intensity v maps to round(255 v) and back as b/255.
std::uint8_t to_byte(double v);

ContourImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const ContourImage& img);

ContourImage read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const ContourImage& img);

/// Packed RGB pixels, row-major, 3 bytes per pixel.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
    std::array<std::uint8_t, 3> at(int x, int y) const {
        const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
        return {pixels[i], pixels[i + 1], pixels[i + 2]};
    }
};

void write_png_rgb(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_png_rgb(const std::filesystem::path& path);

/// Dispatches on the extension (.pgm or .png).
ContourImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ContourImage& img);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace contalign::io
