#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "contalign/raster.hpp"

namespace contalign {

/// Euclidean distance (pixels) from every pixel to the nearest contour pixel.
/// Squared distances are integers and are kept alongside for exact checks.
class DistanceField {
public:
    DistanceField() = default;
    DistanceField(int width, int height, std::vector<std::int64_t> squared);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return dist_.size(); }
    double at(int x, int y) const { return dist_[index(x, y)]; }
    double operator[](std::size_t i) const { return dist_[i]; }
    std::int64_t squared_at(int x, int y) const { return sq_[index(x, y)]; }
    std::span<const double> data() const noexcept { return dist_; }
    std::span<const std::int64_t> squared() const noexcept { return sq_; }
    double max_value() const;

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }
    friend bool operator==(const DistanceField& a, const DistanceField& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.sq_ == b.sq_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::int64_t> sq_;
    std::vector<double> dist_;
};

/// Pixels with value above this count as contour pixels for distance purposes.
inline constexpr double kContourThreshold = 0.5;

/// Exact EDT by two separable passes (column scans, then the lower envelope of
/// parabolas along rows). Throws EmptyShape when no pixel exceeds 0.5.
DistanceField edt(const ContourImage& img);

/// O(N * M) reference: every pixel against every contour pixel.
DistanceField edt_bruteforce(const ContourImage& img);

/// Writes the field as an 8-bit PGM scaled by 255 / max and a sidecar
/// `<path>.scale.txt` holding the pixels-per-gray-level factor.
void dump_distance_pgm(const DistanceField& field, const std::filesystem::path& path);

}  // namespace contalign
