#pragma once

// Raster types shared by every module. Coordinates are pixel-center based
// with the origin at pixel (0,0); x indexes columns, y indexes rows, and
// storage is row-major (index = y * width + x).

#include <cstddef>
#include <span>
#include <vector>

namespace contalign {

/// Mutable row-major buffer of finite doubles (intermediate results).
class ScalarGrid {
public:
    ScalarGrid() = default;
    ScalarGrid(int width, int height, double fill = 0.0);
    /// Throws InvalidInput on size mismatch or non-finite values.
    ScalarGrid(int width, int height, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }

    double at(int x, int y) const { return data_[index(x, y)]; }
    double& at(int x, int y) { return data_[index(x, y)]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool in_bounds(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    friend bool operator==(const ScalarGrid&, const ScalarGrid&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Immutable contour raster: values in [0,1], at least 2x2.
class ContourImage {
public:
    ContourImage() = default;
    /// Validates the invariants; throws InvalidInput on violation.
    ContourImage(int width, int height, std::vector<double> data);
    explicit ContourImage(const ScalarGrid& grid);

    static ContourImage zeros(int width, int height);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    double at(int x, int y) const { return data_[index(x, y)]; }
    double operator[](std::size_t i) const { return data_[i]; }
    std::span<const double> data() const noexcept { return data_; }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    ScalarGrid to_grid() const;
    /// Sum of intensities (equals the nonzero count on binary images).
    double mass() const;
    std::size_t count_above(double threshold) const;
    double max_value() const;
    bool same_shape(const ContourImage& o) const noexcept {
        return width_ == o.width_ && height_ == o.height_;
    }

    friend bool operator==(const ContourImage&, const ContourImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

struct Pyramid {
    std::vector<ContourImage> levels;  // index 0 = finest
    int count() const noexcept { return static_cast<int>(levels.size()); }
};

ContourImage binarize(const ScalarGrid& img, double threshold);
ContourImage binarize(const ContourImage& img, double threshold);

/// 2x2 max pooling with ceil halving; partial border blocks use what exists.
ContourImage downsample_max(const ContourImage& img);

/// K levels of max pooling. The coarsest level must stay at least 4x4.
Pyramid build_pyramid(const ContourImage& img, int levels);

/// Largest level count whose coarsest level is still at least 4x4.
int max_pyramid_levels(int width, int height);

}  // namespace contalign
