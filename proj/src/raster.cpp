#include "contalign/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "contalign/errors.hpp"

namespace contalign {

namespace {

void check_dims(int width, int height, std::size_t n, int min_side) {
    if (width < min_side || height < min_side) {
        throw InvalidInput("raster must be at least " + std::to_string(min_side) + "x" +
                           std::to_string(min_side) + ", got " + std::to_string(width) + "x" +
                           std::to_string(height));
    }
    if (n != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw InvalidInput("raster data size does not match " + std::to_string(width) + "x" +
                           std::to_string(height));
    }
}

}  // namespace

ScalarGrid::ScalarGrid(int width, int height, double fill)
    : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InvalidInput("negative grid dimensions");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

ScalarGrid::ScalarGrid(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height, data_.size(), 0);
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw InvalidInput("non-finite value at index " + std::to_string(i));
        }
    }
}

ContourImage::ContourImage(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height, data_.size(), 2);
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const double v = data_[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw InvalidInput("contour value outside [0,1] at index " + std::to_string(i));
        }
    }
}

ContourImage::ContourImage(const ScalarGrid& grid)
    : ContourImage(grid.width(), grid.height(),
                   std::vector<double>(grid.data().begin(), grid.data().end())) {}

ContourImage ContourImage::zeros(int width, int height) {
    return ContourImage(width, height,
                        std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) *
                                                static_cast<std::size_t>(std::max(height, 0)),
                                            0.0));
}

ScalarGrid ContourImage::to_grid() const { return ScalarGrid(width_, height_, data_); }

double ContourImage::mass() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

std::size_t ContourImage::count_above(double threshold) const {
    return static_cast<std::size_t>(
        std::count_if(data_.begin(), data_.end(), [&](double v) { return v > threshold; }));
}

double ContourImage::max_value() const {
    return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

ContourImage binarize(const ScalarGrid& img, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw InvalidInput("binarize threshold must lie in (0,1)");
    }
    std::vector<double> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = img[i];
        if (!std::isfinite(v)) throw InvalidInput("non-finite input to binarize");
        out[i] = v > threshold ? 1.0 : 0.0;
    }
    return ContourImage(img.width(), img.height(), std::move(out));
}

ContourImage binarize(const ContourImage& img, double threshold) {
    return binarize(img.to_grid(), threshold);
}

ContourImage downsample_max(const ContourImage& img) {
    const int w = (img.width() + 1) / 2;
    const int h = (img.height() + 1) / 2;
    if (w < 2 || h < 2) throw InvalidInput("downsample_max: image too small to halve (needs 3x3)");
    std::vector<double> out(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double m = 0.0;
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const int sx = 2 * x + dx;
                    const int sy = 2 * y + dy;
                    if (sx < img.width() && sy < img.height()) m = std::max(m, img.at(sx, sy));
                }
            }
            out[static_cast<std::size_t>(y) * w + x] = m;
        }
    }
    return ContourImage(w, h, std::move(out));
}

int max_pyramid_levels(int width, int height) {
    int k = 0;
    while (width >= 4 && height >= 4) {
        ++k;
        width = (width + 1) / 2;
        height = (height + 1) / 2;
    }
    return k;
}

Pyramid build_pyramid(const ContourImage& img, int levels) {
    if (levels < 1) throw InvalidConfig("pyramid needs at least one level");
    if (levels > max_pyramid_levels(img.width(), img.height())) {
        throw InvalidConfig("pyramid with " + std::to_string(levels) + " levels is too deep for a " +
                            std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                            " image (coarsest level must stay at least 4x4)");
    }
    Pyramid p;
    p.levels.reserve(static_cast<std::size_t>(levels));
    p.levels.push_back(img);
    for (int i = 1; i < levels; ++i) p.levels.push_back(downsample_max(p.levels.back()));
    return p;
}

}  // namespace contalign
