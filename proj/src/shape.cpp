#include "contalign/shape.hpp"

#include <algorithm>
#include <cmath>

#include "contalign/errors.hpp"

namespace contalign {

std::size_t VectorGrid::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

Vec2 central_gradient(std::span<const double> img, int width, int height, int x, int y) {
    auto at = [&](int xx, int yy) { return img[static_cast<std::size_t>(yy) * width + xx]; };
    double gx = 0.0;
    double gy = 0.0;
    if (width > 1) {
        if (x == 0) gx = at(1, y) - at(0, y);
        else if (x == width - 1) gx = at(x, y) - at(x - 1, y);
        else gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
    }
    if (height > 1) {
        if (y == 0) gy = at(x, 1) - at(x, 0);
        else if (y == height - 1) gy = at(x, y) - at(x, y - 1);
        else gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
    }
    return {gx, gy};
}

VectorGrid unit_gradients(std::span<const double> img, int width, int height) {
    VectorGrid g;
    g.width = width;
    g.height = height;
    g.v.assign(img.size(), Vec2{});
    g.valid.assign(img.size(), 0);
    g.magnitude.assign(img.size(), 0.0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec2 d = central_gradient(img, width, height, x, y);
            const double m = std::hypot(d.x, d.y);
            const std::size_t i = g.index(x, y);
            g.magnitude[i] = m;
            if (m >= kGradientEpsilon) {
                g.v[i] = {d.x / m, d.y / m};
                g.valid[i] = 1;
            }
        }
    }
    return g;
}

VectorGrid unit_gradients(const ScalarGrid& img) {
    return unit_gradients(img.data(), img.width(), img.height());
}

VectorGrid unit_gradients(const ContourImage& img) {
    return unit_gradients(img.data(), img.width(), img.height());
}

double grad_distance(Vec2 u, Vec2 v) {
    if (std::abs(std::hypot(u.x, u.y) - 1.0) > 1e-9 || std::abs(std::hypot(v.x, v.y) - 1.0) > 1e-9) {
        throw InvalidInput("grad_distance expects unit vectors");
    }
    return std::sqrt(std::max(0.0, 1.0 - (u.x * v.x + u.y * v.y)));
}

ShapeTermDetail local_shape_detail(const VectorGrid& src, const VectorGrid& tgt,
                                   std::span<const double> support, std::span<const double> tgt_support,
                                   int window) {
    if (window < 1 || window % 2 == 0) throw InvalidConfig("shape window must be odd and >= 1");
    if (src.width != tgt.width || src.height != tgt.height || support.size() != src.v.size() ||
        tgt_support.size() != tgt.v.size()) {
        throw InvalidInput("local_shape_term: dimension mismatch");
    }
    const int w = src.width;
    const int h = src.height;
    const int r = window / 2;
    ShapeTermDetail out;
    out.per_pixel_max.assign(support.size(), 0.0);
    out.argmax.assign(support.size(), -1);
    double weighted = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = src.index(x, y);
            const double s = support[i];
            if (s <= 0.0) continue;
            out.mass += s;
            double best = -1.0;
            std::int64_t best_idx = -1;
            const bool src_ok = src.valid[i] != 0;
            const Vec2 u = src.v[i];
            const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
            const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
            for (int yy = y0; yy <= y1; ++yy) {
                for (int xx = x0; xx <= x1; ++xx) {
                    const std::size_t j = tgt.index(xx, yy);
                    if (tgt_support[j] <= 0.0) continue;
                    double d = kMaxGradDistance;
                    if (src_ok && tgt.valid[j]) {
                        const Vec2 v = tgt.v[j];
                        d = std::sqrt(std::max(0.0, 1.0 - (u.x * v.x + u.y * v.y)));
                    }
                    if (d > best) {
                        best = d;
                        best_idx = static_cast<std::int64_t>(j);
                    }
                }
            }
            if (best_idx < 0) best = kMaxGradDistance;
            // Only pairs of valid gradients carry a derivative.
            if (!src_ok || best_idx < 0 || !tgt.valid[static_cast<std::size_t>(best_idx)]) best_idx = -1;
            out.per_pixel_max[i] = best;
            out.argmax[i] = best_idx;
            weighted += s * best;
        }
    }
    if (out.mass <= 0.0) throw EmptyShape("local shape term: support image is empty");
    out.value = weighted / out.mass;
    return out;
}

double local_shape_term(const VectorGrid& src_grads, const VectorGrid& tgt_grads,
                        const ContourImage& support, const ContourImage& tgt_support, int window) {
    return local_shape_detail(src_grads, tgt_grads, support.data(), tgt_support.data(), window).value;
}

}  // namespace contalign
