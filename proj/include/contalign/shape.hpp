#pragma once

#include <cstdint>
#include <vector>

#include "contalign/raster.hpp"
#include "contalign/warp.hpp"

namespace contalign {

/// Gradient magnitude below which a pixel carries no orientation.
inline constexpr double kGradientEpsilon = 1e-6;

/// Per-pixel unit vectors with a validity mask; invalid entries are (0,0)
/// and must not enter any arithmetic.
struct VectorGrid {
    int width = 0;
    int height = 0;
    std::vector<Vec2> v;
    std::vector<std::uint8_t> valid;
    std::vector<double> magnitude;  // pre-normalization gradient norm

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(x);
    }
    std::size_t valid_count() const;
};

/// Raw central-difference gradient (one-sided at the borders).
Vec2 central_gradient(std::span<const double> img, int width, int height, int x, int y);

VectorGrid unit_gradients(const ScalarGrid& img);
VectorGrid unit_gradients(const ContourImage& img);
VectorGrid unit_gradients(std::span<const double> img, int width, int height);

/// sqrt(max(0, 1 - u.v)) for unit vectors; in [0, sqrt 2].
/// Throws InvalidInput when either argument is not unit length (1e-9).
double grad_distance(Vec2 u, Vec2 v);

/// Largest value the gradient distance can take.
inline const double kMaxGradDistance = 1.4142135623730951;

/// Per-pixel result of the windowed max: which target pixel won (or -1 when
/// the window held no candidate or the source gradient was invalid).
struct ShapeTermDetail {
    double value = 0.0;      // normalized term
    double mass = 0.0;       // N = sum of support intensities
    std::vector<double> per_pixel_max;     // M(x) for every support pixel (0 elsewhere)
    std::vector<std::int64_t> argmax;      // winning candidate index, or -1
};

/// (1/N) sum_x support(x) * M(x), with
///   M(x) = max over candidates y in the window centred at x of d(x, y),
/// where candidates are pixels with tgt_support(y) > 0 and d is the gradient
/// distance, or sqrt 2 when either gradient is invalid. Empty windows give
/// sqrt 2. Ties go to the lowest row-major index. Throws EmptyShape for N = 0.
ShapeTermDetail local_shape_detail(const VectorGrid& src_grads, const VectorGrid& tgt_grads,
                                   std::span<const double> support, std::span<const double> tgt_support,
                                   int window);

double local_shape_term(const VectorGrid& src_grads, const VectorGrid& tgt_grads,
                        const ContourImage& support, const ContourImage& tgt_support, int window);

}  // namespace contalign
