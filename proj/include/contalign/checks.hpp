#pragma once

// Oracle-backed property checks shared by `contalign selftest` and the
// acceptance suite. Each returns whether every case passed plus a one-line
// summary.

#include <cstdint>
#include <string>
#include <vector>

#include "contalign/raster.hpp"

namespace contalign::checks {

struct Result {
    bool passed = true;
    std::string detail;
};

/// Binary image with each pixel on with probability `density` (at least one on).
ContourImage random_binary(int width, int height, double density, std::uint64_t seed);

/// Filled ellipse with a soft edge (values in [0,1]) centred at (cx, cy).
ContourImage smooth_blob(int width, int height, double cx, double cy, double rx, double ry, double edge = 1.5);

/// min(1, distance to (cx, cy) / scale).
ContourImage radial_ramp(int width, int height, double cx, double cy, double scale);

/// edt against edt_bruteforce, squared distances compared exactly.
Result edt_exactness(int count, int size, std::uint64_t seed);

/// min(f + g) <= min f + max g over random vectors of length 1..max_len.
Result min_max_inequality(int count, int max_len, std::uint64_t seed);

/// chamfer_upperbound (global window, identity warps) >= chamfer_shape_direct.
Result upperbound_dominance(int count, int min_size, int max_size, const std::vector<double>& alphas,
                            std::uint64_t seed);

/// dt[S(theta)] . T versus dt[S] . T(theta^-1) for integer translations:
/// identical multisets of squared distances and identical sums.
Result reparam_translation(int count, std::uint64_t seed);

/// Same identity for random small affines on smooth blobs, within `tol` relative.
Result reparam_affine(int count, double tol, std::uint64_t seed);

/// Analytic loss_grad versus central differences at regular parameter points
/// (no bilinear cell, support, validity or argmax change within +-h).
Result gradient_check(int affine_points, int tps_points, double h, double tol, std::uint64_t seed);

}  // namespace contalign::checks
