#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "contalign/raster.hpp"
#include "contalign/warp.hpp"

namespace contalign {

/// Named-stream generator: std::mt19937_64 seeded with
/// splitmix64(seed ^ fnv1a64(stream)). Uniform doubles take the top 53 bits.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view stream);

    std::uint64_t next();
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    int uniform_int(int lo, int hi);       // inclusive, unbiased
    bool bernoulli(double p);

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

enum class ShapeKind { ellipse, rectangle, polygon, stroke };
std::string to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

struct ContourParams {
    int width = 128;
    int height = 128;
    double cx = 64.0;
    double cy = 64.0;
    double rx = 30.0;     // ellipse/polygon radius along x
    double ry = 20.0;
    double angle = 0.0;   // radians, ellipse rotation
    int rect_w = 60;      // rectangle size in pixels
    int rect_h = 40;
    int sides = 6;        // polygon vertex count
};

/// One-pixel-wide 8-connected contour; polygon vertices and stroke shape
/// are drawn from `seed`. Throws InvalidConfig when the shape leaves the
/// canvas minus a 16-pixel margin.
ContourImage gen_contour(ShapeKind kind, const ContourParams& params, std::uint64_t seed);

/// A randomly chosen closed synthetic contour (ellipse, rectangle or polygon)
/// of moderate size, used as a digit stand-in.
ContourImage random_contour(std::uint64_t seed, int width = 128, int height = 128);

/// IDX3 reader: digits upsampled to 128x128 (bilinear), binarized at 0.5 and
/// reduced to their boundary (foreground pixels with a background 4-neighbour).
std::vector<ContourImage> load_mnist_contours(const std::filesystem::path& path, std::size_t limit = 0);
std::vector<ContourImage> parse_mnist_contours(const std::string& bytes, std::size_t limit = 0);

/// Magnitude that brings the mean initial asymmetric Chamfer score of the
/// default synthetic pairs near 10 px.
inline constexpr double kCalibratedMagnitude = 32.0;

struct PairSpec {
    std::uint64_t seed = 0;
    double magnitude = kCalibratedMagnitude;  // max control offset in pixels
    double density = 0.05;     // salt-noise probability per background pixel
    int occlusions_min = 1;
    int occlusions_max = 3;
    int box_min = 8;           // occlusion box side range in pixels
    int box_max = 24;
    int width = 128;
    int height = 128;
    int warp_grid = 4;
    double threshold = 0.35;   // binarization of the warped clean source

    void validate() const;
};

void to_json(nlohmann::json& j, const PairSpec& s);
void from_json(const nlohmann::json& j, PairSpec& s);

struct SimPair {
    ContourImage source;        // corrupted
    ContourImage target;
    ContourImage clean_source;  // warped, uncorrupted
    TpsParams gt_warp;
    int warp_grid = 0;

    /// Field with clean_source = binarize(apply_warp(target, gt_field())).
    WarpField gt_field() const;
};

/// Offsets i.i.d. uniform in [-magnitude, magnitude] per axis, identity affine.
TpsParams random_tps(std::uint64_t seed, double magnitude, const TpsControlGrid& grid);

/// Occlusion boxes erase contour pixels (each box centred on a random contour
/// pixel), then salt noise turns background pixels on with probability density.
ContourImage corrupt(const ContourImage& img, const PairSpec& spec, std::uint64_t seed);

/// Throws DegeneratePair when the warped contour leaves the canvas entirely.
SimPair make_pair(const ContourImage& base, const PairSpec& spec);

/// Asymmetric Chamfer score of clean_source against target.
double initial_score(const SimPair& pair);

struct CalibrationResult {
    double magnitude = 0.0;
    double mean_score = 0.0;
};

/// Bisects the warp magnitude so the mean initial score over `pairs` seeded
/// synthetic pairs approaches `target_score`.
CalibrationResult calibrate_magnitude(double target_score, int pairs, std::uint64_t seed,
                                      PairSpec spec = {}, int iterations = 12);

}  // namespace contalign
