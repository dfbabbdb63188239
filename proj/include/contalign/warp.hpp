#pragma once

// Transform families and dense backward warp fields.
//
// A WarpField stores, for every output pixel p, the source coordinate q(p)
// that p samples from (backward mapping). Coordinates are pixel centers with
// the origin at pixel (0,0).

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "contalign/raster.hpp"

namespace contalign {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// q = A p + t with layout (a11, a12, tx, a21, a22, ty).
struct AffineParams {
    std::array<double, 6> p{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

    static AffineParams identity() { return {}; }
    static AffineParams translation(double tx, double ty) {
        return AffineParams{{1.0, 0.0, tx, 0.0, 1.0, ty}};
    }
    double det() const noexcept { return p[0] * p[4] - p[1] * p[3]; }
    Vec2 apply(Vec2 v) const noexcept {
        return {p[0] * v.x + p[1] * v.y + p[2], p[3] * v.x + p[4] * v.y + p[5]};
    }
    /// Throws InvalidInput if non-finite or |det| <= 1e-8.
    void validate() const;
    friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

/// Throws SingularTransform for near-singular matrices.
AffineParams affine_inverse(const AffineParams& a);

/// g x g control lattice spanning [0,w-1] x [0,h-1] and the factorized TPS
/// system that maps control displacements to kernel and affine coefficients.
class TpsControlGrid {
public:
    TpsControlGrid(int g, int width, int height);

    int g() const noexcept { return g_; }
    int count() const noexcept { return g_ * g_; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    const std::vector<Vec2>& points() const noexcept { return points_; }

    /// Interpolation weights b_j(p): displacement(p) = sum_j b_j(p) v_j.
    void weights_at(Vec2 p, std::span<double> out) const;
    /// Row i holds weights_at(pts[i]).
    Eigen::MatrixXd basis(std::span<const Vec2> pts) const;
    /// Row i holds the kernel values and linear terms at pts[i]; basis = rows * coefficients.
    RowMatrix kernel_rows(std::span<const Vec2> pts) const;
    const Eigen::MatrixXd& coefficients() const noexcept { return coef_; }
    /// Max |sum_j b_j(c_i) - delta_ij| over control points.
    double interpolation_residual() const;

private:
    double kernel(Vec2 a, Vec2 b) const noexcept;
    template <class Row>
    void kernel_row(Vec2 p, Row&& row) const;

    int g_;
    int width_;
    int height_;
    double scale_;  // kernel coordinates are divided by this for conditioning
    std::vector<Vec2> points_;
    Eigen::MatrixXd coef_;  // (n+3) x n
};

/// Per-control-point displacement offsets plus a global affine part.
struct TpsParams {
    std::vector<Vec2> offsets;
    AffineParams affine;

    static TpsParams identity(const TpsControlGrid& grid) {
        return TpsParams{std::vector<Vec2>(static_cast<std::size_t>(grid.count())), {}};
    }
};

class WarpField {
public:
    WarpField() = default;
    WarpField(int width, int height, std::vector<Vec2> coords);
    static WarpField identity(int width, int height);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return coords_.size(); }
    Vec2 at(int x, int y) const { return coords_[index(x, y)]; }
    Vec2 operator[](std::size_t i) const { return coords_[i]; }
    Vec2 displacement(int x, int y) const {
        const Vec2 q = at(x, y);
        return {q.x - x, q.y - y};
    }
    std::span<const Vec2> coords() const noexcept { return coords_; }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }
    bool is_identity() const;
    /// Mean Euclidean displacement magnitude.
    double mean_displacement() const;
    /// Displacement sampled bilinearly at a continuous point, clamped to the domain.
    Vec2 displacement_at(Vec2 q) const;

    friend bool operator==(const WarpField&, const WarpField&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Vec2> coords_;
};

WarpField affine_field(const AffineParams& params, int width, int height);
WarpField tps_field(const TpsParams& params, const TpsControlGrid& grid, int width, int height);

/// Bilinear sample with zero padding outside the domain.
double sample_bilinear(const ScalarGrid& img, double x, double y);
double sample_bilinear(const ContourImage& img, double x, double y);

ScalarGrid apply_warp(const ScalarGrid& img, const WarpField& field);
ContourImage apply_warp(const ContourImage& img, const WarpField& field);

/// Doubles the resolution: d'(p) = 2 d(p / 2).
WarpField upsample_field(const WarpField& field);
/// Crops (or edge-extends) a field to the given size without changing coordinates.
WarpField fit_field(const WarpField& field, int width, int height);

/// combined(p) = early(late(p)); warping by `early` then by `late` equals
/// warping once by the result.
WarpField compose(const WarpField& late, const WarpField& early);

/// Fixed-point inverse r with field(r(p)) = p; accurate for small smooth warps.
WarpField invert_field(const WarpField& field, int iterations = 50);

/// Little-endian "WFLD", u32 width, u32 height, then f64 (x, y) row-major.
std::string encode_warp_field(const WarpField& field);
WarpField decode_warp_field(const std::string& bytes);
void save_warp_field(const std::filesystem::path& path, const WarpField& field);
WarpField load_warp_field(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Parametric transforms as used by the optimizer.

enum class Family { affine, tps };

std::string family_name(Family f, int grid);

/// A transform family evaluated at a fixed set of points X_i:
///   q_i = A X_i + t + sum_j b_j(X_i) v_j
/// Parameters: affine (a11,a12,tx,a21,a22,ty), or for TPS the 2n offsets
/// (v0x, v0y, v1x, ...) followed by the 6 affine values.
class ParametricWarp {
public:
    static ParametricWarp affine(int width, int height);
    static ParametricWarp tps(int g, int width, int height);

    Family family() const noexcept { return family_; }
    int grid() const noexcept { return grid_ ? grid_->g() : 0; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int param_count() const noexcept;
    std::vector<double> identity_params() const;
    const TpsControlGrid* control_grid() const noexcept { return grid_.get(); }

    /// Fixes the evaluation points (e.g. an incoming field's coordinates).
    /// With stride > 1 the points must form a width x height raster; the TPS
    /// part is then evaluated exactly on every stride-th row and column (plus
    /// the last ones) and bilinearly interpolated in between.
    void bind(std::span<const Vec2> points, int stride = 1);
    std::size_t bound_count() const noexcept { return points_.size(); }

    void evaluate(std::span<const double> params, std::vector<Vec2>& out) const;
    /// grad += d(sum_i <dq_i, q_i>)/d(params).
    void backprop(std::span<const Vec2> dq, std::span<double> grad) const;
    /// Descent direction for a raw gradient with the affine block rescaled to
    /// centered pixel units.
    std::vector<double> precondition(std::span<const double> grad) const;

    AffineParams affine_part(std::span<const double> params) const;
    TpsParams tps_params(std::span<const double> params) const;

private:
    ParametricWarp(Family f, int width, int height);

    Family family_;
    int width_;
    int height_;
    std::shared_ptr<const TpsControlGrid> grid_;
    std::vector<Vec2> points_;
    RowMatrix rows_;  // sub-lattice points x (n+3) kernel rows (TPS only)
    // Bilinear interpolation from sub-lattice rows to every bound point.
    int stride_ = 1;
    std::vector<std::array<std::int32_t, 4>> interp_idx_;
    std::vector<std::array<double, 4>> interp_w_;
};

}  // namespace contalign
