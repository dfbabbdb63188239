#include "contalign/warp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "contalign/errors.hpp"
#include "contalign/image_io.hpp"

namespace contalign {

// ---------------------------------------------------------------------------
// Affine

void AffineParams::validate() const {
    for (double v : p) {
        if (!std::isfinite(v)) throw InvalidInput("affine parameters must be finite");
    }
    if (std::abs(det()) <= 1e-8) throw InvalidInput("affine matrix is not invertible");
}

AffineParams affine_inverse(const AffineParams& a) {
    for (double v : a.p) {
        if (!std::isfinite(v)) throw InvalidInput("affine parameters must be finite");
    }
    const double d = a.det();
    if (std::abs(d) <= 1e-8) throw SingularTransform("affine matrix is singular (|det| <= 1e-8)");
    const double i11 = a.p[4] / d;
    const double i12 = -a.p[1] / d;
    const double i21 = -a.p[3] / d;
    const double i22 = a.p[0] / d;
    const double tx = -(i11 * a.p[2] + i12 * a.p[5]);
    const double ty = -(i21 * a.p[2] + i22 * a.p[5]);
    return AffineParams{{i11, i12, tx, i21, i22, ty}};
}

// ---------------------------------------------------------------------------
// Thin-plate spline lattice

TpsControlGrid::TpsControlGrid(int g, int width, int height)
    : g_(g), width_(width), height_(height) {
    if (g < 2) throw InvalidConfig("TPS control grid needs g >= 2");
    if (width < 2 || height < 2) throw InvalidConfig("TPS domain must be at least 2x2");
    scale_ = std::max(width - 1, height - 1);
    const int n = g * g;
    points_.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < g; ++j) {
        for (int i = 0; i < g; ++i) {
            points_.push_back({i * (width - 1.0) / (g - 1), j * (height - 1.0) / (g - 1)});
        }
    }

    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) system(a, b) = kernel(points_[a], points_[b]);
        system(a, n) = 1.0;
        system(a, n + 1) = points_[a].x / scale_;
        system(a, n + 2) = points_[a].y / scale_;
        system(n, a) = 1.0;
        system(n + 1, a) = points_[a].x / scale_;
        system(n + 2, a) = points_[a].y / scale_;
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, n);
    rhs.topRows(n).setIdentity();
    coef_ = system.fullPivLu().solve(rhs);
}

double TpsControlGrid::kernel(Vec2 a, Vec2 b) const noexcept {
    const double dx = (a.x - b.x) / scale_;
    const double dy = (a.y - b.y) / scale_;
    const double r2 = dx * dx + dy * dy;
    return r2 > 0.0 ? r2 * std::log(r2) : 0.0;
}

template <class Row>
void TpsControlGrid::kernel_row(Vec2 p, Row&& row) const {
    const int n = count();
    for (int j = 0; j < n; ++j) row(j) = kernel(p, points_[j]);
    row(n) = 1.0;
    row(n + 1) = p.x / scale_;
    row(n + 2) = p.y / scale_;
}

void TpsControlGrid::weights_at(Vec2 p, std::span<double> out) const {
    const int n = count();
    if (static_cast<int>(out.size()) != n) throw InvalidInput("weights_at: output size mismatch");
    Eigen::RowVectorXd row(n + 3);
    kernel_row(p, row);
    Eigen::Map<Eigen::RowVectorXd>(out.data(), n) = row * coef_;
}

RowMatrix TpsControlGrid::kernel_rows(std::span<const Vec2> pts) const {
    RowMatrix rows(static_cast<Eigen::Index>(pts.size()), count() + 3);
    for (std::size_t i = 0; i < pts.size(); ++i) kernel_row(pts[i], rows.row(static_cast<Eigen::Index>(i)));
    return rows;
}

Eigen::MatrixXd TpsControlGrid::basis(std::span<const Vec2> pts) const { return kernel_rows(pts) * coef_; }

double TpsControlGrid::interpolation_residual() const {
    const Eigen::MatrixXd b = basis(points_);
    return (b - Eigen::MatrixXd::Identity(count(), count())).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Warp fields

WarpField::WarpField(int width, int height, std::vector<Vec2> coords)
    : width_(width), height_(height), coords_(std::move(coords)) {
    if (width < 1 || height < 1 ||
        coords_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw InvalidInput("warp field size mismatch");
    }
    for (const auto& c : coords_) {
        if (!std::isfinite(c.x) || !std::isfinite(c.y)) throw InvalidInput("warp field has non-finite coordinates");
    }
}

WarpField WarpField::identity(int width, int height) {
    std::vector<Vec2> c;
    c.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) c.push_back({double(x), double(y)});
    }
    return WarpField(width, height, std::move(c));
}

bool WarpField::is_identity() const {
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            const Vec2 q = at(x, y);
            if (q.x != x || q.y != y) return false;
        }
    }
    return true;
}

double WarpField::mean_displacement() const {
    if (coords_.empty()) return 0.0;
    double s = 0.0;
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            const Vec2 d = displacement(x, y);
            s += std::hypot(d.x, d.y);
        }
    }
    return s / static_cast<double>(coords_.size());
}

Vec2 WarpField::displacement_at(Vec2 q) const {
    const double cx = std::clamp(q.x, 0.0, double(width_ - 1));
    const double cy = std::clamp(q.y, 0.0, double(height_ - 1));
    const int x0 = std::min(static_cast<int>(std::floor(cx)), std::max(width_ - 2, 0));
    const int y0 = std::min(static_cast<int>(std::floor(cy)), std::max(height_ - 2, 0));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double fx = cx - x0;
    const double fy = cy - y0;
    const Vec2 d00 = displacement(x0, y0), d10 = displacement(x1, y0);
    const Vec2 d01 = displacement(x0, y1), d11 = displacement(x1, y1);
    const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
    return {w00 * d00.x + w10 * d10.x + w01 * d01.x + w11 * d11.x,
            w00 * d00.y + w10 * d10.y + w01 * d01.y + w11 * d11.y};
}

WarpField affine_field(const AffineParams& params, int width, int height) {
    params.validate();
    std::vector<Vec2> c;
    c.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) c.push_back(params.apply({double(x), double(y)}));
    }
    return WarpField(width, height, std::move(c));
}

WarpField tps_field(const TpsParams& params, const TpsControlGrid& grid, int width, int height) {
    if (static_cast<int>(params.offsets.size()) != grid.count()) {
        throw InvalidInput("TPS params have " + std::to_string(params.offsets.size()) +
                           " offsets, grid has " + std::to_string(grid.count()));
    }
    if (grid.width() != width || grid.height() != height) {
        throw InvalidInput("TPS grid domain does not match the requested field size");
    }
    for (const auto& o : params.offsets) {
        if (!std::isfinite(o.x) || !std::isfinite(o.y)) throw InvalidInput("TPS offsets must be finite");
    }
    for (double v : params.affine.p) {
        if (!std::isfinite(v)) throw InvalidInput("TPS affine part must be finite");
    }
    const int n = grid.count();
    std::vector<double> w(static_cast<std::size_t>(n));
    std::vector<Vec2> c;
    c.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec2 p{double(x), double(y)};
            grid.weights_at(p, w);
            Vec2 q = params.affine.apply(p);
            for (int j = 0; j < n; ++j) {
                q.x += w[j] * params.offsets[j].x;
                q.y += w[j] * params.offsets[j].y;
            }
            c.push_back(q);
        }
    }
    return WarpField(width, height, std::move(c));
}

namespace {

template <class Img>
double sample_impl(const Img& img, double x, double y) {
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    const int w = img.width();
    const int h = img.height();
    if (fx0 < -1.0 || fy0 < -1.0 || fx0 > w - 1.0 || fy0 > h - 1.0) return 0.0;
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const double fx = x - fx0;
    const double fy = y - fy0;
    auto px = [&](int xx, int yy) -> double {
        return (xx >= 0 && yy >= 0 && xx < w && yy < h) ? img[img.index(xx, yy)] : 0.0;
    };
    return (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) +
           (1 - fx) * fy * px(x0, y0 + 1) + fx * fy * px(x0 + 1, y0 + 1);
}

void check_same_dims(int w1, int h1, int w2, int h2, const char* what) {
    if (w1 != w2 || h1 != h2) {
        throw InvalidInput(std::string(what) + ": dimension mismatch (" + std::to_string(w1) + "x" +
                           std::to_string(h1) + " vs " + std::to_string(w2) + "x" + std::to_string(h2) + ")");
    }
}

}  // namespace

double sample_bilinear(const ScalarGrid& img, double x, double y) { return sample_impl(img, x, y); }
double sample_bilinear(const ContourImage& img, double x, double y) { return sample_impl(img, x, y); }

ScalarGrid apply_warp(const ScalarGrid& img, const WarpField& field) {
    check_same_dims(img.width(), img.height(), field.width(), field.height(), "apply_warp");
    ScalarGrid out(img.width(), img.height());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Vec2 q = field[i];
        out[i] = sample_impl(img, q.x, q.y);
    }
    return out;
}

ContourImage apply_warp(const ContourImage& img, const WarpField& field) {
    check_same_dims(img.width(), img.height(), field.width(), field.height(), "apply_warp");
    std::vector<double> out(img.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Vec2 q = field[i];
        out[i] = std::clamp(sample_impl(img, q.x, q.y), 0.0, 1.0);
    }
    return ContourImage(img.width(), img.height(), std::move(out));
}

WarpField upsample_field(const WarpField& field) {
    const int w = 2 * field.width();
    const int h = 2 * field.height();
    std::vector<Vec2> c;
    c.reserve(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec2 d = field.displacement_at({x / 2.0, y / 2.0});
            c.push_back({x + 2.0 * d.x, y + 2.0 * d.y});
        }
    }
    return WarpField(w, h, std::move(c));
}

WarpField fit_field(const WarpField& field, int width, int height) {
    if (field.width() == width && field.height() == height) return field;
    std::vector<Vec2> c;
    c.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec2 d = field.displacement_at({double(x), double(y)});
            c.push_back({x + d.x, y + d.y});
        }
    }
    return WarpField(width, height, std::move(c));
}

WarpField compose(const WarpField& late, const WarpField& early) {
    check_same_dims(late.width(), late.height(), early.width(), early.height(), "compose");
    std::vector<Vec2> c(late.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Vec2 q = late[i];
        const Vec2 d = early.displacement_at(q);
        c[i] = {q.x + d.x, q.y + d.y};
    }
    return WarpField(late.width(), late.height(), std::move(c));
}

WarpField invert_field(const WarpField& field, int iterations) {
    std::vector<Vec2> c(field.size());
    for (int y = 0; y < field.height(); ++y) {
        for (int x = 0; x < field.width(); ++x) {
            Vec2 r{double(x), double(y)};
            for (int it = 0; it < iterations; ++it) {
                const Vec2 d = field.displacement_at(r);
                r = {x - d.x, y - d.y};
            }
            c[field.index(x, y)] = r;
        }
    }
    return WarpField(field.width(), field.height(), std::move(c));
}

// ---------------------------------------------------------------------------
// Binary serialization

namespace {

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
void put_f64(std::string& s, double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
std::uint64_t get_le(const std::string& s, std::size_t pos, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    }
    return v;
}

}  // namespace

std::string encode_warp_field(const WarpField& field) {
    std::string s = "WFLD";
    s.reserve(12 + 16 * field.size());
    put_u32(s, static_cast<std::uint32_t>(field.width()));
    put_u32(s, static_cast<std::uint32_t>(field.height()));
    for (const Vec2& c : field.coords()) {
        put_f64(s, c.x);
        put_f64(s, c.y);
    }
    return s;
}

WarpField decode_warp_field(const std::string& bytes) {
    if (bytes.size() < 12) throw ParseError("warp field file too short", bytes.size());
    if (bytes.compare(0, 4, "WFLD") != 0) throw ParseError("bad warp field magic (expected WFLD)", 0);
    const auto w = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    const auto h = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (bytes.size() != 12 + 16 * n) throw ParseError("warp field payload size mismatch", bytes.size());
    std::vector<Vec2> c(n);
    for (std::size_t i = 0; i < n; ++i) {
        c[i].x = std::bit_cast<double>(get_le(bytes, 12 + 16 * i, 8));
        c[i].y = std::bit_cast<double>(get_le(bytes, 20 + 16 * i, 8));
    }
    return WarpField(static_cast<int>(w), static_cast<int>(h), std::move(c));
}

void save_warp_field(const std::filesystem::path& path, const WarpField& field) {
    io::write_file_atomic(path, encode_warp_field(field));
}

WarpField load_warp_field(const std::filesystem::path& path) {
    return decode_warp_field(io::read_file(path));
}

// ---------------------------------------------------------------------------
// Parametric transforms

std::string family_name(Family f, int grid) {
    if (f == Family::affine) return "affine";
    return "tps" + std::to_string(grid) + "x" + std::to_string(grid);
}

ParametricWarp::ParametricWarp(Family f, int width, int height)
    : family_(f), width_(width), height_(height) {}

ParametricWarp ParametricWarp::affine(int width, int height) {
    return ParametricWarp(Family::affine, width, height);
}

ParametricWarp ParametricWarp::tps(int g, int width, int height) {
    ParametricWarp pw(Family::tps, width, height);
    pw.grid_ = std::make_shared<const TpsControlGrid>(g, width, height);
    return pw;
}

int ParametricWarp::param_count() const noexcept {
    return family_ == Family::affine ? 6 : 2 * grid_->count() + 6;
}

std::vector<double> ParametricWarp::identity_params() const {
    std::vector<double> p(static_cast<std::size_t>(param_count()), 0.0);
    const std::size_t a = p.size() - 6;
    p[a + 0] = 1.0;
    p[a + 4] = 1.0;
    return p;
}

void ParametricWarp::bind(std::span<const Vec2> points, int stride) {
    if (stride < 1) throw InvalidConfig("evaluation stride must be >= 1");
    points_.assign(points.begin(), points.end());
    stride_ = stride;
    interp_idx_.clear();
    interp_w_.clear();
    if (family_ != Family::tps) return;
    if (stride == 1) {
        rows_ = grid_->kernel_rows(points_);
        return;
    }
    if (points_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_)) {
        throw InvalidInput("strided evaluation needs one bound point per pixel");
    }
    auto lattice = [&](int n) {
        std::vector<int> v;
        for (int i = 0; i < n; i += stride) v.push_back(i);
        if (v.back() != n - 1) v.push_back(n - 1);
        return v;
    };
    const std::vector<int> xs = lattice(width_);
    const std::vector<int> ys = lattice(height_);
    std::vector<Vec2> sub;
    sub.reserve(xs.size() * ys.size());
    for (int y : ys) {
        for (int x : xs) sub.push_back(points_[static_cast<std::size_t>(y) * width_ + x]);
    }
    rows_ = grid_->kernel_rows(sub);
    auto cell = [](const std::vector<int>& v, int p, int& k, double& f) {
        k = static_cast<int>(std::upper_bound(v.begin(), v.end(), p) - v.begin()) - 1;
        k = std::min(k, static_cast<int>(v.size()) - 2);
        f = static_cast<double>(p - v[k]) / (v[k + 1] - v[k]);
    };
    const auto nx = static_cast<std::int32_t>(xs.size());
    interp_idx_.resize(points_.size());
    interp_w_.resize(points_.size());
    for (int y = 0; y < height_; ++y) {
        int ky;
        double fy;
        cell(ys, y, ky, fy);
        for (int x = 0; x < width_; ++x) {
            int kx;
            double fx;
            cell(xs, x, kx, fx);
            const std::size_t i = static_cast<std::size_t>(y) * width_ + x;
            const std::int32_t a = ky * nx + kx;
            interp_idx_[i] = {a, a + 1, a + nx, a + nx + 1};
            interp_w_[i] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        }
    }
}

void ParametricWarp::evaluate(std::span<const double> params, std::vector<Vec2>& out) const {
    if (static_cast<int>(params.size()) != param_count()) throw InvalidInput("parameter count mismatch");
    const double* a = params.data() + (params.size() - 6);
    out.resize(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const Vec2 p = points_[i];
        out[i] = {a[0] * p.x + a[1] * p.y + a[2], a[3] * p.x + a[4] * p.y + a[5]};
    }
    if (family_ != Family::tps) return;
    const Eigen::Index n = grid_->count();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>> v(params.data(), n, 2);
    const Eigen::Matrix<double, Eigen::Dynamic, 2> c = grid_->coefficients() * v;
    const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> d = rows_ * c;
    if (interp_idx_.empty()) {
        for (std::size_t i = 0; i < points_.size(); ++i) {
            out[i].x += d(static_cast<Eigen::Index>(i), 0);
            out[i].y += d(static_cast<Eigen::Index>(i), 1);
        }
        return;
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const auto& idx = interp_idx_[i];
        const auto& w = interp_w_[i];
        for (int k = 0; k < 4; ++k) {
            if (w[k] == 0.0) continue;
            out[i].x += w[k] * d(idx[k], 0);
            out[i].y += w[k] * d(idx[k], 1);
        }
    }
}

void ParametricWarp::backprop(std::span<const Vec2> dq, std::span<double> grad) const {
    if (dq.size() != points_.size()) throw InvalidInput("backprop: adjoint size mismatch");
    if (static_cast<int>(grad.size()) != param_count()) throw InvalidInput("backprop: gradient size mismatch");
    double* ga = grad.data() + (grad.size() - 6);
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const Vec2 d = dq[i];
        if (d.x == 0.0 && d.y == 0.0) continue;
        const Vec2 p = points_[i];
        ga[0] += d.x * p.x;
        ga[1] += d.x * p.y;
        ga[2] += d.x;
        ga[3] += d.y * p.x;
        ga[4] += d.y * p.y;
        ga[5] += d.y;
    }
    if (family_ != Family::tps) return;
    const Eigen::Index n = grid_->count();
    // Adjoint on the rows that were evaluated exactly.
    std::vector<Vec2> sub;
    std::span<const Vec2> adj = dq;
    if (!interp_idx_.empty()) {
        sub.assign(static_cast<std::size_t>(rows_.rows()), Vec2{});
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const Vec2 d = dq[i];
            if (d.x == 0.0 && d.y == 0.0) continue;
            for (int k = 0; k < 4; ++k) {
                const double w = interp_w_[i][k];
                if (w == 0.0) continue;
                sub[static_cast<std::size_t>(interp_idx_[i][k])].x += w * d.x;
                sub[static_cast<std::size_t>(interp_idx_[i][k])].y += w * d.y;
            }
        }
        adj = sub;
    }
    Eigen::VectorXd accx = Eigen::VectorXd::Zero(n + 3), accy = accx;
    for (std::size_t i = 0; i < adj.size(); ++i) {
        const Vec2 d = adj[i];
        if (d.x == 0.0 && d.y == 0.0) continue;
        const auto row = rows_.row(static_cast<Eigen::Index>(i)).transpose();
        accx.noalias() += d.x * row;
        accy.noalias() += d.y * row;
    }
    const Eigen::VectorXd gx = grid_->coefficients().transpose() * accx;
    const Eigen::VectorXd gy = grid_->coefficients().transpose() * accy;
    for (Eigen::Index j = 0; j < n; ++j) {
        grad[2 * j] += gx(j);
        grad[2 * j + 1] += gy(j);
    }
}

std::vector<double> ParametricWarp::precondition(std::span<const double> grad) const {
    // The affine block is stepped in centered, pixel-scaled coordinates:
    // A = I + B / s and t = t' + c - A c, so that a unit step moves the image
    // border by about one pixel. For TPS the affine block is further damped
    // by 1/n because it acts on every control region at once.
    std::vector<double> dir(grad.begin(), grad.end());
    const std::size_t a = dir.size() - 6;
    const double cx = (width_ - 1) / 2.0;
    const double cy = (height_ - 1) / 2.0;
    const double s = std::max(width_, height_) / 2.0;
    const double damp = family_ == Family::tps ? 1.0 / grid_->count() : 1.0;
    const double gA[2][2] = {{grad[a + 0], grad[a + 1]}, {grad[a + 3], grad[a + 4]}};
    const double gt[2] = {grad[a + 2], grad[a + 5]};
    const double c[2] = {cx, cy};
    double gB[2][2];
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) gB[i][j] = (gA[i][j] - gt[i] * c[j]) / s;
    }
    double dA[2][2];
    double dt[2];
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) dA[i][j] = gB[i][j] / s;
        // t = t' + c - (I + B/s) c  =>  dt = dt' - (dB / s) c
        dt[i] = gt[i] - (gB[i][0] * c[0] + gB[i][1] * c[1]) / s;
    }
    dir[a + 0] = damp * dA[0][0];
    dir[a + 1] = damp * dA[0][1];
    dir[a + 2] = damp * dt[0];
    dir[a + 3] = damp * dA[1][0];
    dir[a + 4] = damp * dA[1][1];
    dir[a + 5] = damp * dt[1];
    return dir;
}

AffineParams ParametricWarp::affine_part(std::span<const double> params) const {
    const std::size_t a = params.size() - 6;
    return AffineParams{{params[a], params[a + 1], params[a + 2], params[a + 3], params[a + 4], params[a + 5]}};
}

TpsParams ParametricWarp::tps_params(std::span<const double> params) const {
    TpsParams t;
    t.affine = affine_part(params);
    if (family_ == Family::tps) {
        t.offsets.resize(static_cast<std::size_t>(grid_->count()));
        for (std::size_t j = 0; j < t.offsets.size(); ++j) t.offsets[j] = {params[2 * j], params[2 * j + 1]};
    }
    return t;
}

}  // namespace contalign
