#include "contalign/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <utility>

#include "contalign/edt.hpp"
#include "contalign/errors.hpp"
#include "contalign/loss.hpp"
#include "contalign/simulate.hpp"
#include "contalign/warp.hpp"

namespace contalign::checks {

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// Random content restricted to [lo, hi) on both axes.
ContourImage random_interior(int size, int lo, int hi, double density, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(size) * size, 0.0);
    bool any = false;
    for (int y = lo; y < hi; ++y) {
        for (int x = lo; x < hi; ++x) {
            if (rng.bernoulli(density)) {
                v[static_cast<std::size_t>(y) * size + x] = 1.0;
                any = true;
            }
        }
    }
    if (!any) v[static_cast<std::size_t>(lo) * size + lo] = 1.0;
    return ContourImage(size, size, std::move(v));
}

}  // namespace

ContourImage random_binary(int width, int height, double density, std::uint64_t seed) {
    Rng rng(seed, "checks");
    std::vector<double> v(static_cast<std::size_t>(width) * height, 0.0);
    bool any = false;
    for (double& x : v) {
        if (rng.bernoulli(density)) {
            x = 1.0;
            any = true;
        }
    }
    if (!any) v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(v.size()) - 1))] = 1.0;
    return ContourImage(width, height, std::move(v));
}

ContourImage smooth_blob(int width, int height, double cx, double cy, double rx, double ry, double edge) {
    std::vector<double> v(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = (x - cx) / rx, dy = (y - cy) / ry;
            const double r = std::sqrt(dx * dx + dy * dy);
            // signed distance to the rim in pixels, roughly
            const double d = (r - 1.0) * std::min(rx, ry);
            v[static_cast<std::size_t>(y) * width + x] = std::clamp(0.5 - d / edge, 0.0, 1.0);
        }
    }
    return ContourImage(width, height, std::move(v));
}

ContourImage radial_ramp(int width, int height, double cx, double cy, double scale) {
    std::vector<double> v(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            v[static_cast<std::size_t>(y) * width + x] = std::clamp(std::hypot(x - cx, y - cy) / scale, 0.0, 1.0);
        }
    }
    return ContourImage(width, height, std::move(v));
}

Result edt_exactness(int count, int size, std::uint64_t seed) {
    Rng rng(seed, "edt");
    int failures = 0;
    for (int i = 0; i < count; ++i) {
        const double density = rng.uniform(0.001, 0.3);
        const ContourImage img = random_binary(size, size, density, rng.next());
        const DistanceField a = edt(img), b = edt_bruteforce(img);
        if (!std::ranges::equal(a.squared(), b.squared())) ++failures;
    }
    return {failures == 0, std::to_string(count - failures) + "/" + std::to_string(count) + " " +
                               std::to_string(size) + "x" + std::to_string(size) + " images exact"};
}

Result min_max_inequality(int count, int max_len, std::uint64_t seed) {
    Rng rng(seed, "minmax");
    int failures = 0;
    for (int i = 0; i < count; ++i) {
        const int n = rng.uniform_int(1, max_len);
        const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
        std::vector<double> f(n), g(n);
        for (int k = 0; k < n; ++k) {
            f[k] = rng.uniform(-scale, scale);
            g[k] = rng.uniform(-scale, scale);
        }
        double lhs = f[0] + g[0];
        for (int k = 1; k < n; ++k) lhs = std::min(lhs, f[k] + g[k]);
        const double rhs = *std::ranges::min_element(f) + *std::ranges::max_element(g);
        if (!(lhs <= rhs)) ++failures;
    }
    return {failures == 0, std::to_string(count - failures) + "/" + std::to_string(count) + " vectors satisfy it"};
}

Result upperbound_dominance(int count, int min_size, int max_size, const std::vector<double>& alphas,
                            std::uint64_t seed) {
    Rng rng(seed, "dominance");
    int failures = 0, cases = 0;
    double min_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < count; ++i) {
        const int w = rng.uniform_int(min_size, max_size);
        const int h = rng.uniform_int(min_size, max_size);
        const ContourImage S = random_binary(w, h, rng.uniform(0.05, 0.4), rng.next());
        const ContourImage T = random_binary(w, h, rng.uniform(0.05, 0.4), rng.next());
        const DistanceField dtS = edt(S), dtT = edt(T);
        const WarpField id = WarpField::identity(w, h);
        for (double alpha : alphas) {
            LossConfig cfg;
            cfg.alpha = alpha;
            cfg.window = 2 * std::max(w, h) - 1;
            const double ub = chamfer_upperbound(S, T, dtS, dtT, id, id, cfg).total;
            const double direct = chamfer_shape_direct(S, T, alpha);
            ++cases;
            if (!(ub >= direct)) ++failures;
            min_gap = std::min(min_gap, ub - direct);
        }
    }
    return {failures == 0, std::to_string(cases - failures) + "/" + std::to_string(cases) +
                               " cases hold" + fmt(", smallest margin %.3g", min_gap)};
}

Result reparam_translation(int count, std::uint64_t seed) {
    Rng rng(seed, "reparam-translation");
    const int size = 32;
    int failures = 0;
    for (int i = 0; i < count; ++i) {
        const int a = rng.uniform_int(-4, 4), b = rng.uniform_int(-4, 4);
        // content kept 5 px from the border so shifts by up to 4 stay inside
        const ContourImage S = random_interior(size, 5, size - 5, rng.uniform(0.02, 0.2), rng);
        const ContourImage T = random_interior(size, 5, size - 5, rng.uniform(0.02, 0.2), rng);
        const AffineParams theta = AffineParams::translation(a, b);
        const ContourImage S_theta = apply_warp(S, affine_field(theta, size, size));
        const ContourImage T_inv = apply_warp(T, affine_field(affine_inverse(theta), size, size));
        const DistanceField dtSt = edt(S_theta), dtS = edt(S);
        using Term = std::pair<std::int64_t, double>;
        std::vector<Term> lhs, rhs;
        for (std::size_t p = 0; p < T.size(); ++p) {
            if (T[p] != 0.0) lhs.emplace_back(dtSt.squared()[p], T[p]);
            if (T_inv[p] != 0.0) rhs.emplace_back(dtS.squared()[p], T_inv[p]);
        }
        std::ranges::sort(lhs);
        std::ranges::sort(rhs);
        auto total = [](const std::vector<Term>& terms) {
            double s = 0.0;
            for (const auto& [sq, t] : terms) s += std::sqrt(static_cast<double>(sq)) * t;
            return s;
        };
        if (lhs != rhs || total(lhs) != total(rhs)) ++failures;
    }
    return {failures == 0, std::to_string(count - failures) + "/" + std::to_string(count) +
                               " integer translations exactly equal"};
}

Result reparam_affine(int count, double tol, std::uint64_t seed) {
    Rng rng(seed, "reparam-affine");
    // Wide separation keeps distances near 40 px, so rim quantization (under
    // a pixel) stays small relative to them.
    const int size = 96;
    int failures = 0;
    double worst = 0.0;
    for (int i = 0; i < count; ++i) {
        const ContourImage S = smooth_blob(size, size, rng.uniform(18, 24), rng.uniform(40, 56),
                                           rng.uniform(5, 8), rng.uniform(5, 8));
        const ContourImage T = smooth_blob(size, size, rng.uniform(70, 76), rng.uniform(40, 56),
                                           rng.uniform(5, 8), rng.uniform(5, 8));
        // Rotation times (I + E) with |E_ij| <= 0.005. The identity is exact
        // only for isometries; scale and shear shift distances by about |E|.
        const double ang = rng.uniform(-0.1, 0.1);
        const double e11 = 1.0 + rng.uniform(-0.005, 0.005), e12 = rng.uniform(-0.005, 0.005);
        const double e21 = rng.uniform(-0.005, 0.005), e22 = 1.0 + rng.uniform(-0.005, 0.005);
        const double c = std::cos(ang), s = std::sin(ang);
        const double a11 = c * e11 - s * e21, a12 = c * e12 - s * e22;
        const double a21 = s * e11 + c * e21, a22 = s * e12 + c * e22;
        const double tx = rng.uniform(-3, 3), ty = rng.uniform(-3, 3);
        // about the canvas centre
        const double m = 0.5 * (size - 1);
        const AffineParams theta{{a11, a12, m - a11 * m - a12 * m + tx, a21, a22, m - a21 * m - a22 * m + ty}};
        const ContourImage S_theta = apply_warp(S, affine_field(theta, size, size));
        const ContourImage T_inv = apply_warp(T, affine_field(affine_inverse(theta), size, size));
        const DistanceField dtSt = edt(S_theta), dtS = edt(S);
        // Each side is divided by its T mass; resampling T changes that mass by 1/det.
        double lhs = 0.0, rhs = 0.0, nl = 0.0, nr = 0.0;
        for (std::size_t p = 0; p < T.size(); ++p) {
            lhs += dtSt[p] * T[p];
            rhs += dtS[p] * T_inv[p];
            nl += T[p];
            nr += T_inv[p];
        }
        lhs /= nl;
        rhs /= nr;
        const double rel = std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
        worst = std::max(worst, rel);
        if (!(rel < tol)) ++failures;
    }
    return {failures == 0, std::to_string(count - failures) + "/" + std::to_string(count) +
                               fmt(" affines within %.3g%% (worst %.3g%%)", 100.0 * tol, 100.0 * worst)};
}

Result gradient_check(int affine_points, int tps_points, double h, double tol, std::uint64_t seed) {
    Rng rng(seed, "gradient");
    const int size = 32;
    int accepted_affine = 0, accepted_tps = 0, tries = 0, failures = 0;
    double worst = 0.0;
    const int budget = 200 * (affine_points + tps_points);
    while ((accepted_affine < affine_points || accepted_tps < tps_points) && tries < budget) {
        ++tries;
        const bool tps = accepted_affine >= affine_points;
        // Ramps centred off-canvas: gradient magnitude is constant, so unit
        // gradients turn slowly, and the two fields stay 20 to 70 degrees apart,
        // away from the square-root corner of the gradient distance.
        const ContourImage S = radial_ramp(size, size, -rng.uniform(15, 30), -rng.uniform(15, 30), 100.0);
        const ContourImage T = radial_ramp(size, size, rng.uniform(10, 22), -rng.uniform(30, 45), 100.0);
        // Alternate a strict shape setting (alpha 1, window 1: no windowed-max
        // winner can switch) with the defaults, which route through the argmax.
        LossConfig cfg;
        if ((accepted_affine + accepted_tps) % 2 == 0) {
            cfg.alpha = 1.0;
            cfg.window = 1;
        }
        const StageObjective obj(S, T, edt(S), edt(T), cfg);
        ParametricWarp fm = tps ? ParametricWarp::tps(4, size, size) : ParametricWarp::affine(size, size);
        ParametricWarp bm = fm;
        const WarpField id = WarpField::identity(size, size);
        fm.bind(id.coords());
        bm.bind(id.coords());
        // Matrix and translation entries on a 1/16 lattice shifted by 1/32 keep
        // every sample 1/32 px from integer coordinates, so +-h never crosses a
        // bilinear cell boundary. TPS offsets stay small enough not to undo that.
        auto lattice = [&](int lo, int hi) { return rng.uniform_int(lo, hi) / 16.0; };
        auto draw = [&] {
            std::vector<double> p = fm.identity_params();
            const std::size_t off = tps ? p.size() - 6 : 0;
            for (std::size_t k = 0; k < off; ++k) p[k] = rng.uniform(-0.012, 0.012);
            p[off + 0] += lattice(-2, 2);
            p[off + 1] += lattice(-2, 2);
            p[off + 2] += lattice(-32, 32) + 1.0 / 32.0;
            p[off + 3] += lattice(-2, 2);
            p[off + 4] += lattice(-2, 2);
            p[off + 5] += lattice(-32, 32) + 1.0 / 32.0;
            return p;
        };
        const std::vector<double> pf = draw(), pb = draw();
        // Largest coordinate change any single +-h step can cause.
        const double reach = h * (2.0 * size + 1.0);
        auto clear_of_knots = [&](const ParametricWarp& m, const std::vector<double>& p) {
            std::vector<Vec2> q;
            m.evaluate(p, q);
            for (const Vec2& v : q) {
                for (double c : {v.x, v.y}) {
                    if (std::abs(c - std::round(c)) <= reach) return false;
                }
            }
            return true;
        };
        if (!clear_of_knots(fm, pf) || !clear_of_knots(bm, pb)) continue;
        const auto fd = loss_grad(obj, fm, bm, pf, pb, GradientMode::finite_difference, h);
        const auto fd_half = loss_grad(obj, fm, bm, pf, pb, GradientMode::finite_difference, 0.5 * h);
        double scale = 0.0;
        for (double g : fd) scale = std::max(scale, std::abs(g));
        const double floor = 1e-6 * std::max(scale, 1e-12);
        // A remaining kink (a windowed-max winner or gradient validity changing
        // inside [-h, h]) shows up as disagreement between the two step sizes;
        // such points are redrawn rather than scored.
        bool regular = true;
        for (std::size_t k = 0; k < fd.size() && regular; ++k) {
            if (std::abs(fd[k] - fd_half[k]) > 1e-5 * std::max({std::abs(fd[k]), std::abs(fd_half[k]), floor}))
                regular = false;
        }
        if (!regular) continue;
        const auto an = loss_grad(obj, fm, bm, pf, pb, GradientMode::analytic);
        double point_worst = 0.0;
        for (std::size_t k = 0; k < fd.size(); ++k) {
            const double rel = std::abs(an[k] - fd[k]) / std::max({std::abs(an[k]), std::abs(fd[k]), floor});
            point_worst = std::max(point_worst, rel);
        }
        worst = std::max(worst, point_worst);
        if (!(point_worst < tol)) ++failures;
        (tps ? accepted_tps : accepted_affine)++;
    }
    const bool complete = accepted_affine == affine_points && accepted_tps == tps_points;
    return {complete && failures == 0,
            std::to_string(accepted_affine) + " affine + " + std::to_string(accepted_tps) + " tps points, " +
                std::to_string(failures) + " over tolerance" +
                fmt(", worst relative error %.3g (%g draws)", worst, tries)};
}

}  // namespace contalign::checks
