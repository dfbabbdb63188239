#include <doctest.h>

#include <cmath>
#include <numbers>

#include "contalign/errors.hpp"
#include "contalign/simulate.hpp"
#include "contalign/warp.hpp"
#include "helpers.hpp"

using namespace contalign;

namespace {

double max_coord_diff(const WarpField& a, const WarpField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max({m, std::abs(a[i].x - b[i].x), std::abs(a[i].y - b[i].y)});
    }
    return m;
}

// Smooth test pattern in [0,1].
double pattern(double x, double y) {
    return 0.5 + 0.25 * std::sin(x / 5.0) * std::cos(y / 7.0) + 0.2 * std::cos((x + y) / 9.0);
}

ContourImage pattern_image(int w, int h, double scale) {
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v[static_cast<std::size_t>(y) * w + x] = pattern(x * scale, y * scale);
    return ContourImage(w, h, std::move(v));
}

WarpField sinusoidal_field(int w, int h, double amp) {
    std::vector<Vec2> c(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            c[static_cast<std::size_t>(y) * w + x] = {x + amp * std::sin(y / 6.0), y + amp * std::cos(x / 8.0)};
    return WarpField(w, h, std::move(c));
}

}  // namespace

TEST_CASE("affine_field") {
    CHECK(affine_field(AffineParams::identity(), 7, 5).is_identity());
    const WarpField t = affine_field(AffineParams::translation(5, 3), 7, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x) CHECK(t.displacement(x, y) == Vec2{5, 3});
    // quarter turn about the centre of a 9x9 grid
    const double c = 4.0;
    const AffineParams rot{{0.0, -1.0, c + c, 1.0, 0.0, c - c}};
    const WarpField r = affine_field(rot, 9, 9);
    CHECK(r.at(0, 0) == Vec2{8.0, 0.0});
    CHECK(r.at(8, 8) == Vec2{0.0, 8.0});
    CHECK(r.at(4, 4) == Vec2{4.0, 4.0});
}

TEST_CASE("affine_inverse") {
    CHECK(affine_inverse(AffineParams::identity()) == AffineParams::identity());
    const AffineParams t = affine_inverse(AffineParams::translation(5, 3));
    CHECK(t.p[2] == -5.0);
    CHECK(t.p[5] == -3.0);
    const AffineParams a{{1.1, 0.2, -3.0, -0.15, 0.93, 2.5}};
    const AffineParams inv = affine_inverse(a);
    double worst = 0.0;
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const Vec2 back = inv.apply(a.apply({double(x), double(y)}));
            worst = std::max({worst, std::abs(back.x - x), std::abs(back.y - y)});
        }
    }
    CHECK(worst < 1e-9);
    CHECK_THROWS_AS(affine_inverse(AffineParams{{1.0, 2.0, 0.0, 2.0, 4.0, 0.0}}), SingularTransform);
}

TEST_CASE("tps_field") {
    const TpsControlGrid grid(4, 31, 31);
    CHECK(grid.interpolation_residual() < 1e-9);
    CHECK(tps_field(TpsParams::identity(grid), grid, 31, 31).is_identity());

    SUBCASE("pure affine part") {
        TpsParams p = TpsParams::identity(grid);
        p.affine = AffineParams{{1.05, 0.1, 2.0, -0.1, 0.97, -1.0}};
        CHECK(max_coord_diff(tps_field(p, grid, 31, 31), affine_field(p.affine, 31, 31)) < 1e-9);
    }
    SUBCASE("one displaced control point") {
        TpsParams p = TpsParams::identity(grid);
        p.offsets[1 * 4 + 1] = {4.0, 0.0};  // control point at (10, 10)
        const WarpField f = tps_field(p, grid, 31, 31);
        CHECK(f.displacement(10, 10).x == doctest::Approx(4.0).epsilon(1e-9));
        CHECK(std::abs(f.displacement(10, 10).y) < 1e-9);
        CHECK(std::abs(f.displacement(20, 10).x) < 1e-9);
        for (int x = 10; x < 20; ++x) CHECK(f.displacement(x + 1, 10).x < f.displacement(x, 10).x);
        for (int x = 10; x > 0; --x) CHECK(f.displacement(x - 1, 10).x < f.displacement(x, 10).x);
    }
}

TEST_CASE("apply_warp") {
    const ContourImage img(6, 5, helpers::uniform_values(30, 4));
    CHECK(apply_warp(img, WarpField::identity(6, 5)) == img);

    const ContourImage shifted = apply_warp(img, affine_field(AffineParams::translation(1, 0), 6, 5));
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) CHECK(shifted.at(x, y) == img.at(x + 1, y));
        CHECK(shifted.at(5, y) == 0.0);
    }

    const ContourImage line = helpers::pixels(9, 5, {{4, 0}, {4, 1}, {4, 2}, {4, 3}, {4, 4}});
    const ContourImage half = apply_warp(line, affine_field(AffineParams::translation(0.5, 0), 9, 5));
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 9; ++x) CHECK(half.at(x, y) == ((x == 3 || x == 4) ? 0.5 : 0.0));
    }
}

TEST_CASE("upsample_field") {
    const WarpField id = upsample_field(WarpField::identity(5, 4));
    CHECK(id.width() == 10);
    CHECK(id.height() == 8);
    CHECK(id.is_identity());
    const WarpField t = upsample_field(affine_field(AffineParams::translation(1, 0), 5, 4));
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 10; ++x) CHECK(t.displacement(x, y) == Vec2{2.0, 0.0});

    SUBCASE("fine warp matches coarse warp then upsampling") {
        const int n = 32;
        const WarpField coarse = sinusoidal_field(n, n, 1.5);
        const ContourImage img_c = pattern_image(n, n, 1.0);
        const ContourImage img_f = pattern_image(2 * n, 2 * n, 0.5);
        const ContourImage warped_c = apply_warp(img_c, coarse);
        const ContourImage warped_f = apply_warp(img_f, upsample_field(coarse));
        double worst = 0.0;
        for (int y = 8; y < 2 * n - 8; ++y) {
            for (int x = 8; x < 2 * n - 8; ++x) {
                worst = std::max(worst, std::abs(warped_f.at(x, y) - sample_bilinear(warped_c, x / 2.0, y / 2.0)));
            }
        }
        CHECK(worst < 0.05);
    }
}

TEST_CASE("compose") {
    const WarpField f = sinusoidal_field(20, 16, 1.0);
    const WarpField id = WarpField::identity(20, 16);
    CHECK(max_coord_diff(compose(id, f), f) < 1e-12);
    CHECK(max_coord_diff(compose(f, id), f) < 1e-12);

    const WarpField ab = affine_field(AffineParams::translation(2, -1), 20, 16);
    const WarpField cd = affine_field(AffineParams::translation(-0.5, 3), 20, 16);
    const WarpField both = compose(cd, ab);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x) CHECK(both.displacement(x, y) == Vec2{1.5, 2.0});

    SUBCASE("two-step warp matches the composed warp") {
        const int n = 48;
        const ContourImage img = pattern_image(n, n, 1.0);
        const WarpField early = sinusoidal_field(n, n, 1.2);
        const TpsControlGrid g(3, n, n);
        const WarpField late = tps_field(random_tps(3, 1.5, g), g, n, n);
        const ContourImage two = apply_warp(apply_warp(img, early), late);
        const ContourImage one = apply_warp(img, compose(late, early));
        double worst = 0.0;
        for (int y = 6; y < n - 6; ++y)
            for (int x = 6; x < n - 6; ++x) worst = std::max(worst, std::abs(two.at(x, y) - one.at(x, y)));
        CHECK(worst < 0.05);
    }
}

TEST_CASE("invert_field") {
    const int n = 40;
    const TpsControlGrid g(4, n, n);
    const WarpField f = tps_field(random_tps(8, 2.0, g), g, n, n);
    const WarpField inv = invert_field(f);
    double worst = 0.0;
    for (int y = 5; y < n - 5; ++y) {
        for (int x = 5; x < n - 5; ++x) {
            const Vec2 r = inv.at(x, y);
            const Vec2 back{r.x + f.displacement_at(r).x, r.y + f.displacement_at(r).y};
            worst = std::max({worst, std::abs(back.x - x), std::abs(back.y - y)});
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("warp field files") {
    const TpsControlGrid g(3, 11, 7);
    const WarpField f = tps_field(random_tps(2, 2.0, g), g, 11, 7);
    const std::string bytes = encode_warp_field(f);
    CHECK(bytes.size() == 12 + 16 * f.size());
    CHECK(bytes.substr(0, 4) == "WFLD");
    CHECK(decode_warp_field(bytes) == f);
    CHECK_THROWS_AS(decode_warp_field("WFLX" + bytes.substr(4)), ParseError);
    CHECK_THROWS_AS(decode_warp_field(bytes.substr(0, bytes.size() - 1)), ParseError);
}

TEST_CASE("parametric warps") {
    const int w = 33, h = 29;
    const WarpField id = WarpField::identity(w, h);

    SUBCASE("affine matches affine_field") {
        ParametricWarp m = ParametricWarp::affine(w, h);
        m.bind(id.coords());
        const std::vector<double> p{1.02, 0.05, 1.5, -0.03, 0.98, -2.0};
        std::vector<Vec2> q;
        m.evaluate(p, q);
        const WarpField ref = affine_field(AffineParams{{1.02, 0.05, 1.5, -0.03, 0.98, -2.0}}, w, h);
        CHECK(max_coord_diff(WarpField(w, h, q), ref) < 1e-12);
    }
    SUBCASE("tps matches tps_field exactly at stride 1 and closely when strided") {
        for (int n : {33, 128}) {
            ParametricWarp m = ParametricWarp::tps(4, n, n);
            const TpsParams tp = random_tps(5, 3.0, *m.control_grid());
            std::vector<double> p;
            for (const Vec2& v : tp.offsets) {
                p.push_back(v.x);
                p.push_back(v.y);
            }
            p.insert(p.end(), {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
            const WarpField ref = tps_field(tp, *m.control_grid(), n, n);
            const WarpField grid = WarpField::identity(n, n);
            std::vector<Vec2> q;
            m.bind(grid.coords());
            m.evaluate(p, q);
            CHECK(max_coord_diff(WarpField(n, n, q), ref) < 1e-9);
            if (n == 128) {
                // bilinear between exact rows and columns; the TPS kernel is only C1 at the knots
                m.bind(grid.coords(), 2);
                m.evaluate(p, q);
                CHECK(max_coord_diff(WarpField(n, n, q), ref) < 0.05);
            }
        }
    }
    SUBCASE("backprop is the transpose of evaluate") {
        for (int stride : {1, 3}) {
            ParametricWarp m = ParametricWarp::tps(3, w, h);
            m.bind(id.coords(), stride);
            const auto v = helpers::uniform_values(static_cast<std::size_t>(m.param_count()), 7, -1.0, 1.0);
            const auto d = helpers::uniform_values(2 * id.size(), 8, -1.0, 1.0);
            std::vector<Vec2> dq(id.size());
            for (std::size_t i = 0; i < dq.size(); ++i) dq[i] = {d[2 * i], d[2 * i + 1]};
            // evaluate is affine in the parameters: J v = evaluate(v) - evaluate(0)
            std::vector<Vec2> qv, q0;
            m.evaluate(v, qv);
            m.evaluate(std::vector<double>(v.size(), 0.0), q0);
            double lhs = 0.0;
            for (std::size_t i = 0; i < dq.size(); ++i)
                lhs += dq[i].x * (qv[i].x - q0[i].x) + dq[i].y * (qv[i].y - q0[i].y);
            std::vector<double> g(v.size(), 0.0);
            m.backprop(dq, g);
            double rhs = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) rhs += g[k] * v[k];
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
        }
    }
}

TEST_CASE("affine round trip and warp linearity") {
    Rng rng(11, "test");
    for (int k = 0; k < 50; ++k) {
        AffineParams a;
        for (double& v : a.p) v = rng.uniform(-2.0, 2.0);
        if (std::abs(a.det()) < 0.1) continue;
        const AffineParams back = affine_inverse(affine_inverse(a));
        for (int i = 0; i < 6; ++i) CHECK(std::abs(back.p[i] - a.p[i]) < 1e-12);
    }
    const ContourImage i1(12, 10, helpers::uniform_values(120, 21));
    const ContourImage i2(12, 10, helpers::uniform_values(120, 22));
    const WarpField f = sinusoidal_field(12, 10, 2.0);
    const double a = 0.25, b = 0.5;
    std::vector<double> mix(120);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * i1[i] + b * i2[i];
    const ContourImage wm = apply_warp(ContourImage(12, 10, mix), f);
    const ContourImage w1 = apply_warp(i1, f), w2 = apply_warp(i2, f);
    for (std::size_t i = 0; i < mix.size(); ++i) CHECK(std::abs(wm[i] - (a * w1[i] + b * w2[i])) < 1e-15);
}
