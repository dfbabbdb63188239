#include <doctest.h>

#include <cmath>
#include <limits>

#include "contalign/checks.hpp"
#include "contalign/edt.hpp"
#include "contalign/errors.hpp"
#include "contalign/loss.hpp"
#include "helpers.hpp"

using namespace contalign;

namespace {

// Symmetric point-set Chamfer by double loop over pixels above 0.5.
double chamfer_pointset(const ContourImage& S, const ContourImage& T) {
    auto directed = [](const ContourImage& a, const ContourImage& b) {
        double total = 0.0;
        int n = 0;
        for (int y = 0; y < a.height(); ++y) {
            for (int x = 0; x < a.width(); ++x) {
                if (a.at(x, y) <= 0.5) continue;
                double best = std::numeric_limits<double>::infinity();
                for (int v = 0; v < b.height(); ++v)
                    for (int u = 0; u < b.width(); ++u)
                        if (b.at(u, v) > 0.5) best = std::min(best, std::hypot(double(u - x), double(v - y)));
                total += best;
                ++n;
            }
        }
        return total / n;
    };
    return directed(S, T) + directed(T, S);
}

// Binary contour whose pixels all carry the same valid gradient: the lower
// row of a two-row canvas.
ContourImage edge_row(int w) {
    std::vector<double> v(static_cast<std::size_t>(2 * w), 0.0);
    for (int x = 0; x < w; ++x) v[static_cast<std::size_t>(w + x)] = 1.0;
    return ContourImage(w, 2, std::move(v));
}

double ncc_direct(const ContourImage& a, const ContourImage& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= a.size();
    mb /= b.size();
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += (a[i] - ma) * (b[i] - mb);
        aa += (a[i] - ma) * (a[i] - ma);
        bb += (b[i] - mb) * (b[i] - mb);
    }
    return 1.0 - ab / std::sqrt(aa * bb);
}

struct Models {
    ParametricWarp fwd;
    ParametricWarp bwd;
    WarpField id;
    Models(int w, int h) : fwd(ParametricWarp::affine(w, h)), bwd(ParametricWarp::affine(w, h)), id(WarpField::identity(w, h)) {
        fwd.bind(id.coords());
        bwd.bind(id.coords());
    }
};

}  // namespace

TEST_CASE("LossConfig validation") {
    LossConfig c;
    CHECK_NOTHROW(c.validate());
    c.window = 4;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = {};
    c.alpha = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = {};
    c.scale_weights = {1.0, -0.5};
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

TEST_CASE("chamfer_mdt") {
    const ContourImage a = helpers::pixels(8, 8, {{1, 1}, {5, 2}, {3, 6}});
    CHECK(chamfer_mdt(a, a, edt(a), edt(a)) == 0.0);

    const ContourImage s = helpers::pixels(6, 6, {{0, 0}});
    const ContourImage t = helpers::pixels(6, 6, {{3, 4}});
    CHECK(chamfer_mdt(s, t, edt(s), edt(t)) == 10.0);

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const ContourImage S = checks::random_binary(16, 16, 0.1, 2 * seed);
        const ContourImage T = checks::random_binary(16, 16, 0.1, 2 * seed + 1);
        const double v = chamfer_mdt(S, T, edt(S), edt(T));
        CHECK(std::abs(v - chamfer_pointset(S, T)) < 1e-9);
        CHECK(v == doctest::Approx(chamfer_mdt(T, S, edt(T), edt(S))).epsilon(1e-15));
        CHECK(v >= 0.0);
    }
    CHECK_THROWS_AS(chamfer_mdt(ContourImage::zeros(6, 6), t, edt(t), edt(t)), EmptyShape);
}

TEST_CASE("chamfer_reparam") {
    const ContourImage S = checks::random_binary(20, 20, 0.08, 41);
    const ContourImage T = checks::random_binary(20, 20, 0.08, 42);
    const DistanceField dS = edt(S), dT = edt(T);
    const WarpField id = WarpField::identity(20, 20);
    CHECK(chamfer_reparam(S, T, dS, dT, id, id) == chamfer_mdt(S, T, dS, dT));

    SUBCASE("integer shift realigned") {
        const ContourImage base = helpers::pixels(24, 24, {{8, 8}, {9, 8}, {10, 9}, {12, 13}, {9, 14}});
        const int a = 3, b = -2;
        // T(p) = S(p + (a, b)): sampling S at p + (a, b) aligns it with T.
        const ContourImage T2 = apply_warp(base, affine_field(AffineParams::translation(a, b), 24, 24));
        const double v = chamfer_reparam(base, T2, edt(base), edt(T2), affine_field(AffineParams::translation(a, b), 24, 24),
                                         affine_field(AffineParams::translation(-a, -b), 24, 24));
        CHECK(v == 0.0);
    }
    SUBCASE("affine identity on smooth blobs") {
        const checks::Result r = checks::reparam_affine(10, 0.02, 7);
        INFO(r.detail);
        CHECK(r.passed);
    }
    SUBCASE("integer translations") {
        const checks::Result r = checks::reparam_translation(10, 8);
        INFO(r.detail);
        CHECK(r.passed);
    }
    CHECK_THROWS_AS(chamfer_reparam(S, T, dS, dT, WarpField::identity(19, 20), id), InvalidInput);
}

TEST_CASE("chamfer_shape_direct and chamfer_upperbound") {
    SUBCASE("alpha 0 reduces to chamfer_mdt") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const ContourImage S = checks::random_binary(14, 12, 0.12, 60 + seed);
            const ContourImage T = checks::random_binary(14, 12, 0.12, 80 + seed);
            CHECK(std::abs(chamfer_shape_direct(S, T, 0.0) - chamfer_mdt(S, T, edt(S), edt(T))) < 1e-9);
        }
    }
    SUBCASE("straight edge against itself") {
        const ContourImage e = edge_row(16);
        CHECK(chamfer_shape_direct(e, e, 1e-2) == 0.0);
        const WarpField id = WarpField::identity(16, 2);
        for (int window : {1, 3, 5, 31}) {
            LossConfig cfg;
            cfg.window = window;
            const LossBreakdown b = chamfer_upperbound(e, e, edt(e), edt(e), id, id, cfg);
            CHECK(b.total == 0.0);
        }
    }
    SUBCASE("breakdown structure") {
        const ContourImage S = checks::random_binary(18, 18, 0.1, 5);
        const ContourImage T = checks::random_binary(18, 18, 0.1, 6);
        const WarpField id = WarpField::identity(18, 18);
        const WarpField f = affine_field(AffineParams{{1.02, 0.01, 0.3, -0.02, 0.99, -0.4}}, 18, 18);
        for (double alpha : {0.0, 1e-2, 1.0}) {
            LossConfig cfg;
            cfg.alpha = alpha;
            const LossBreakdown b = chamfer_upperbound(S, T, edt(S), edt(T), f, id, cfg);
            CHECK(std::abs(b.total - (b.proximity + alpha * b.shape)) < 1e-12);
            CHECK(b.total >= 0.0);
            CHECK(b.shape >= 0.0);
            if (alpha == 0.0) CHECK(b.total == chamfer_reparam(S, T, edt(S), edt(T), f, id));
        }
    }
    SUBCASE("dominance with a global window") {
        const checks::Result r = checks::upperbound_dominance(20, 12, 16, {0.0, 1e-2, 1.0}, 9);
        INFO(r.detail);
        CHECK(r.passed);
    }
    SUBCASE("min-max inequality") {
        CHECK(checks::min_max_inequality(200, 64, 10).passed);
    }
}

TEST_CASE("baseline losses") {
    const ContourImage a(9, 7, helpers::uniform_values(63, 1));
    const ContourImage b(9, 7, helpers::uniform_values(63, 2));
    CHECK(baseline_loss(LossKind::mse, a, a) == 0.0);
    CHECK(std::abs(baseline_loss(LossKind::ncc, a, a)) < 1e-12);
    std::vector<double> neg(63);
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = 1.0 - a[i];
    CHECK(baseline_loss(LossKind::ncc, a, ContourImage(9, 7, neg)) == doctest::Approx(2.0).epsilon(1e-12));
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(baseline_loss(LossKind::mse, a, b) == doctest::Approx(mse / a.size()).epsilon(1e-12));
    CHECK(baseline_loss(LossKind::ncc, a, b) == doctest::Approx(ncc_direct(a, b)).epsilon(1e-12));
    CHECK_THROWS_AS(baseline_loss(LossKind::ncc, helpers::filled(9, 7, 0.3), b), DegenerateInput);
    CHECK_THROWS_AS(baseline_loss(LossKind::chamfer, a, b), InvalidConfig);
}

TEST_CASE("multiscale_loss") {
    CHECK(multiscale_loss({3.5}, {1.0}) == 3.5);
    CHECK(multiscale_loss({1, 2, 3, 4, 5}, {0, 0, 0, 0, 0}) == 0.0);
    CHECK(multiscale_loss({1.5, 2, 3, 4, 5.25}, {1, 1, 1, 1, 1}) == 1.5 + 2 + 3 + 4 + 5.25);
    CHECK_THROWS_AS(multiscale_loss({1, 2}, {1}), InvalidInput);
}

TEST_CASE("loss_grad") {
    SUBCASE("constant image, alpha 0") {
        const ContourImage c = helpers::filled(12, 12, 1.0);
        LossConfig cfg;
        cfg.alpha = 0.0;
        const StageObjective obj(c, c, edt(c), edt(c), cfg);
        Models m(12, 12);
        const auto p = m.fwd.identity_params();
        for (double g : loss_grad(obj, m.fwd, m.bwd, p, p)) CHECK(g == 0.0);
    }
    SUBCASE("translation sign") {
        const int n = 64;
        const ContourImage S = checks::smooth_blob(n, n, 30, 32, 8, 6);
        const ContourImage T = checks::smooth_blob(n, n, 25, 32, 8, 6);  // T(p) = S(p + (5, 0))
        const StageObjective obj(S, T, edt(S), edt(T), LossConfig{});
        Models m(n, n);
        const auto p0 = m.fwd.identity_params();
        auto p1 = p0;
        p1[2] = 1.0;
        const double dl = stage_total(obj, m.fwd, m.bwd, p1, p0) - stage_total(obj, m.fwd, m.bwd, p0, p0);
        const auto g = loss_grad(obj, m.fwd, m.bwd, p0, p0);
        CHECK(dl < 0.0);
        CHECK(g[2] < 0.0);
    }
    SUBCASE("finite differences") {
        const checks::Result r = checks::gradient_check(3, 3, 1e-4, 1e-4, 12);
        INFO(r.detail);
        CHECK(r.passed);
    }
    SUBCASE("non-finite parameters") {
        const ContourImage S = checks::smooth_blob(16, 16, 8, 8, 4, 3);
        const StageObjective obj(S, S, edt(S), edt(S), LossConfig{});
        Models m(16, 16);
        auto p = m.fwd.identity_params();
        p[2] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(loss_grad(obj, m.fwd, m.bwd, p, m.bwd.identity_params()), NumericalError);
    }
}
