#include <doctest.h>

#include <cmath>
#include <numbers>

#include "contalign/align.hpp"
#include "contalign/edt.hpp"
#include "contalign/errors.hpp"
#include "contalign/eval.hpp"
#include "contalign/simulate.hpp"
#include "helpers.hpp"

using namespace contalign;

namespace {

ContourImage polygon64(std::uint64_t seed) {
    ContourParams p;
    p.width = p.height = 64;
    p.cx = p.cy = 32;
    p.rx = 13;
    p.ry = 10;
    return gen_contour(ShapeKind::polygon, p, seed);
}

StageResult run_stage(const StageSpec& spec, const ContourImage& S, const ContourImage& T) {
    const WarpField id = WarpField::identity(S.width(), S.height());
    return optimize_stage(spec, S, T, edt(S), edt(T), id, id, LossConfig{});
}

}  // namespace

TEST_CASE("schedules") {
    std::vector<std::string> labels;
    for (const StageSpec& s : default_schedule()) labels.push_back(s.label());
    CHECK(labels == std::vector<std::string>{"affine@4", "tps2x2@3", "tps4x4@2", "tps8x8@1", "tps16x16@0"});
    CHECK(default_schedule(3).size() == 3);
    CHECK(default_schedule(3).front().family == Family::affine);

    const StageSpec s = StageSpec::parse("tps8@1");
    CHECK(s.family == Family::tps);
    CHECK(s.grid == 8);
    CHECK(s.level == 1);
    CHECK(s.label() == "tps8x8@1");
    CHECK(StageSpec::parse(s.label()).label() == s.label());
    CHECK_THROWS_AS(StageSpec::parse("spline@1"), InvalidConfig);

    CHECK_NOTHROW(validate_schedule(default_schedule()));
    CHECK_THROWS_AS(validate_schedule({StageSpec::parse("tps2@2")}), InvalidConfig);
    CHECK_THROWS_AS(validate_schedule({StageSpec::parse("affine@1"), StageSpec::parse("tps2@2")}), InvalidConfig);
    CHECK_THROWS_AS(validate_schedule({StageSpec::parse("affine@2"), StageSpec::parse("tps8@1"), StageSpec::parse("tps4@0")}),
                    InvalidConfig);
    CHECK_THROWS_AS(validate_schedule({}), InvalidConfig);
}

TEST_CASE("optimize_stage") {
    SUBCASE("already aligned") {
        const ContourImage S = polygon64(1);
        const StageResult r = run_stage(StageSpec::parse("affine@0"), S, S);
        const auto id = AffineParams::identity().p;
        for (int i = 0; i < 6; ++i) CHECK(std::abs(r.trace.fwd_params[i] - id[i]) < 1e-2);
        CHECK(r.trace.final_loss <= r.trace.initial_loss);
    }
    SUBCASE("recovers a translation") {
        const ContourImage S = polygon64(2);
        const ContourImage T = apply_warp(S, affine_field(AffineParams::translation(5, 3), 64, 64));
        const StageResult r = run_stage(StageSpec::parse("affine@0"), S, T);
        CHECK(std::abs(r.trace.fwd_params[2] - 5.0) < 0.5);
        CHECK(std::abs(r.trace.fwd_params[5] - 3.0) < 0.5);
        for (std::size_t i = 1; i < r.trace.fwd_values.size(); ++i)
            CHECK(r.trace.fwd_values[i] <= r.trace.fwd_values[i - 1]);
    }
    SUBCASE("small affine ground truth") {
        Rng rng(3, "test");
        ContourParams cp;
        cp.rx = 40;
        cp.ry = 30;
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            const ContourImage S = gen_contour(ShapeKind::polygon, cp, 10 + seed);
            const double sign = seed % 2 ? 1.0 : -1.0;
            const double angle = sign * rng.uniform(5.0, 10.0) * std::numbers::pi / 180.0;
            const double scale = 1.0 + sign * rng.uniform(0.05, 0.1);
            const double c = std::cos(angle) * scale, s = std::sin(angle) * scale;
            const double m = 63.5;
            const AffineParams gt{{c, -s, m - c * m + s * m, s, c, m - s * m - c * m}};
            const ContourImage T = binarize(apply_warp(S, affine_field(gt, 128, 128)), 0.35);
            const StageResult r = run_stage(StageSpec::parse("affine@0"), S, T);
            const double before = asym_chamfer(S, T);
            const double after = asym_chamfer(apply_warp(S, r.fwd), T);
            INFO("seed " << seed << ": " << before << " -> " << after);
            CHECK(after <= 0.2 * before);
        }
    }
}

TEST_CASE("align") {
    SUBCASE("identical images") {
        const ContourImage S = random_contour(4);
        LossConfig plain;
        plain.alpha = 0.0;
        const AlignmentResult r0 = align(S, S, default_schedule(), plain);
        CHECK(r0.complete);
        CHECK(r0.fwd.is_identity());
        CHECK(asym_chamfer(apply_warp(S, r0.fwd), S) == 0.0);

        // The windowed max is not minimal at the identity, so the shape term
        // may buy a tiny drift.
        const AlignmentResult r = align(S, S, default_schedule(), LossConfig{});
        CHECK(r.stages.size() == 5);
        CHECK(asym_chamfer(apply_warp(S, r.fwd), S) < 1e-3);
        CHECK(r.fwd.mean_displacement() < 0.5);
        for (const StageTrace& t : r.stages) CHECK(t.final_loss <= t.initial_loss);
    }
    SUBCASE("simulated pairs improve and runs are deterministic") {
        PairSpec spec;
        spec.density = 0.0;
        spec.occlusions_min = spec.occlusions_max = 0;
        int improved = 0;
        const int n = 6;
        for (int k = 0; k < n; ++k) {
            spec.seed = 100 + k;
            const SimPair pair = make_pair(random_contour(spec.seed), spec);
            const AlignmentResult r = align(pair.source, pair.target, default_schedule(), LossConfig{});
            const EvalRow row = evaluate_pair(r.fwd, pair, EvalOptions{});
            if (row.final_score < row.initial_score) ++improved;
            if (k == 0) {
                const AlignmentResult again = align(pair.source, pair.target, default_schedule(), LossConfig{});
                CHECK(again.fwd == r.fwd);
                CHECK(again.bwd == r.bwd);
                CHECK(again.multiscale_loss == r.multiscale_loss);
            }
        }
        CHECK(improved == n);
    }
    SUBCASE("errors") {
        const ContourImage S = random_contour(5);
        CHECK_THROWS_AS(align(S, random_contour(5, 96, 128), default_schedule(), LossConfig{}), InvalidInput);
        CHECK_THROWS_AS(align(S, S, {StageSpec::parse("affine@6")}, LossConfig{}), InvalidConfig);
        CHECK_THROWS_AS(align(S, S, {}, LossConfig{}), InvalidConfig);
        CHECK_THROWS_AS(align(S, ContourImage::zeros(128, 128), default_schedule(), LossConfig{}), EmptyShape);
    }
}
