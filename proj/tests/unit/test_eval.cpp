#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "contalign/checks.hpp"
#include "contalign/errors.hpp"
#include "contalign/eval.hpp"
#include "helpers.hpp"

using namespace contalign;

namespace {

double nearest(const ContourImage& T, int x, int y) {
    double best = std::numeric_limits<double>::infinity();
    for (int v = 0; v < T.height(); ++v)
        for (int u = 0; u < T.width(); ++u)
            if (T.at(u, v) > 0.5) best = std::min(best, std::hypot(double(u - x), double(v - y)));
    return best;
}

}  // namespace

TEST_CASE("asym_chamfer and pct_within") {
    const ContourImage t = helpers::pixels(10, 10, {{2, 2}});
    const ContourImage s = helpers::pixels(10, 10, {{8, 2}});
    CHECK(asym_chamfer(t, t) == 0.0);
    CHECK(asym_chamfer(s, t) == 6.0);
    CHECK(pct_within(t, t, 0.5) == 100.0);
    CHECK(pct_within(s, t, 5.0) == 0.0);
    CHECK(pct_within(s, t, 6.0) == 100.0);
    CHECK_THROWS_AS(asym_chamfer(ContourImage::zeros(10, 10), t), EmptyShape);
    CHECK_THROWS_AS(pct_within(ContourImage::zeros(10, 10), t, 5.0), EmptyShape);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ContourImage S(16, 16, helpers::uniform_values(256, 300 + seed));
        const ContourImage T = checks::random_binary(16, 16, 0.05, 400 + seed);
        double num = 0.0, mass = 0.0, within = 0.0;
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                const double d = nearest(T, x, y);
                num += S.at(x, y) * d;
                mass += S.at(x, y);
                if (d <= 3.0) within += S.at(x, y);
            }
        }
        CHECK(std::abs(asym_chamfer(S, T) - num / mass) < 1e-9);
        CHECK(std::abs(pct_within(S, T, 3.0) - 100.0 * within / mass) < 1e-9);
        double previous = 0.0;
        for (double z : {0.5, 1.0, 2.0, 4.0, 8.0, 30.0}) {
            const double p = pct_within(S, T, z);
            CHECK(p >= previous);
            CHECK(p <= 100.0);
            previous = p;
        }
    }
}

TEST_CASE("evaluate_pair") {
    PairSpec spec;
    spec.seed = 21;
    spec.density = 0.0;
    spec.occlusions_min = spec.occlusions_max = 0;
    const SimPair pair = make_pair(random_contour(spec.seed), spec);

    const EvalRow id = evaluate_pair(WarpField::identity(128, 128), pair, EvalOptions{}, "p");
    CHECK(id.id == "p");
    CHECK(id.initial_score == id.final_score);
    CHECK(id.initial_pct == id.final_pct);
    CHECK(id.initial_score == initial_score(pair));

    const EvalRow gt = evaluate_pair(invert_field(pair.gt_field()), pair, EvalOptions{});
    CHECK(gt.final_score < 1.0);
    CHECK(gt.final_pct > gt.initial_pct);

    // the corrupted source never enters the metric
    PairSpec noisy = spec;
    noisy.density = 0.1;
    noisy.occlusions_min = noisy.occlusions_max = 2;
    const SimPair other = make_pair(random_contour(spec.seed), noisy);
    CHECK(evaluate_pair(invert_field(other.gt_field()), other, EvalOptions{}).final_score == gt.final_score);

    EvalOptions strict;
    strict.binarize = true;
    CHECK(evaluate_pair(invert_field(pair.gt_field()), pair, strict).final_score < 1.0);
}

TEST_CASE("aggregate and table") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);

    std::vector<EvalRow> rows;
    for (int k = 0; k < 7; ++k)
        rows.push_back({"r" + std::to_string(k), 10.0 + k, 9.0 - 2 * k, 30.0 + k, 60.0 - 10 * k});
    const EvalReport r = aggregate(rows, "direct", "upperbound", 5.0);
    std::vector<double> fin;
    for (const EvalRow& row : rows) fin.push_back(row.final_score);
    CHECK(r.median_final_score == median(fin));
    CHECK(r.median_initial_score == 13.0);
    CHECK(r.mean_initial_score == doctest::Approx(13.0));
    CHECK(r.median_final_pct == 30.0);
    CHECK(r.improved == 7);
    CHECK(r.rows.size() == 7);

    const std::string table = format_table(r);
    std::istringstream in(table);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0].find("Z=5") != std::string::npos);
    CHECK(lines[1].find("Given test pairs") == 0);
    CHECK(lines[1].find("13.00 (33%)") != std::string::npos);
    CHECK(lines[2].find("direct") == 0);
    CHECK(lines[2].find("upperbound") != std::string::npos);
    CHECK(lines[2].find("3.00 (30%)") != std::string::npos);
    // columns line up
    const auto col = lines[0].find("Loss");
    CHECK(lines[1][col] == '-');
    CHECK(lines[2].substr(col, 10) == "upperbound");
    CHECK(lines[0].find("Chamfer") == lines[1].find("13.00"));
    CHECK(lines[0].find("Chamfer") == lines[2].find("3.00"));

    const nlohmann::json j = r;
    CHECK(j.at("rows").size() == 7);
    CHECK(j.at("Z") == 5.0);
}

TEST_CASE("vanished aligned source") {
    PairSpec spec;
    spec.seed = 22;
    spec.density = 0.0;
    spec.occlusions_min = spec.occlusions_max = 0;
    const SimPair pair = make_pair(random_contour(spec.seed), spec);
    // push everything off the canvas
    const WarpField away = affine_field(AffineParams::translation(1000.0, 0.0), 128, 128);
    const EvalRow row = evaluate_pair(away, pair, EvalOptions{}, "gone");
    CHECK(row.vanished);
    CHECK(std::isinf(row.final_score));
    CHECK(row.final_pct == 0.0);
    CHECK(row.initial_score == initial_score(pair));

    const EvalRow kept{"kept", 10.0, 2.0, 40.0, 90.0};
    const EvalReport r = aggregate({row, kept}, "direct", "upperbound", 5.0);
    CHECK(r.vanished == 1);
    CHECK(r.improved == 1);
    CHECK(r.mean_final_score == 2.0);
    CHECK(std::isinf(r.median_final_score));
    const nlohmann::json j = r;
    CHECK(j.at("vanished") == 1);
    CHECK(j.at("rows")[0].at("final_score").is_null());
    CHECK(j.at("rows")[0].at("vanished") == true);
    CHECK(j.at("median").at("final_score").is_null());
}
