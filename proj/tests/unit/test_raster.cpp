#include <doctest.h>

#include <algorithm>

#include "contalign/errors.hpp"
#include "contalign/raster.hpp"
#include "helpers.hpp"

using namespace contalign;

TEST_CASE("contour images reject invalid content") {
    CHECK_THROWS_AS(ContourImage(1, 4, std::vector<double>(4, 0.0)), InvalidInput);
    CHECK_THROWS_AS(ContourImage(2, 2, std::vector<double>(3, 0.0)), InvalidInput);
    CHECK_THROWS_AS(ContourImage(2, 2, {0.0, 1.5, 0.0, 0.0}), InvalidInput);
    CHECK_THROWS_AS(ScalarGrid(2, 1, std::vector<double>{0.0, std::nan("")}), InvalidInput);
}

TEST_CASE("binarize") {
    SUBCASE("all zero stays zero") {
        const ContourImage b = binarize(ScalarGrid(4, 4, 0.0), 0.5);
        CHECK(b.mass() == 0.0);
    }
    SUBCASE("single value above threshold") {
        ScalarGrid g(4, 4, 0.0);
        g.at(2, 1) = 0.9;
        const ContourImage b = binarize(g, 0.5);
        CHECK(b.count_above(0.0) == 1);
        CHECK(b.at(2, 1) == 1.0);
    }
    SUBCASE("count matches a direct scan") {
        const auto v = helpers::uniform_values(256, 11);
        const ContourImage b = binarize(ScalarGrid(16, 16, v), 0.5);
        const auto expected = std::count_if(v.begin(), v.end(), [](double x) { return x > 0.5; });
        CHECK(b.count_above(0.0) == static_cast<std::size_t>(expected));
    }
    CHECK_THROWS_AS(binarize(ScalarGrid(4, 4, 0.0), 1.0), InvalidInput);
}

TEST_CASE("downsample_max") {
    SUBCASE("all ones") {
        const ContourImage d = downsample_max(helpers::filled(4, 4, 1.0));
        CHECK(d.width() == 2);
        CHECK(d.height() == 2);
        CHECK(d.mass() == 4.0);
    }
    SUBCASE("corner pixel") {
        const ContourImage d = downsample_max(helpers::pixels(4, 4, {{3, 3}}));
        CHECK(d.at(1, 1) == 1.0);
        CHECK(d.mass() == 1.0);
    }
    SUBCASE("odd size against per-block max") {
        const auto v = helpers::uniform_values(25, 12);
        const ContourImage img(5, 5, v);
        const ContourImage d = downsample_max(img);
        REQUIRE(d.width() == 3);
        REQUIRE(d.height() == 3);
        for (int by = 0; by < 3; ++by) {
            for (int bx = 0; bx < 3; ++bx) {
                double m = 0.0;
                for (int y = 2 * by; y < std::min(5, 2 * by + 2); ++y)
                    for (int x = 2 * bx; x < std::min(5, 2 * bx + 2); ++x) m = std::max(m, img.at(x, y));
                CHECK(d.at(bx, by) == m);
            }
        }
    }
}

TEST_CASE("build_pyramid") {
    SUBCASE("five levels from 128") {
        const Pyramid p = build_pyramid(helpers::filled(128, 128, 0.0), 5);
        REQUIRE(p.count() == 5);
        const int sizes[] = {128, 64, 32, 16, 8};
        for (int i = 0; i < 5; ++i) {
            CHECK(p.levels[i].width() == sizes[i]);
            CHECK(p.levels[i].height() == sizes[i]);
        }
    }
    SUBCASE("one level is the input") {
        const ContourImage img(4, 4, helpers::uniform_values(16, 3));
        const Pyramid p = build_pyramid(img, 1);
        REQUIRE(p.count() == 1);
        CHECK(p.levels[0] == img);
    }
    SUBCASE("ceil halving") {
        const Pyramid p = build_pyramid(helpers::filled(100, 60, 0.0), 3);
        CHECK(p.levels[1].width() == 50);
        CHECK(p.levels[1].height() == 30);
        CHECK(p.levels[2].width() == 25);
        CHECK(p.levels[2].height() == 15);
    }
    SUBCASE("too deep") {
        CHECK_THROWS_AS(build_pyramid(helpers::filled(16, 16, 0.0), 4), InvalidConfig);
        CHECK(max_pyramid_levels(16, 16) == 3);
        CHECK(max_pyramid_levels(128, 128) == 6);
    }
}
