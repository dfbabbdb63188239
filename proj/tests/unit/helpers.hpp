#pragma once

#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

#include "contalign/raster.hpp"
#include "contalign/simulate.hpp"

namespace helpers {

inline contalign::ContourImage pixels(int w, int h, std::initializer_list<std::pair<int, int>> on) {
    std::vector<double> v(static_cast<std::size_t>(w) * h, 0.0);
    for (auto [x, y] : on) v[static_cast<std::size_t>(y) * w + x] = 1.0;
    return contalign::ContourImage(w, h, std::move(v));
}

inline contalign::ContourImage filled(int w, int h, double value) {
    return contalign::ContourImage(w, h, std::vector<double>(static_cast<std::size_t>(w) * h, value));
}

inline std::vector<double> uniform_values(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    contalign::Rng rng(seed, "test");
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace helpers
