#include "contalign/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "contalign/errors.hpp"
#include "contalign/eval.hpp"
#include "contalign/image_io.hpp"

namespace contalign {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed, std::string_view stream) : engine_(splitmix64(seed ^ fnv1a64(stream))) {}

std::uint64_t Rng::next() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw InvalidConfig("uniform_int: empty range");
    const std::uint64_t range = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo) + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return static_cast<int>(static_cast<std::int64_t>(lo) + static_cast<std::int64_t>(v % range));
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::string to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::ellipse: return "ellipse";
        case ShapeKind::rectangle: return "rectangle";
        case ShapeKind::polygon: return "polygon";
        case ShapeKind::stroke: return "stroke";
    }
    return "?";
}

ShapeKind shape_kind_from_string(const std::string& s) {
    for (auto k : {ShapeKind::ellipse, ShapeKind::rectangle, ShapeKind::polygon, ShapeKind::stroke}) {
        if (to_string(k) == s) return k;
    }
    throw InvalidConfig("unknown shape kind '" + s + "' (ellipse, rectangle, polygon, stroke)");
}

// ---------------------------------------------------------------------------
// Contour rasterization

namespace {

constexpr int kMargin = 16;

struct Pixel {
    int x, y;
    friend bool operator==(const Pixel&, const Pixel&) = default;
};

bool adjacent8(Pixel a, Pixel b) { return std::abs(a.x - b.x) <= 1 && std::abs(a.y - b.y) <= 1; }

/// Samples a parametric curve densely, keeps each new pixel once, then drops
/// pixels whose neighbours along the chain already touch (corner pixels).
template <class Curve>
std::vector<Pixel> trace_chain(Curve curve, double length, bool closed) {
    const int samples = std::max(64, static_cast<int>(std::ceil(length * 8.0)));
    std::vector<Pixel> chain;
    for (int k = 0; k <= samples; ++k) {
        const auto [x, y] = curve(static_cast<double>(k) / samples);
        const Pixel p{static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))};
        if (chain.empty() || !(chain.back() == p)) chain.push_back(p);
    }
    if (closed && chain.size() > 1 && chain.front() == chain.back()) chain.pop_back();
    bool changed = true;
    while (changed && chain.size() > 3) {
        changed = false;
        for (std::size_t i = 0; i < chain.size() && chain.size() > 3; ++i) {
            const bool ends = !closed && (i == 0 || i + 1 == chain.size());
            if (ends) continue;
            const Pixel prev = chain[(i + chain.size() - 1) % chain.size()];
            const Pixel next = chain[(i + 1) % chain.size()];
            if (!(prev == next) && adjacent8(prev, next)) {
                chain.erase(chain.begin() + static_cast<long>(i));
                changed = true;
            }
        }
    }
    // A closed curve can revisit pixels near sharp vertices; duplicates are harmless.
    return chain;
}

ContourImage rasterize(const std::vector<Pixel>& pixels, int w, int h) {
    for (const Pixel& p : pixels) {
        if (p.x < kMargin || p.y < kMargin || p.x > w - 1 - kMargin || p.y > h - 1 - kMargin) {
            throw InvalidConfig("shape does not fit the canvas with a 16-pixel margin");
        }
    }
    std::vector<double> data(static_cast<std::size_t>(w) * h, 0.0);
    for (const Pixel& p : pixels) data[static_cast<std::size_t>(p.y) * w + p.x] = 1.0;
    return ContourImage(w, h, std::move(data));
}

}  // namespace

ContourImage gen_contour(ShapeKind kind, const ContourParams& pr, std::uint64_t seed) {
    if (pr.width < 2 * kMargin + 2 || pr.height < 2 * kMargin + 2) {
        throw InvalidConfig("canvas too small for a 16-pixel margin");
    }
    constexpr double two_pi = 2.0 * std::numbers::pi;
    switch (kind) {
        case ShapeKind::ellipse: {
            if (!(pr.rx > 0.0) || !(pr.ry > 0.0)) throw InvalidConfig("ellipse radii must be positive");
            const double c = std::cos(pr.angle), s = std::sin(pr.angle);
            auto curve = [&](double t) {
                const double ex = pr.rx * std::cos(two_pi * t), ey = pr.ry * std::sin(two_pi * t);
                return std::pair{pr.cx + c * ex - s * ey, pr.cy + s * ex + c * ey};
            };
            return rasterize(trace_chain(curve, two_pi * std::max(pr.rx, pr.ry), true), pr.width, pr.height);
        }
        case ShapeKind::rectangle: {
            if (pr.rect_w < 2 || pr.rect_h < 2) throw InvalidConfig("rectangle sides must be >= 2");
            const int x0 = static_cast<int>(std::lround(pr.cx - pr.rect_w / 2.0));
            const int y0 = static_cast<int>(std::lround(pr.cy - pr.rect_h / 2.0));
            std::vector<Pixel> px;
            for (int x = x0; x < x0 + pr.rect_w; ++x) {
                px.push_back({x, y0});
                px.push_back({x, y0 + pr.rect_h - 1});
            }
            for (int y = y0 + 1; y < y0 + pr.rect_h - 1; ++y) {
                px.push_back({x0, y});
                px.push_back({x0 + pr.rect_w - 1, y});
            }
            return rasterize(px, pr.width, pr.height);
        }
        case ShapeKind::polygon: {
            if (pr.sides < 3) throw InvalidConfig("polygon needs at least 3 sides");
            Rng rng(seed, "polygon");
            std::vector<std::pair<double, double>> v;
            const double phase = rng.uniform(0.0, two_pi);
            for (int k = 0; k < pr.sides; ++k) {
                const double a = phase + two_pi * (k + rng.uniform(-0.25, 0.25)) / pr.sides;
                const double r = rng.uniform(0.6, 1.0);
                v.emplace_back(pr.cx + r * pr.rx * std::cos(a), pr.cy + r * pr.ry * std::sin(a));
            }
            double len = 0.0;
            for (int k = 0; k < pr.sides; ++k) {
                const auto& a = v[k];
                const auto& b = v[(k + 1) % pr.sides];
                len += std::hypot(b.first - a.first, b.second - a.second);
            }
            const int n = pr.sides;
            auto curve = [&](double t) {
                const double u = t * n;
                const int k = std::min(static_cast<int>(u), n - 1);
                const double f = u - k;
                const auto& a = v[k];
                const auto& b = v[(k + 1) % n];
                return std::pair{a.first + f * (b.first - a.first), a.second + f * (b.second - a.second)};
            };
            return rasterize(trace_chain(curve, len * 2.0, true), pr.width, pr.height);
        }
        case ShapeKind::stroke: {
            Rng rng(seed, "stroke");
            std::pair<double, double> p[4];
            for (auto& q : p) q = {pr.cx + rng.uniform(-pr.rx, pr.rx), pr.cy + rng.uniform(-pr.ry, pr.ry)};
            auto curve = [&](double t) {
                const double a = (1 - t) * (1 - t) * (1 - t), b = 3 * (1 - t) * (1 - t) * t;
                const double c = 3 * (1 - t) * t * t, d = t * t * t;
                return std::pair{a * p[0].first + b * p[1].first + c * p[2].first + d * p[3].first,
                                 a * p[0].second + b * p[1].second + c * p[2].second + d * p[3].second};
            };
            return rasterize(trace_chain(curve, 4.0 * (pr.rx + pr.ry), false), pr.width, pr.height);
        }
    }
    throw InvalidConfig("unknown shape kind");
}

ContourImage random_contour(std::uint64_t seed, int width, int height) {
    Rng rng(seed, "shape");
    ContourParams p;
    p.width = width;
    p.height = height;
    const double half = std::min(width, height) / 2.0;
    p.cx = width / 2.0 + rng.uniform(-0.05, 0.05) * width;
    p.cy = height / 2.0 + rng.uniform(-0.05, 0.05) * height;
    p.rx = half * rng.uniform(0.35, 0.55);
    p.ry = half * rng.uniform(0.35, 0.55);
    p.angle = rng.uniform(0.0, std::numbers::pi);
    p.rect_w = static_cast<int>(2 * p.rx);
    p.rect_h = static_cast<int>(2 * p.ry);
    p.sides = rng.uniform_int(3, 8);
    const int pick = rng.uniform_int(0, 2);
    const ShapeKind kind = pick == 0 ? ShapeKind::ellipse : pick == 1 ? ShapeKind::rectangle : ShapeKind::polygon;
    return gen_contour(kind, p, rng.next());
}

// ---------------------------------------------------------------------------
// MNIST

namespace {

std::uint32_t be32(const std::string& b, std::size_t off) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 3]));
}

ContourImage digit_contour(const unsigned char* px, int rows, int cols) {
    constexpr int N = 128;
    auto at = [&](int x, int y) {
        x = std::clamp(x, 0, cols - 1);
        y = std::clamp(y, 0, rows - 1);
        return px[static_cast<std::size_t>(y) * cols + x] / 255.0;
    };
    std::vector<std::uint8_t> fg(static_cast<std::size_t>(N) * N, 0);
    for (int y = 0; y < N; ++y) {
        for (int x = 0; x < N; ++x) {
            const double sx = (x + 0.5) * cols / N - 0.5;
            const double sy = (y + 0.5) * rows / N - 0.5;
            const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const double v = (1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x0 + 1, y0) +
                             (1 - fx) * fy * at(x0, y0 + 1) + fx * fy * at(x0 + 1, y0 + 1);
            fg[static_cast<std::size_t>(y) * N + x] = v > 0.5;
        }
    }
    std::vector<double> out(fg.size(), 0.0);
    auto on = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < N && y < N && fg[static_cast<std::size_t>(y) * N + x];
    };
    for (int y = 0; y < N; ++y) {
        for (int x = 0; x < N; ++x) {
            if (on(x, y) && (!on(x - 1, y) || !on(x + 1, y) || !on(x, y - 1) || !on(x, y + 1))) {
                out[static_cast<std::size_t>(y) * N + x] = 1.0;
            }
        }
    }
    return ContourImage(N, N, std::move(out));
}

}  // namespace

std::vector<ContourImage> parse_mnist_contours(const std::string& bytes, std::size_t limit) {
    if (bytes.size() < 4) throw ParseError("IDX3 header truncated", bytes.size());
    const std::uint32_t magic = be32(bytes, 0);
    if (magic != 2051) {
        throw ParseError("bad IDX3 magic: expected 2051 (0x00000803), got " + std::to_string(magic), 0);
    }
    if (bytes.size() < 16) throw ParseError("IDX3 header truncated", bytes.size());
    const std::uint32_t count = be32(bytes, 4);
    const std::uint32_t rows = be32(bytes, 8);
    const std::uint32_t cols = be32(bytes, 12);
    if (count > 0 && (rows == 0 || cols == 0)) throw ParseError("IDX3 image size is zero", 8);
    const std::size_t image_bytes = static_cast<std::size_t>(rows) * cols;
    const std::size_t need = 16 + static_cast<std::size_t>(count) * image_bytes;
    if (bytes.size() < need) throw ParseError("IDX3 payload truncated", bytes.size());
    std::size_t n = count;
    if (limit > 0) n = std::min(n, limit);
    std::vector<ContourImage> out;
    out.reserve(n);
    const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + 16;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(digit_contour(base + i * image_bytes, static_cast<int>(rows), static_cast<int>(cols)));
    }
    return out;
}

std::vector<ContourImage> load_mnist_contours(const std::filesystem::path& path, std::size_t limit) {
    return parse_mnist_contours(io::read_file(path), limit);
}

// ---------------------------------------------------------------------------
// Pairs

void PairSpec::validate() const {
    if (!(density >= 0.0 && density < 1.0)) throw InvalidConfig("noise density must be in [0, 1)");
    if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) throw InvalidConfig("warp magnitude must be >= 0");
    if (width < 32 || height < 32) throw InvalidConfig("pair size must be at least 32");
    if (occlusions_min < 0 || occlusions_max < occlusions_min) throw InvalidConfig("bad occlusion count range");
    if (box_min < 1 || box_max < box_min) throw InvalidConfig("bad occlusion box size range");
    if (warp_grid < 2) throw InvalidConfig("warp grid must be >= 2");
    if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidConfig("threshold must be in (0, 1)");
}

void to_json(nlohmann::json& j, const PairSpec& s) {
    j = nlohmann::json{{"seed", s.seed},
                       {"magnitude", s.magnitude},
                       {"density", s.density},
                       {"occlusions_min", s.occlusions_min},
                       {"occlusions_max", s.occlusions_max},
                       {"box_min", s.box_min},
                       {"box_max", s.box_max},
                       {"width", s.width},
                       {"height", s.height},
                       {"warp_grid", s.warp_grid},
                       {"threshold", s.threshold}};
}

void from_json(const nlohmann::json& j, PairSpec& s) {
    s = PairSpec{};
    for (const auto& [key, v] : j.items()) {
        if (key == "seed") s.seed = v.get<std::uint64_t>();
        else if (key == "magnitude") s.magnitude = v.get<double>();
        else if (key == "density") s.density = v.get<double>();
        else if (key == "occlusions_min") s.occlusions_min = v.get<int>();
        else if (key == "occlusions_max") s.occlusions_max = v.get<int>();
        else if (key == "box_min") s.box_min = v.get<int>();
        else if (key == "box_max") s.box_max = v.get<int>();
        else if (key == "width") s.width = v.get<int>();
        else if (key == "height") s.height = v.get<int>();
        else if (key == "warp_grid") s.warp_grid = v.get<int>();
        else if (key == "threshold") s.threshold = v.get<double>();
        else throw InvalidConfig("unknown pair spec key '" + key + "'");
    }
    s.validate();
}

WarpField SimPair::gt_field() const {
    const TpsControlGrid grid(warp_grid, target.width(), target.height());
    return tps_field(gt_warp, grid, target.width(), target.height());
}

TpsParams random_tps(std::uint64_t seed, double magnitude, const TpsControlGrid& grid) {
    if (!(magnitude >= 0.0)) throw InvalidConfig("warp magnitude must be >= 0");
    Rng rng(seed, "warp");
    TpsParams p = TpsParams::identity(grid);
    for (Vec2& o : p.offsets) {
        o.x = rng.uniform(-magnitude, magnitude);
        o.y = rng.uniform(-magnitude, magnitude);
    }
    return p;
}

ContourImage corrupt(const ContourImage& img, const PairSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int w = img.width();
    const int h = img.height();
    std::vector<double> out(img.data().begin(), img.data().end());
    std::vector<std::size_t> contour;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] > 0.0) contour.push_back(i);
    }
    Rng occ(seed, "occlusion");
    const int boxes = occ.uniform_int(spec.occlusions_min, spec.occlusions_max);
    for (int b = 0; b < boxes; ++b) {
        const int bw = occ.uniform_int(spec.box_min, spec.box_max);
        const int bh = occ.uniform_int(spec.box_min, spec.box_max);
        int cx, cy;
        if (!contour.empty()) {
            const std::size_t c = contour[static_cast<std::size_t>(occ.uniform_int(0, static_cast<int>(contour.size()) - 1))];
            cx = static_cast<int>(c % w);
            cy = static_cast<int>(c / w);
        } else {
            cx = occ.uniform_int(0, w - 1);
            cy = occ.uniform_int(0, h - 1);
        }
        const int x0 = std::max(0, cx - bw / 2), x1 = std::min(w - 1, cx - bw / 2 + bw - 1);
        const int y0 = std::max(0, cy - bh / 2), y1 = std::min(h - 1, cy - bh / 2 + bh - 1);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) out[static_cast<std::size_t>(y) * w + x] = 0.0;
        }
    }
    Rng noise(seed, "noise");
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double u = noise.uniform();
        if (out[i] <= 0.0 && u < spec.density) out[i] = 1.0;
    }
    return ContourImage(w, h, std::move(out));
}

SimPair make_pair(const ContourImage& base, const PairSpec& spec) {
    spec.validate();
    if (base.width() != spec.width || base.height() != spec.height) {
        throw InvalidInput("base image is " + std::to_string(base.width()) + "x" + std::to_string(base.height()) +
                           " but the pair spec asks for " + std::to_string(spec.width) + "x" +
                           std::to_string(spec.height));
    }
    SimPair p;
    p.target = base;
    p.warp_grid = spec.warp_grid;
    const TpsControlGrid grid(spec.warp_grid, base.width(), base.height());
    p.gt_warp = random_tps(spec.seed, spec.magnitude, grid);
    p.clean_source = binarize(apply_warp(base, tps_field(p.gt_warp, grid, base.width(), base.height())),
                              spec.threshold);
    if (p.clean_source.mass() <= 0.0) throw DegeneratePair("warped contour left the canvas");
    p.source = corrupt(p.clean_source, spec, spec.seed);
    return p;
}

double initial_score(const SimPair& pair) { return asym_chamfer(pair.clean_source, pair.target); }

CalibrationResult calibrate_magnitude(double target_score, int pairs, std::uint64_t seed, PairSpec spec,
                                      int iterations) {
    if (pairs < 1) throw InvalidConfig("calibration needs at least one pair");
    std::vector<ContourImage> bases;
    for (int i = 0; i < pairs; ++i) bases.push_back(random_contour(seed + i, spec.width, spec.height));
    auto mean_score = [&](double m) {
        double s = 0.0;
        int n = 0;
        for (int i = 0; i < pairs; ++i) {
            PairSpec ps = spec;
            ps.seed = seed + static_cast<std::uint64_t>(i);
            ps.magnitude = m;
            try {
                s += initial_score(make_pair(bases[i], ps));
                ++n;
            } catch (const DegeneratePair&) {
            }
        }
        return n ? s / n : 0.0;
    };
    double lo = 0.0, hi = 64.0;
    for (int it = 0; it < iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mean_score(mid) < target_score) lo = mid;
        else hi = mid;
    }
    const double m = 0.5 * (lo + hi);
    return {m, mean_score(m)};
}

}  // namespace contalign
