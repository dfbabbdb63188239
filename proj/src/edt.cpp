#include "contalign/edt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "contalign/errors.hpp"
#include "contalign/image_io.hpp"

namespace contalign {

DistanceField::DistanceField(int width, int height, std::vector<std::int64_t> squared)
    : width_(width), height_(height), sq_(std::move(squared)) {
    if (sq_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw InvalidInput("distance field size mismatch");
    }
    dist_.resize(sq_.size());
    for (std::size_t i = 0; i < sq_.size(); ++i) {
        dist_[i] = std::sqrt(static_cast<double>(sq_[i]));
    }
}

double DistanceField::max_value() const {
    return dist_.empty() ? 0.0 : *std::max_element(dist_.begin(), dist_.end());
}

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();

// Intersection abscissa of two parabolas kept as an exact fraction num/den (den > 0).
struct Fraction {
    std::int64_t num;
    std::int64_t den;
};

bool less_equal(const Fraction& a, const Fraction& b) {
    // Infinite sentinels are encoded with den == 0.
    if (a.den == 0) return a.num < 0 || (b.den == 0 && b.num > 0);
    if (b.den == 0) return b.num > 0;
    return a.num * b.den <= b.num * a.den;
}

bool less_than_int(const Fraction& a, std::int64_t q) {
    if (a.den == 0) return a.num < 0;
    return a.num < q * a.den;
}

// Lower envelope of parabolas f(i) + (x - i)^2 over the finite entries of f.
void envelope_1d(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& out,
                 std::vector<int>& v, std::vector<Fraction>& z) {
    const int n = static_cast<int>(f.size());
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n) + 1, Fraction{0, 0});
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = Fraction{-1, 0};
            z[1] = Fraction{1, 0};
            continue;
        }
        Fraction s{};
        while (true) {
            const int p = v[k];
            s = Fraction{(f[q] + std::int64_t{q} * q) - (f[p] + std::int64_t{p} * p),
                         2 * std::int64_t{q - p}};
            // z[0] is -inf, so k never drops below zero.
            if (!less_equal(s, z[k])) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = Fraction{1, 0};
    }
    out.assign(static_cast<std::size_t>(n), kInf);
    if (k < 0) return;
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (less_than_int(z[j + 1], q)) ++j;
        const std::int64_t d = q - v[j];
        out[q] = d * d + f[v[j]];
    }
}

void require_nonempty(const ContourImage& img) {
    if (img.count_above(kContourThreshold) == 0) {
        throw EmptyShape("distance transform of an image with no contour pixels is undefined");
    }
}

}  // namespace

DistanceField edt(const ContourImage& img) {
    require_nonempty(img);
    const int w = img.width();
    const int h = img.height();
    std::vector<std::int64_t> g(img.size(), kInf);

    // Pass 1: exact vertical distance within each column.
    for (int x = 0; x < w; ++x) {
        std::int64_t last = -1;
        for (int y = 0; y < h; ++y) {
            if (img.at(x, y) > kContourThreshold) last = y;
            if (last >= 0) g[img.index(x, y)] = y - last;
        }
        last = -1;
        for (int y = h - 1; y >= 0; --y) {
            if (img.at(x, y) > kContourThreshold) last = y;
            if (last >= 0) g[img.index(x, y)] = std::min(g[img.index(x, y)], last - y);
        }
    }

    // Pass 2: lower envelope along each row of squared column distances.
    std::vector<std::int64_t> sq(img.size(), kInf);
    std::vector<std::int64_t> f(static_cast<std::size_t>(w));
    std::vector<std::int64_t> row;
    std::vector<int> v;
    std::vector<Fraction> z;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int64_t d = g[img.index(x, y)];
            f[x] = d == kInf ? kInf : d * d;
        }
        envelope_1d(f, row, v, z);
        std::copy(row.begin(), row.end(), sq.begin() + static_cast<std::ptrdiff_t>(img.index(0, y)));
    }
    return DistanceField(w, h, std::move(sq));
}

DistanceField edt_bruteforce(const ContourImage& img) {
    require_nonempty(img);
    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (img.at(x, y) > kContourThreshold) pts.emplace_back(x, y);
        }
    }
    std::vector<std::int64_t> sq(img.size());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            std::int64_t best = kInf;
            for (const auto& [px, py] : pts) {
                const std::int64_t dx = x - px;
                const std::int64_t dy = y - py;
                best = std::min(best, dx * dx + dy * dy);
            }
            sq[img.index(x, y)] = best;
        }
    }
    return DistanceField(img.width(), img.height(), std::move(sq));
}

void dump_distance_pgm(const DistanceField& field, const std::filesystem::path& path) {
    const double maxd = field.max_value();
    const double scale = maxd > 0.0 ? maxd / 255.0 : 1.0;
    std::string out = "P5\n" + std::to_string(field.width()) + " " + std::to_string(field.height()) + "\n255\n";
    for (double d : field.data()) {
        out.push_back(static_cast<char>(io::to_byte(maxd > 0.0 ? d / maxd : 0.0)));
    }
    io::write_file_atomic(path, out);
    std::ostringstream side;
    side.precision(17);
    side << "# distance in pixels = gray level * scale\n"
         << "scale " << scale << "\n"
         << "max_distance " << maxd << "\n";
    io::write_file_atomic(path.string() + ".scale.txt", side.str());
}

}  // namespace contalign
