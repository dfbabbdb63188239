#include "contalign/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "contalign/errors.hpp"

namespace contalign::io {

namespace fs = std::filesystem;

std::uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255)

namespace {

void skip_ws_and_comments(const std::string& s, std::size_t& pos) {
    while (pos < s.size()) {
        if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
}

int read_header_int(const std::string& s, std::size_t& pos) {
    skip_ws_and_comments(s, pos);
    const std::size_t start = pos;
    long v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        v = v * 10 + (s[pos] - '0');
        if (v > (1 << 24)) throw ParseError("PGM header value too large", start);
        ++pos;
    }
    if (pos == start) throw ParseError("expected integer in PGM header", start);
    return static_cast<int>(v);
}

}  // namespace

ContourImage read_pgm(const fs::path& path) {
    const std::string s = read_file(path);
    if (s.size() < 2 || s[0] != 'P' || s[1] != '5') throw ParseError("not a binary PGM (P5)", 0);
    std::size_t pos = 2;
    const int w = read_header_int(s, pos);
    const int h = read_header_int(s, pos);
    const int maxval = read_header_int(s, pos);
    if (maxval != 255) throw ParseError("only 8-bit PGM (maxval 255) is supported", pos);
    ++pos;  // single whitespace after maxval
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (s.size() < pos + n) throw ParseError("truncated PGM payload", s.size());
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = static_cast<unsigned char>(s[pos + i]) / 255.0;
    }
    return ContourImage(w, h, std::move(data));
}

void write_pgm(const fs::path& path, const ContourImage& img) {
    std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    out.reserve(out.size() + img.size());
    for (double v : img.data()) out.push_back(static_cast<char>(to_byte(v)));
    write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// PNG via libpng's simplified API

namespace {

std::vector<std::uint8_t> png_read_format(const fs::path& path, std::uint32_t format, int& w, int& h) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + image.message);
    }
    image.format = format;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    w = static_cast<int>(image.width);
    h = static_cast<int>(image.height);
    return buf;
}

void png_write_format(const fs::path& path, std::uint32_t format, int w, int h,
                      const std::vector<std::uint8_t>& buf) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = format;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, buf.data(), 0, nullptr)) {
        throw IoError("cannot encode PNG: " + std::string(image.message));
    }
    std::string bytes(size, '\0');
    if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, buf.data(), 0, nullptr)) {
        throw IoError("cannot encode PNG: " + std::string(image.message));
    }
    bytes.resize(size);
    write_file_atomic(path, bytes);
}

}  // namespace

ContourImage read_png_gray(const fs::path& path) {
    int w = 0, h = 0;
    const auto buf = png_read_format(path, PNG_FORMAT_GRAY, w, h);
    std::vector<double> data(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) data[i] = buf[i] / 255.0;
    return ContourImage(w, h, std::move(data));
}

void write_png_gray(const fs::path& path, const ContourImage& img) {
    std::vector<std::uint8_t> buf(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) buf[i] = to_byte(img[i]);
    png_write_format(path, PNG_FORMAT_GRAY, img.width(), img.height(), buf);
}

void write_png_rgb(const fs::path& path, const RgbImage& img) {
    png_write_format(path, PNG_FORMAT_RGB, img.width, img.height, img.pixels);
}

RgbImage read_png_rgb(const fs::path& path) {
    RgbImage out;
    out.pixels = png_read_format(path, PNG_FORMAT_RGB, out.width, out.height);
    return out;
}

ContourImage read_image(const fs::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".png") return read_png_gray(path);
    throw IoError("unsupported image extension '" + ext + "' (use .pgm or .png)");
}

void write_image(const fs::path& path, const ContourImage& img) {
    const auto ext = path.extension().string();
    if (ext == ".pgm") return write_pgm(path, img);
    if (ext == ".png") return write_png_gray(path, img);
    throw IoError("unsupported image extension '" + ext + "' (use .pgm or .png)");
}

}  // namespace contalign::io
