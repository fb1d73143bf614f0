#pragma once

// Binary PPM (P6) color images and PGM (P5) gray maps, 8-bit, maxval 255.
// Tensors use [3,h,w] (or [h,w]) float layout with values in [0,1].

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "poseflow/errors.hpp"
#include "poseflow/tensor.hpp"

namespace poseflow {

namespace detail {

inline int read_pnm_token(std::istream& is) {
    // skips whitespace and '#' comments
    while (true) {
        int c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
    int v = 0;
    if (!(is >> v)) throw ParseError("pnm: missing numeric header token");
    return v;
}

inline unsigned char to_byte(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace detail

template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& image) {
    if (image.rank() != 3 || image.size(0) != 3) throw ArgumentError("write_ppm: expects [3,h,w]");
    const Dim h = image.size(1), w = image.size(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_ppm: cannot open " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    const T* v = image.data();
    std::vector<unsigned char> row(static_cast<std::size_t>(w * 3));
    for (Dim y = 0; y < h; ++y) {
        for (Dim x = 0; x < w; ++x)
            for (Dim c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x * 3 + c)] =
                    detail::to_byte(static_cast<double>(v[(c * h + y) * w + x]));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

template <typename T>
Tensor<T> read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_ppm: cannot open " + path);
    std::string magic(2, '\0');
    is.read(magic.data(), 2);
    if (magic != "P6") throw ParseError("read_ppm: expected P6 magic in " + path);
    const int w = detail::read_pnm_token(is);
    const int h = detail::read_pnm_token(is);
    const int maxval = detail::read_pnm_token(is);
    if (maxval != 255) throw ParseError("read_ppm: only maxval 255 supported");
    is.get();  // single whitespace after header
    std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3));
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw ParseError("read_ppm: truncated pixel data in " + path);
    std::vector<T> v(raw.size());
    for (Dim y = 0; y < h; ++y)
        for (Dim x = 0; x < w; ++x)
            for (Dim c = 0; c < 3; ++c)
                v[static_cast<std::size_t>((c * h + y) * w + x)] =
                    static_cast<T>(raw[static_cast<std::size_t>((y * w + x) * 3 + c)]) / T(255);
    return Tensor<T>({3, h, w}, std::move(v), false);
}

template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& map) {
    if (map.rank() != 2) throw ArgumentError("write_pgm: expects [h,w]");
    const Dim h = map.size(0), w = map.size(1);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_pgm: cannot open " + path);
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    const T* v = map.data();
    for (Dim y = 0; y < h; ++y) {
        for (Dim x = 0; x < w; ++x)
            row[static_cast<std::size_t>(x)] = detail::to_byte(static_cast<double>(v[y * w + x]));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

template <typename T>
Tensor<T> read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_pgm: cannot open " + path);
    std::string magic(2, '\0');
    is.read(magic.data(), 2);
    if (magic != "P5") throw ParseError("read_pgm: expected P5 magic in " + path);
    const int w = detail::read_pnm_token(is);
    const int h = detail::read_pnm_token(is);
    const int maxval = detail::read_pnm_token(is);
    if (maxval != 255) throw ParseError("read_pgm: only maxval 255 supported");
    is.get();
    std::vector<unsigned char> raw(static_cast<std::size_t>(w * h));
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw ParseError("read_pgm: truncated pixel data in " + path);
    std::vector<T> v(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) v[i] = static_cast<T>(raw[i]) / T(255);
    return Tensor<T>({h, w}, std::move(v), false);
}

// Mirrors the PPM write/read round trip in memory: 8-bit quantization.
template <typename T>
Tensor<T> quantize8(const Tensor<T>& image) {
    std::vector<T> v(image.values());
    for (auto& x : v) x = static_cast<T>(detail::to_byte(static_cast<double>(x))) / T(255);
    return Tensor<T>(image.shape(), std::move(v), false);
}

}  // namespace poseflow
