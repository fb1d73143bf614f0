#pragma once

// Binary tensor snapshot: magic "TNSR", little-endian u32 rank, u32 extents,
// float32 payload in row-major order.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "poseflow/errors.hpp"
#include "poseflow/tensor.hpp"

namespace poseflow {

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ParseError(std::string("tensor load: truncated ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline float read_f32(std::istream& is, const char* what) {
    const std::uint32_t bits = read_u32(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

template <typename T>
void dump_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write("TNSR", 4);
    detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (Dim d : t.shape()) detail::write_u32(os, static_cast<std::uint32_t>(d));
    for (T v : t.values()) detail::write_f32(os, static_cast<float>(v));
}

template <typename T>
Tensor<T> load_tensor(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "TNSR", 4) != 0)
        throw ParseError("tensor load: bad magic, expected TNSR");
    const std::uint32_t rank = detail::read_u32(is, "rank");
    if (rank > 8) throw DataError("tensor load: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<Dim>(detail::read_u32(is, "extent"));
    const Dim n = shape_numel(shape);
    std::vector<T> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = static_cast<T>(detail::read_f32(is, "payload"));
    return Tensor<T>(std::move(shape), std::move(data), false);
}

template <typename T>
void dump_tensor_file(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("tensor dump: cannot open " + path);
    dump_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("tensor load: cannot open " + path);
    return load_tensor<T>(is);
}

}  // namespace poseflow
