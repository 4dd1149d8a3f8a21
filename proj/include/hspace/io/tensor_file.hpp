#pragma once

// "NTSR" tensor container: magic, format version u32, dtype tag u32
// (0 = f32, 1 = f64), ndim u32, dims as u64 sequence, then the payload as
// little-endian contiguous row-major values. Round trips are bit-exact.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/core/matrix.hpp"

namespace hspace::io {

enum class Dtype : std::uint32_t { f32 = 0, f64 = 1 };

constexpr std::uint32_t kTensorFormatVersion = 1;

struct TensorFile {
    Dtype dtype = Dtype::f64;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> payload;  // raw little-endian bytes

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
    std::size_t element_size() const { return dtype == Dtype::f32 ? 4 : 8; }

    static TensorFile from_f64(std::vector<std::uint64_t> dims, const double* data) {
        TensorFile t;
        t.dtype = Dtype::f64;
        t.dims = std::move(dims);
        t.payload.resize(t.element_count() * 8);
        encode(data, t.element_count(), t.payload.data());
        return t;
    }
    static TensorFile from_f32(std::vector<std::uint64_t> dims, const float* data) {
        TensorFile t;
        t.dtype = Dtype::f32;
        t.dims = std::move(dims);
        t.payload.resize(t.element_count() * 4);
        encode(data, t.element_count(), t.payload.data());
        return t;
    }

    std::vector<double> as_f64() const {
        const std::uint64_t n = element_count();
        std::vector<double> out(n);
        if (dtype == Dtype::f64) {
            for (std::uint64_t i = 0; i < n; ++i) out[i] = decode_one<double>(payload.data() + 8 * i);
        } else {
            for (std::uint64_t i = 0; i < n; ++i) out[i] = decode_one<float>(payload.data() + 4 * i);
        }
        return out;
    }

private:
    template <typename T>
    static void encode(const T* src, std::uint64_t n, std::uint8_t* dst) {
        for (std::uint64_t i = 0; i < n; ++i) {
            typename std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t> bits;
            std::memcpy(&bits, src + i, sizeof(T));
            for (std::size_t b = 0; b < sizeof(T); ++b)
                dst[i * sizeof(T) + b] = static_cast<std::uint8_t>(bits >> (8 * b));
        }
    }
    template <typename T>
    static T decode_one(const std::uint8_t* src) {
        typename std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t> bits = 0;
        for (std::size_t b = 0; b < sizeof(T); ++b)
            bits |= static_cast<decltype(bits)>(src[b]) << (8 * b);
        T v;
        std::memcpy(&v, &bits, sizeof(T));
        return v;
    }
};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}
inline std::uint32_t get_u32(std::istream& is) {
    std::uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("tensor file: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    std::uint8_t b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("tensor file: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
}  // namespace detail

inline void write_tensor(const std::string& path, const TensorFile& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write("NTSR", 4);
    detail::put_u32(os, kTensorFormatVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(t.dtype));
    detail::put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_u64(os, d);
    if (t.payload.size() != t.element_count() * t.element_size())
        throw std::runtime_error("tensor file: payload length does not match dims");
    os.write(reinterpret_cast<const char*>(t.payload.data()),
             static_cast<std::streamsize>(t.payload.size()));
    if (!os) throw std::runtime_error("tensor file: write failed: " + path);
}

inline TensorFile read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open tensor file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NTSR", 4) != 0)
        throw std::runtime_error("tensor file: bad magic: " + path);
    const std::uint32_t version = detail::get_u32(is);
    if (version != kTensorFormatVersion)
        throw std::runtime_error("tensor file: unsupported version");
    const std::uint32_t dtype = detail::get_u32(is);
    if (dtype > 1) throw std::runtime_error("tensor file: unknown dtype tag");
    const std::uint32_t ndim = detail::get_u32(is);
    TensorFile t;
    t.dtype = static_cast<Dtype>(dtype);
    t.dims.resize(ndim);
    for (auto& d : t.dims) d = detail::get_u64(is);
    t.payload.resize(t.element_count() * t.element_size());
    is.read(reinterpret_cast<char*>(t.payload.data()),
            static_cast<std::streamsize>(t.payload.size()));
    if (static_cast<std::size_t>(is.gcount()) != t.payload.size())
        throw std::runtime_error("tensor file: truncated payload: " + path);
    return t;
}

// Convenience wrappers for the common shapes.

inline void write_matrix(const std::string& path, const DenseMatrix& m) {
    write_tensor(path, TensorFile::from_f64(
        {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, m.data()));
}

inline DenseMatrix read_matrix(const std::string& path) {
    TensorFile t = read_tensor(path);
    if (t.dims.size() != 2) throw std::runtime_error("expected 2-d tensor: " + path);
    DenseMatrix m(static_cast<Index>(t.dims[0]), static_cast<Index>(t.dims[1]));
    auto v = t.as_f64();
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

inline void write_vector(const std::string& path, const Vector& v) {
    write_tensor(path, TensorFile::from_f64({static_cast<std::uint64_t>(v.size())}, v.data()));
}

inline Vector read_vector(const std::string& path) {
    TensorFile t = read_tensor(path);
    if (t.dims.size() != 1) throw std::runtime_error("expected 1-d tensor: " + path);
    auto vals = t.as_f64();
    Vector v(static_cast<Index>(vals.size()));
    std::copy(vals.begin(), vals.end(), v.data());
    return v;
}

}  // namespace hspace::io
