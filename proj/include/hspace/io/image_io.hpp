#pragma once

// PGM (P5) read/write and a minimal 8-bit grayscale PNG writer over zlib.
// PNG output is deterministic for a fixed zlib; the PGM path is the one used
// for bit-exact round trips and mask input.

#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/diffusion/image.hpp"

namespace hspace::io {

inline void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      int width, int height) {
    if (static_cast<std::size_t>(width) * height != pixels.size())
        throw std::invalid_argument("write_pgm: pixel count mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "P5\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
    if (!os) throw std::runtime_error("write_pgm: write failed: " + path);
}

inline void write_pgm(const std::string& path, const ImageTensor& img) {
    if (img.c != 1) throw std::invalid_argument("write_pgm: single-channel images only");
    std::vector<std::uint8_t> px(img.data.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize8(img.data[i]);
    write_pgm(path, px, img.w, img.h);
}

namespace detail {
inline int next_pgm_token(std::istream& is) {
    // skips whitespace and '#' comments per the netpbm spec
    int ch = is.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = is.get();
        } else if (!std::isspace(ch)) {
            return ch;
        }
        ch = is.get();
    }
    return EOF;
}
inline long read_pgm_int(std::istream& is) {
    int ch = next_pgm_token(is);
    if (ch == EOF || !std::isdigit(ch)) throw std::runtime_error("pgm: malformed header");
    long v = 0;
    while (ch != EOF && std::isdigit(ch)) {
        v = v * 10 + (ch - '0');
        ch = is.get();
    }
    return v;
}
}  // namespace detail

struct PgmImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

inline PgmImage read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open pgm: " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("pgm: not a P5 file: " + path);
    PgmImage img;
    img.width = static_cast<int>(detail::read_pgm_int(is));
    img.height = static_cast<int>(detail::read_pgm_int(is));
    const long maxval = detail::read_pgm_int(is);
    if (maxval <= 0 || maxval > 255) throw std::runtime_error("pgm: only 8-bit maxval supported");
    // read_pgm_int consumed the single whitespace byte after maxval
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    is.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(is.gcount()) != img.pixels.size())
        throw std::runtime_error("pgm: truncated pixel data: " + path);
    return img;
}

// ---- PNG (8-bit grayscale, filter 0 rows, single IDAT) ----

namespace detail {
inline void png_chunk(std::ostream& os, const char type[4], const std::vector<std::uint8_t>& body) {
    auto put_be32 = [&os](std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    put_be32(static_cast<std::uint32_t>(body.size()));
    os.write(type, 4);
    if (!body.empty()) os.write(reinterpret_cast<const char*>(body.data()),
                                static_cast<std::streamsize>(body.size()));
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!body.empty()) crc = crc32(crc, body.data(), static_cast<uInt>(body.size()));
    put_be32(static_cast<std::uint32_t>(crc));
}
}  // namespace detail

inline void write_png_gray(const std::string& path, const std::vector<std::uint8_t>& pixels,
                           int width, int height) {
    if (static_cast<std::size_t>(width) * height != pixels.size())
        throw std::invalid_argument("write_png_gray: pixel count mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<std::uint8_t> ihdr(13);
    auto put_be32_at = [&ihdr](int off, std::uint32_t v) {
        ihdr[off] = static_cast<std::uint8_t>(v >> 24);
        ihdr[off + 1] = static_cast<std::uint8_t>(v >> 16);
        ihdr[off + 2] = static_cast<std::uint8_t>(v >> 8);
        ihdr[off + 3] = static_cast<std::uint8_t>(v);
    };
    put_be32_at(0, static_cast<std::uint32_t>(width));
    put_be32_at(4, static_cast<std::uint32_t>(height));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 0;   // grayscale
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    detail::png_chunk(os, "IHDR", ihdr);

    std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * (width + 1));
    for (int y = 0; y < height; ++y) {
        raw[static_cast<std::size_t>(y) * (width + 1)] = 0;  // filter: none
        std::copy(pixels.begin() + static_cast<std::ptrdiff_t>(y) * width,
                  pixels.begin() + static_cast<std::ptrdiff_t>(y + 1) * width,
                  raw.begin() + static_cast<std::ptrdiff_t>(y) * (width + 1) + 1);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png_gray: deflate failed");
    idat.resize(bound);
    detail::png_chunk(os, "IDAT", idat);
    detail::png_chunk(os, "IEND", {});
    if (!os) throw std::runtime_error("write_png_gray: write failed: " + path);
}

inline void write_png_gray(const std::string& path, const ImageTensor& img) {
    if (img.c != 1) throw std::invalid_argument("write_png_gray: single-channel images only");
    std::vector<std::uint8_t> px(img.data.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize8(img.data[i]);
    write_png_gray(path, px, img.w, img.h);
}

}  // namespace hspace::io
