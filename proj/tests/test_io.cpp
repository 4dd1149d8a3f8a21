// Serialization round trips: binary tensor files, PGM, and PNG output (the
// PNG payload is independently re-inflated with zlib and the scanline layout
// checked byte by byte).

#include <catch2/catch_amalgamated.hpp>
#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "hspace/core/rng.hpp"
#include "hspace/diffusion/image.hpp"
#include "hspace/io/image_io.hpp"
#include "hspace/io/tensor_file.hpp"

using hspace::ImageTensor;
using hspace::Rng;

namespace {

std::string tmp_dir() {
    static const std::string dir = [] {
        std::string d = "tmp_test_io";
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace

TEST_CASE("tensor files round trip from scalars to 4-d stacks") {
    Rng rng(11);
    const std::vector<std::vector<std::uint64_t>> shapes = {
        {},            // scalar (one element, no dims)
        {7},           // vector
        {3, 5},        // matrix
        {2, 3, 4},     // 3-d
        {2, 3, 4, 5},  // 4-d
    };
    int file_id = 0;
    for (const auto& dims : shapes) {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        std::vector<double> vals(n);
        for (auto& v : vals) v = rng.normal();

        const std::string path = tmp_dir() + "/t" + std::to_string(file_id++) + ".ntsr";
        hspace::io::write_tensor(path, hspace::io::TensorFile::from_f64(dims, vals.data()));
        auto back = hspace::io::read_tensor(path);
        REQUIRE(back.dims == dims);
        REQUIRE(back.dtype == hspace::io::Dtype::f64);
        auto out = back.as_f64();
        REQUIRE(out.size() == vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) CHECK(out[i] == vals[i]);  // bitwise
    }
}

TEST_CASE("f32 tensors keep float precision through the round trip") {
    std::vector<float> vals = {1.5f, -2.25f, 3.0e-7f, 4.0e7f};
    const std::string path = tmp_dir() + "/f32.ntsr";
    hspace::io::write_tensor(path, hspace::io::TensorFile::from_f32({4}, vals.data()));
    auto back = hspace::io::read_tensor(path);
    REQUIRE(back.dtype == hspace::io::Dtype::f32);
    auto out = back.as_f64();
    for (std::size_t i = 0; i < vals.size(); ++i)
        CHECK(out[i] == static_cast<double>(vals[i]));
}

TEST_CASE("matrix and vector helpers preserve layout") {
    Rng rng(12);
    hspace::DenseMatrix m = rng.normal_matrix(6, 4);
    const std::string path = tmp_dir() + "/mat.ntsr";
    hspace::io::write_matrix(path, m);
    hspace::DenseMatrix back = hspace::io::read_matrix(path);
    REQUIRE(back.rows() == 6);
    REQUIRE(back.cols() == 4);
    CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);

    hspace::Vector v = rng.normal_vector(9);
    hspace::io::write_vector(tmp_dir() + "/vec.ntsr", v);
    hspace::Vector vb = hspace::io::read_vector(tmp_dir() + "/vec.ntsr");
    CHECK((vb - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corrupted tensor header is rejected") {
    const std::string path = tmp_dir() + "/bad.ntsr";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE this is not a tensor file";
    }
    CHECK_THROWS_AS(hspace::io::read_tensor(path), std::runtime_error);
    CHECK_THROWS_AS(hspace::io::read_tensor(tmp_dir() + "/does_not_exist.ntsr"),
                    std::runtime_error);
}

TEST_CASE("pgm round trip preserves every pixel") {
    std::vector<std::uint8_t> px(16 * 9);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 7 % 256);
    const std::string path = tmp_dir() + "/img.pgm";
    hspace::io::write_pgm(path, px, 16, 9);
    auto back = hspace::io::read_pgm(path);
    REQUIRE(back.width == 16);
    REQUIRE(back.height == 9);
    REQUIRE(back.pixels == px);
}

TEST_CASE("missing pgm error names the path") {
    try {
        hspace::io::read_pgm("no/such/mask.pgm");
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("no/such/mask.pgm") != std::string::npos);
    }
}

TEST_CASE("png output inflates back to the exact grayscale scanlines") {
    ImageTensor img(5, 7, 1);
    Rng rng(13);
    for (auto& v : img.data) v = rng.uniform(-1.0, 1.0);
    const std::string path = tmp_dir() + "/img.png";
    hspace::io::write_png_gray(path, img);

    auto bytes = slurp(path);
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    REQUIRE(bytes.size() > 45);
    for (int i = 0; i < 8; ++i) REQUIRE(bytes[static_cast<std::size_t>(i)] == sig[i]);

    // IHDR: length(4) type(4) data(13) crc(4) starting at offset 8
    REQUIRE(be32(&bytes[8]) == 13u);
    REQUIRE(std::string(bytes.begin() + 12, bytes.begin() + 16) == "IHDR");
    CHECK(be32(&bytes[16]) == 7u);  // width
    CHECK(be32(&bytes[20]) == 5u);  // height
    CHECK(bytes[24] == 8);          // bit depth
    CHECK(bytes[25] == 0);          // grayscale

    // find IDAT, inflate, compare scanlines against quantize8
    std::size_t off = 8;
    std::vector<std::uint8_t> idat;
    while (off + 8 < bytes.size()) {
        const std::uint32_t len = be32(&bytes[off]);
        const std::string type(bytes.begin() + static_cast<std::ptrdiff_t>(off + 4),
                               bytes.begin() + static_cast<std::ptrdiff_t>(off + 8));
        if (type == "IDAT")
            idat.insert(idat.end(), bytes.begin() + static_cast<std::ptrdiff_t>(off + 8),
                        bytes.begin() + static_cast<std::ptrdiff_t>(off + 8 + len));
        off += 12 + len;
    }
    REQUIRE(!idat.empty());
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(5 * (7 + 1)));
    uLongf raw_len = raw.size();
    REQUIRE(uncompress(raw.data(), &raw_len, idat.data(), idat.size()) == Z_OK);
    REQUIRE(raw_len == raw.size());
    for (int y = 0; y < 5; ++y) {
        CHECK(raw[static_cast<std::size_t>(y * 8)] == 0);  // filter byte: none
        for (int x = 0; x < 7; ++x)
            CHECK(raw[static_cast<std::size_t>(y * 8 + 1 + x)] ==
                  hspace::quantize8(img.at(0, y, x)));
    }
}
