#pragma once

// Dataset directories: stacked image tensor + factor table + JSON metadata.
// The content hash recorded at save time is re-verified on load.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "hspace/core/version.hpp"
#include "hspace/diffusion/synth.hpp"
#include "hspace/io/checkpoint.hpp"
#include "hspace/io/tensor_file.hpp"

namespace hspace::io {

inline void save_dataset(const std::string& dir, const FaceDataset& ds) {
    if (ds.images.empty()) throw std::invalid_argument("save_dataset: empty dataset");
    std::filesystem::create_directories(dir);

    const auto n = ds.images.size();
    const auto& first = ds.images.front();
    TensorFile t;
    t.dtype = Dtype::f64;
    t.dims = {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(first.c),
              static_cast<std::uint64_t>(first.h), static_cast<std::uint64_t>(first.w)};
    t.payload.reserve(t.element_count() * 8);
    for (const auto& img : ds.images) {
        if (!img.same_shape(first)) throw std::invalid_argument("save_dataset: ragged images");
        TensorFile one = TensorFile::from_f64({static_cast<std::uint64_t>(img.data.size())},
                                              img.data.data());
        t.payload.insert(t.payload.end(), one.payload.begin(), one.payload.end());
    }
    write_tensor(dir + "/images.ntsr", t);
    write_matrix(dir + "/factors.ntsr", ds.factors);

    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["toolkit_version"] = kToolkitVersion;
    meta["count"] = n;
    meta["image_size"] = ds.image_size;
    meta["seed"] = ds.seed;
    meta["factor_names"] = factor_names();
    meta["dataset_hash"] = ds.hash_hex();
    write_json_file(dir + "/meta.json", meta);
}

inline FaceDataset load_dataset(const std::string& dir) {
    const nlohmann::json meta = read_json_file(dir + "/meta.json");
    if (meta.value("format_version", 0) != 1)
        throw std::runtime_error("unsupported dataset format in " + dir);

    FaceDataset ds;
    ds.image_size = meta.at("image_size").get<int>();
    ds.seed = meta.at("seed").get<std::uint64_t>();

    TensorFile t = read_tensor(dir + "/images.ntsr");
    if (t.dims.size() != 4) throw std::runtime_error("expected 4-d image tensor in " + dir);
    const auto n = static_cast<std::size_t>(t.dims[0]);
    const int c = static_cast<int>(t.dims[1]);
    const int h = static_cast<int>(t.dims[2]);
    const int w = static_cast<int>(t.dims[3]);
    const auto vals = t.as_f64();
    const std::size_t per = static_cast<std::size_t>(c) * h * w;
    ds.images.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ImageTensor img(h, w, c);
        std::copy(vals.begin() + static_cast<std::ptrdiff_t>(i * per),
                  vals.begin() + static_cast<std::ptrdiff_t>((i + 1) * per), img.data.begin());
        ds.images.push_back(std::move(img));
    }
    ds.factors = read_matrix(dir + "/factors.ntsr");
    if (ds.factors.rows() != static_cast<Index>(n))
        throw std::runtime_error("factor table row count mismatch in " + dir);

    const std::string expect = meta.at("dataset_hash").get<std::string>();
    if (ds.hash_hex() != expect)
        throw std::runtime_error("dataset content hash mismatch in " + dir);
    return ds;
}

}  // namespace hspace::io
