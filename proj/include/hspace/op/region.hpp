#pragma once

// Region-of-interest masks over the model's output image and the partition
// container used by the discovery pipeline. Masks are stored at full image
// resolution and broadcast over channels unless a per-channel mask is given.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/diffusion/image.hpp"
#include "hspace/io/image_io.hpp"

namespace hspace {

struct RegionMask {
    std::string name;
    int h = 0, w = 0, c = 1;
    std::vector<std::uint8_t> mask;  // (c, h, w) layout, 0/1
    long pixel_count = 0;            // number of 1-entries

    bool in(int ch, int y, int x) const {
        return mask[(static_cast<std::size_t>(ch) * h + y) * w + x] != 0;
    }

    // Flat indices of in-region entries, ascending; defines the gather order
    // of region-restricted operator outputs.
    std::vector<Index> flat_indices() const {
        std::vector<Index> idx;
        idx.reserve(static_cast<std::size_t>(pixel_count));
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) idx.push_back(static_cast<Index>(i));
        return idx;
    }

    bool covers(const RegionMask& sub) const {
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (sub.mask[i] && !mask[i]) return false;
        return true;
    }

    static RegionMask from_spatial(std::string name, int h, int w, int c,
                                   const std::vector<std::uint8_t>& spatial) {
        if (spatial.size() != static_cast<std::size_t>(h) * w)
            throw std::invalid_argument("RegionMask: spatial mask size mismatch");
        RegionMask m;
        m.name = std::move(name);
        m.h = h;
        m.w = w;
        m.c = c;
        m.mask.resize(static_cast<std::size_t>(c) * h * w);
        for (int ch = 0; ch < c; ++ch)
            std::copy(spatial.begin(), spatial.end(),
                      m.mask.begin() + static_cast<std::ptrdiff_t>(ch) * h * w);
        m.pixel_count = std::count_if(m.mask.begin(), m.mask.end(),
                                      [](std::uint8_t v) { return v != 0; });
        if (m.pixel_count < 1) throw std::invalid_argument("RegionMask '" + m.name + "': empty mask");
        return m;
    }

    // Rectangle [x0, x1) × [y0, y1) in pixel coordinates.
    static RegionMask from_rect(std::string name, int h, int w, int c,
                                int x0, int y0, int x1, int y1) {
        if (x0 < 0 || y0 < 0 || x1 > w || y1 > h || x0 >= x1 || y0 >= y1)
            throw std::invalid_argument("RegionMask '" + name + "': bad rectangle");
        std::vector<std::uint8_t> sp(static_cast<std::size_t>(h) * w, 0);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) sp[static_cast<std::size_t>(y) * w + x] = 1;
        return from_spatial(std::move(name), h, w, c, sp);
    }

    static RegionMask full(std::string name, int h, int w, int c) {
        return from_spatial(std::move(name), h, w, c,
                            std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 1));
    }

    // Nonzero pixel = in-region.
    static RegionMask from_pgm(std::string name, const std::string& path, int c = 1) {
        io::PgmImage img = io::read_pgm(path);
        std::vector<std::uint8_t> sp(img.pixels.size());
        for (std::size_t i = 0; i < sp.size(); ++i) sp[i] = img.pixels[i] ? 1 : 0;
        return from_spatial(std::move(name), img.height, img.width, c, sp);
    }
};

// Complement of the union of the given masks (the "rest" region).
inline RegionMask complement_mask(std::string name, const std::vector<RegionMask>& masks) {
    if (masks.empty()) throw std::invalid_argument("complement_mask: no masks");
    const RegionMask& first = masks.front();
    std::vector<std::uint8_t> sp(static_cast<std::size_t>(first.h) * first.w, 1);
    for (const auto& m : masks) {
        if (m.h != first.h || m.w != first.w)
            throw std::invalid_argument("complement_mask: mask shape mismatch");
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x)
                if (m.in(0, y, x)) sp[static_cast<std::size_t>(y) * m.w + x] = 0;
    }
    return RegionMask::from_spatial(std::move(name), first.h, first.w, first.c, sp);
}

// Ordered set of masks forming a partition of the image. Validation is
// strict: overlap is always an error; missing coverage is an error unless
// allow_partial is set.
struct RegionSet {
    std::vector<RegionMask> regions;

    RegionSet() = default;
    explicit RegionSet(std::vector<RegionMask> r, bool allow_partial = false)
        : regions(std::move(r)) {
        validate(allow_partial);
    }

    std::size_t size() const { return regions.size(); }
    const RegionMask& operator[](std::size_t i) const { return regions[i]; }

    const RegionMask* find(const std::string& name) const {
        for (const auto& m : regions)
            if (m.name == name) return &m;
        return nullptr;
    }

    void validate(bool allow_partial) const {
        if (regions.empty()) throw std::invalid_argument("RegionSet: empty");
        const auto& first = regions.front();
        std::vector<int> count(first.mask.size(), 0);
        for (const auto& m : regions) {
            if (m.h != first.h || m.w != first.w || m.c != first.c)
                throw std::invalid_argument("RegionSet: mask shape mismatch in '" + m.name + "'");
            for (std::size_t i = 0; i < m.mask.size(); ++i)
                if (m.mask[i]) ++count[i];
        }
        for (std::size_t i = 0; i < count.size(); ++i) {
            if (count[i] > 1)
                throw std::invalid_argument("RegionSet: masks overlap (entry " + std::to_string(i) + ")");
            if (count[i] == 0 && !allow_partial)
                throw std::invalid_argument(
                    "RegionSet: masks do not cover the image (entry " + std::to_string(i) +
                    "); pass allow-partial to relax coverage");
        }
    }
};

}  // namespace hspace
