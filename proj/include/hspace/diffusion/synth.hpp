#pragma once

// Synthetic face-schematic corpus. Every image is an exactly affine function
// of five factors
//
//   g = (left_eye_openness, right_eye_openness  in [0, 1],
//        mouth_curvature,   mouth_width         in [-1, 1],
//        global_brightness                      in [-1, 1])
//
// via image = base + sum_k g_k * template_k with smooth analytic templates:
//
//   base        dark background, soft face disk, closed-eye line strokes,
//               straight mouth stroke
//   eye k       blends the closed-eye line into a tall open-eye blob
//               (openness 0 leaves exactly the flat line)
//   curvature   darkens mouth corners upward / lightens downward (sign flips
//               for frowns)
//   width       darkens two lobes just beyond the mouth ends
//   brightness  constant lift on every pixel
//
// Affinity means least squares recovers the factors from pixels exactly, and
// pixel extremes over the factor box are attained at its corners — the
// no-clipping check in the tests walks all 32 corners. Each facial template
// is concentrated inside its region rectangle (see default_face_regions).

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/core/hash.hpp"
#include "hspace/core/matrix.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/diffusion/image.hpp"
#include "hspace/op/region.hpp"

namespace hspace {

inline constexpr int kFactorCount = 5;

inline const std::array<std::string, kFactorCount>& factor_names() {
    static const std::array<std::string, kFactorCount> names = {
        "left_eye_openness", "right_eye_openness", "mouth_curvature", "mouth_width",
        "global_brightness"};
    return names;
}

struct FactorRanges {
    std::array<double, kFactorCount> lo{0.0, 0.0, -1.0, -1.0, -1.0};
    std::array<double, kFactorCount> hi{1.0, 1.0, 1.0, 1.0, 1.0};
};

class FaceRenderer {
  public:
    explicit FaceRenderer(int size = 32) : size_(size), s_(static_cast<double>(size) / 32.0) {
        if (size < 8) throw std::invalid_argument("FaceRenderer: size must be >= 8");
    }

    int size() const { return size_; }

    ImageTensor base() const {
        ImageTensor img(size_, size_, 1);
        for (int y = 0; y < size_; ++y)
            for (int x = 0; x < size_; ++x) {
                double v = -0.75 + 0.75 * disk(x, y, 16.0, 16.0, 13.0, 1.0);
                v += kEyeAmp * eye_line(x, y, kLeftEyeX);
                v += kEyeAmp * eye_line(x, y, kRightEyeX);
                v += kMouthAmp * gauss(x, y, 16.0, kMouthY, 3.0, 0.8);
                img.at(0, y, x) = v;
            }
        return img;
    }

    // template_k such that image = base + sum g_k template_k.
    ImageTensor factor_template(int k) const {
        ImageTensor img(size_, size_, 1);
        for (int y = 0; y < size_; ++y)
            for (int x = 0; x < size_; ++x) img.at(0, y, x) = template_value(k, x, y);
        return img;
    }

    ImageTensor render(const std::array<double, kFactorCount>& g) const {
        ImageTensor img = base();
        for (int k = 0; k < kFactorCount; ++k) {
            if (g[k] == 0.0) continue;
            for (int y = 0; y < size_; ++y)
                for (int x = 0; x < size_; ++x) img.at(0, y, x) += g[k] * template_value(k, x, y);
        }
        return img;
    }

  private:
    static constexpr double kLeftEyeX = 10.0, kRightEyeX = 22.0, kEyeY = 11.0;
    static constexpr double kMouthY = 22.0;
    static constexpr double kEyeAmp = -0.42;
    static constexpr double kMouthAmp = -0.35;
    static constexpr double kWidthAmp = -0.22;
    static constexpr double kCurvAmp = 0.18;
    static constexpr double kBrightAmp = 0.18;

    double template_value(int k, int x, int y) const {
        switch (k) {
            case 0:  // left eye: line -> open blob
                return kEyeAmp * (eye_open(x, y, kLeftEyeX) - eye_line(x, y, kLeftEyeX));
            case 1:
                return kEyeAmp * (eye_open(x, y, kRightEyeX) - eye_line(x, y, kRightEyeX));
            case 2:  // curvature: corners up darken, corners down lighten
                return -kCurvAmp * (corner_lobes(x, y, kMouthY - 1.2) -
                                    corner_lobes(x, y, kMouthY + 1.2));
            case 3:  // width: lobes past both mouth ends
                return kWidthAmp * (gauss(x, y, 16.0 - 4.2, kMouthY, 1.5, 1.0) +
                                    gauss(x, y, 16.0 + 4.2, kMouthY, 1.5, 1.0));
            case 4:
                return kBrightAmp;
            default:
                throw std::invalid_argument("FaceRenderer: factor index out of range");
        }
    }

    double gauss(int x, int y, double cx, double cy, double sx, double sy) const {
        const double dx = (static_cast<double>(x) - cx * s_) / (sx * s_);
        const double dy = (static_cast<double>(y) - cy * s_) / (sy * s_);
        return std::exp(-0.5 * (dx * dx + dy * dy));
    }

    double disk(int x, int y, double cx, double cy, double r, double steep) const {
        const double dx = static_cast<double>(x) - cx * s_;
        const double dy = static_cast<double>(y) - cy * s_;
        const double d = std::sqrt(dx * dx + dy * dy);
        return 1.0 / (1.0 + std::exp((d - r * s_) / (steep * s_)));
    }

    double eye_line(int x, int y, double cx) const { return gauss(x, y, cx, kEyeY, 2.0, 0.6); }
    double eye_open(int x, int y, double cx) const { return gauss(x, y, cx, kEyeY, 2.0, 2.0); }

    double corner_lobes(int x, int y, double cy) const {
        return gauss(x, y, 16.0 - 4.0, cy, 1.5, 1.2) + gauss(x, y, 16.0 + 4.0, cy, 1.5, 1.2);
    }

    int size_;
    double s_;
};

// The canonical partition used by discovery and evaluation: eye and mouth
// rectangles plus the complement. Rectangle bounds scale with image size.
inline RegionSet default_face_regions(int size = 32, int channels = 1) {
    auto sc = [&](int v) { return v * size / 32; };
    std::vector<RegionMask> masks;
    masks.push_back(
        RegionMask::from_rect("left_eye", size, size, channels, sc(5), sc(6), sc(15), sc(16)));
    masks.push_back(
        RegionMask::from_rect("right_eye", size, size, channels, sc(17), sc(6), sc(27), sc(16)));
    masks.push_back(
        RegionMask::from_rect("mouth", size, size, channels, sc(8), sc(17), sc(24), sc(28)));
    masks.push_back(complement_mask("rest", masks));
    return RegionSet(std::move(masks));
}

struct SynthConfig {
    int image_size = 32;
    int count = 0;
    std::uint64_t seed = 0;
};

struct FaceDataset {
    int image_size = 32;
    std::vector<ImageTensor> images;
    DenseMatrix factors;  // count × 5, rows aligned with images
    std::uint64_t seed = 0;

    std::size_t size() const { return images.size(); }

    std::string hash_hex() const {
        Fnv64 f;
        f.update_pod(image_size);
        for (const auto& img : images)
            f.update(img.data.data(), img.data.size() * sizeof(double));
        f.update(factors.data(), static_cast<std::size_t>(factors.size()) * sizeof(double));
        return f.hex();
    }
};

inline FaceDataset synth_dataset(const SynthConfig& config) {
    if (config.count < 1) throw std::invalid_argument("synth_dataset: count must be >= 1");
    FaceRenderer renderer(config.image_size);
    FactorRanges ranges;
    Rng rng(config.seed);

    FaceDataset ds;
    ds.image_size = config.image_size;
    ds.seed = config.seed;
    ds.factors = DenseMatrix(config.count, kFactorCount);
    ds.images.reserve(static_cast<std::size_t>(config.count));
    for (int i = 0; i < config.count; ++i) {
        std::array<double, kFactorCount> g;
        for (int k = 0; k < kFactorCount; ++k)
            g[k] = rng.uniform(ranges.lo[static_cast<std::size_t>(k)],
                               ranges.hi[static_cast<std::size_t>(k)]);
        for (int k = 0; k < kFactorCount; ++k) ds.factors(i, k) = g[static_cast<std::size_t>(k)];
        ds.images.push_back(renderer.render(g));
    }
    return ds;
}

}  // namespace hspace
