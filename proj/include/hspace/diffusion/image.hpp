#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hspace/core/matrix.hpp"

namespace hspace {

// Planar image / noisy latent, layout channel-major then row-major spatial:
// flat index (c*H + y)*W + x. Model inputs live in [-1, 1]; quantization to
// 8 bits happens only at export.
struct ImageTensor {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

    std::size_t size() const { return data.size(); }
    double& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }

    bool same_shape(const ImageTensor& o) const { return h == o.h && w == o.w && c == o.c; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    ImageTensor& operator+=(const ImageTensor& o) {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }
    ImageTensor& operator-=(const ImageTensor& o) {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
        return *this;
    }
    ImageTensor& operator*=(double s) {
        for (double& v : data) v *= s;
        return *this;
    }

    friend ImageTensor operator-(ImageTensor a, const ImageTensor& b) { return a -= b; }
    friend ImageTensor operator+(ImageTensor a, const ImageTensor& b) { return a += b; }
    friend ImageTensor operator*(double s, ImageTensor a) { return a *= s; }

    Vector flatten() const {
        Vector v(static_cast<Index>(data.size()));
        for (std::size_t i = 0; i < data.size(); ++i) v[static_cast<Index>(i)] = data[i];
        return v;
    }
    static ImageTensor from_flat(const Vector& v, int h, int w, int c) {
        ImageTensor t(h, w, c);
        if (static_cast<std::size_t>(v.size()) != t.data.size())
            throw std::invalid_argument("ImageTensor::from_flat: size mismatch");
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = v[static_cast<Index>(i)];
        return t;
    }
};

inline double mse(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

inline double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

// [-1, 1] → 8-bit, round-half-away, clamped. Export-only.
inline std::uint8_t quantize8(double v) {
    const double q = std::lround((v + 1.0) * 0.5 * 255.0);
    return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, q)));
}

}  // namespace hspace
