#pragma once

// Neural-net primitives for the toy denoiser: 3x3 convolutions (stride 1 or
// 2, zero padding 1) via im2col + GEMM with precomputed tap maps, nearest
// upsampling, SiLU, and sinusoidal timestep embeddings.
//
// Feature maps are DenseMatrix blocks of shape C × (H·W): one row per
// channel, spatial positions row-major along the columns — the same layout
// ImageTensor uses, so boundary conversions are plain memory reinterpretation.
// Everything is double precision and the SiLU nonlinearity is smooth, so
// analytic jvp/vjp of the network are exact (no finite differencing).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/core/matrix.hpp"

namespace hspace::nn {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double silu(double z) { return z * sigmoid(z); }
inline double silu_deriv(double z) {
    const double s = sigmoid(z);
    return s * (1.0 + z * (1.0 - s));
}

inline DenseMatrix silu(const DenseMatrix& z) {
    return z.unaryExpr([](double v) { return silu(v); });
}
inline DenseMatrix silu_deriv(const DenseMatrix& z) {
    return z.unaryExpr([](double v) { return silu_deriv(v); });
}

// 3x3 convolution plan for a fixed input shape. The tap map records, for
// each of the 9 kernel offsets and each output position, the source spatial
// index in the input (or -1 for zero padding); channel offsets are regular
// so one spatial map serves all channels.
class Conv3x3 {
  public:
    Conv3x3(int c_in, int c_out, int h_in, int w_in, int stride)
        : c_in_(c_in), c_out_(c_out), h_in_(h_in), w_in_(w_in), stride_(stride) {
        if (stride != 1 && stride != 2) throw std::invalid_argument("Conv3x3: stride must be 1 or 2");
        h_out_ = (h_in + 2 - 3) / stride + 1;
        w_out_ = (w_in + 2 - 3) / stride + 1;
        taps_.assign(static_cast<std::size_t>(9) * h_out_ * w_out_, -1);
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
                for (int oy = 0; oy < h_out_; ++oy)
                    for (int ox = 0; ox < w_out_; ++ox) {
                        const int iy = oy * stride + ky - 1;
                        const int ix = ox * stride + kx - 1;
                        if (iy < 0 || iy >= h_in || ix < 0 || ix >= w_in) continue;
                        taps_[tap_index(ky * 3 + kx, oy * w_out_ + ox)] = iy * w_in + ix;
                    }
    }

    int c_in() const { return c_in_; }
    int c_out() const { return c_out_; }
    int h_out() const { return h_out_; }
    int w_out() const { return w_out_; }
    Index weight_rows() const { return c_out_; }
    Index weight_cols() const { return static_cast<Index>(c_in_) * 9; }
    Index out_pixels() const { return static_cast<Index>(h_out_) * w_out_; }
    Index in_pixels() const { return static_cast<Index>(h_in_) * w_in_; }

    // (c_in·9) × (h_out·w_out) patch matrix.
    DenseMatrix im2col(const DenseMatrix& x) const {
        check_input(x, "im2col");
        DenseMatrix cols = DenseMatrix::Zero(weight_cols(), out_pixels());
        for (int ci = 0; ci < c_in_; ++ci)
            for (int k = 0; k < 9; ++k) {
                double* dst = cols.row(static_cast<Index>(ci) * 9 + k).data();
                const double* src = x.row(ci).data();
                for (Index o = 0; o < out_pixels(); ++o) {
                    const int s = taps_[tap_index(k, o)];
                    if (s >= 0) dst[o] = src[s];
                }
            }
        return cols;
    }

    // Adjoint of im2col: scatter-add patch gradients back to input positions.
    DenseMatrix col2im(const DenseMatrix& gcols) const {
        if (gcols.rows() != weight_cols() || gcols.cols() != out_pixels())
            throw std::invalid_argument("Conv3x3::col2im: patch matrix shape mismatch");
        DenseMatrix gx = DenseMatrix::Zero(c_in_, in_pixels());
        for (int ci = 0; ci < c_in_; ++ci)
            for (int k = 0; k < 9; ++k) {
                const double* src = gcols.row(static_cast<Index>(ci) * 9 + k).data();
                double* dst = gx.row(ci).data();
                for (Index o = 0; o < out_pixels(); ++o) {
                    const int s = taps_[tap_index(k, o)];
                    if (s >= 0) dst[s] += src[o];
                }
            }
        return gx;
    }

    // y = W · im2col(x) + b, optionally keeping the patch matrix for the
    // weight-gradient pass.
    DenseMatrix forward(const DenseMatrix& x, const DenseMatrix& w, const Vector& b,
                        DenseMatrix* cols_cache = nullptr) const {
        check_params(w, b);
        DenseMatrix cols = im2col(x);
        DenseMatrix y = w * cols;
        y.colwise() += b;
        if (cols_cache) *cols_cache = std::move(cols);
        return y;
    }

    // Input gradient / adjoint product: im2col^T (W^T gy).
    DenseMatrix input_grad(const DenseMatrix& gy, const DenseMatrix& w) const {
        if (gy.rows() != c_out_ || gy.cols() != out_pixels())
            throw std::invalid_argument("Conv3x3::input_grad: output gradient shape mismatch");
        return col2im(w.transpose() * gy);
    }

    // Parameter gradients from a cached patch matrix.
    void param_grads(const DenseMatrix& gy, const DenseMatrix& cols, DenseMatrix& gw,
                     Vector& gb) const {
        gw = gy * cols.transpose();
        gb = gy.rowwise().sum();
    }

  private:
    std::size_t tap_index(int k, Index o) const {
        return static_cast<std::size_t>(k) * static_cast<std::size_t>(out_pixels()) +
               static_cast<std::size_t>(o);
    }
    void check_input(const DenseMatrix& x, const char* who) const {
        if (x.rows() != c_in_ || x.cols() != in_pixels())
            throw std::invalid_argument(std::string("Conv3x3::") + who + ": input shape mismatch");
    }
    void check_params(const DenseMatrix& w, const Vector& b) const {
        if (w.rows() != weight_rows() || w.cols() != weight_cols() || b.size() != c_out_)
            throw std::invalid_argument("Conv3x3: parameter shape mismatch");
    }

    int c_in_, c_out_, h_in_, w_in_, stride_;
    int h_out_ = 0, w_out_ = 0;
    std::vector<int> taps_;
};

// Nearest-neighbour 2x upsampling of a C × (H·W) map.
inline DenseMatrix upsample2x(const DenseMatrix& x, int h, int w) {
    if (x.cols() != static_cast<Index>(h) * w)
        throw std::invalid_argument("upsample2x: spatial size mismatch");
    DenseMatrix y(x.rows(), static_cast<Index>(4) * h * w);
    const int w2 = 2 * w;
    for (Index c = 0; c < x.rows(); ++c) {
        const double* src = x.row(c).data();
        double* dst = y.row(c).data();
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < w2; ++xx)
                dst[yy * w2 + xx] = src[(yy / 2) * w + (xx / 2)];
    }
    return y;
}

// Adjoint of upsample2x: each coarse cell accumulates its four children.
inline DenseMatrix upsample2x_adjoint(const DenseMatrix& gy, int h, int w) {
    if (gy.cols() != static_cast<Index>(4) * h * w)
        throw std::invalid_argument("upsample2x_adjoint: spatial size mismatch");
    DenseMatrix gx = DenseMatrix::Zero(gy.rows(), static_cast<Index>(h) * w);
    const int w2 = 2 * w;
    for (Index c = 0; c < gy.rows(); ++c) {
        const double* src = gy.row(c).data();
        double* dst = gx.row(c).data();
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < w2; ++xx)
                dst[(yy / 2) * w + (xx / 2)] += src[yy * w2 + xx];
    }
    return gx;
}

inline DenseMatrix concat_channels(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("concat_channels: spatial size mismatch");
    DenseMatrix out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

// Sinusoidal embedding of an integer timestep: interleaved sin/cos pairs at
// geometrically spaced frequencies from 1 down to 1/10000.
inline Vector time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even, >= 2");
    const int half = dim / 2;
    Vector e(dim);
    for (int i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max(1, half - 1));
        e[2 * i] = std::sin(freq * static_cast<double>(t));
        e[2 * i + 1] = std::cos(freq * static_cast<double>(t));
    }
    return e;
}

}  // namespace hspace::nn
