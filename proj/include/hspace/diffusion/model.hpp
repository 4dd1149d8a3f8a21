#pragma once

// The toy denoiser: a 32×32 grayscale U-Net with an explicit 4×4×16
// bottleneck (d_h = 256).
//
//   encoder   conv3x3/s2 1→8   + SiLU          32×32 → 16×16   (skip e1)
//             conv3x3/s2 8→16  + SiLU          16×16 → 8×8     (skip e2)
//             conv3x3/s2 16→16 + SiLU           8×8  → 4×4
//             + per-channel time bias  ⇒ bottleneck code h (flattened
//               channel-major then row-major spatial)
//   decoder   up×2, concat e2, conv3x3 32→16, +time bias, SiLU   8×8
//             up×2, concat e1, conv3x3 24→8,  +time bias, SiLU   16×16
//             up×2,            conv3x3 8→8,   +time bias, SiLU   32×32
//             conv3x3 8→1 (zero-initialized) ⇒ predicted noise
//
// The timestep enters through a sinusoidal embedding mapped by per-stage
// linear layers to channel biases. denoise() runs encoder + decoder;
// denoise_from_bottleneck() reruns the decoder from a (possibly edited) h
// with the skip features frozen — both share one decode routine, so an
// unmodified h reproduces denoise() bit-exactly. DecoderOperator freezes the
// decoder at a base h and exposes exact jvp/vjp of noise w.r.t. h.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hspace/core/hash.hpp"
#include "hspace/core/matrix.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/diffusion/image.hpp"
#include "hspace/diffusion/nn.hpp"

namespace hspace {

struct DenoiserParams {
    DenseMatrix w1, w2, w3, w4, w5, w6, w7;  // conv kernels, c_out × (c_in·9)
    Vector b1, b2, b3, b4, b5, b6, b7;       // conv biases
    DenseMatrix wt0, wt1, wt2, wt3;          // time-embedding projections
    Vector bt0, bt1, bt2, bt3;

    // visit applies f to every tensor in a fixed order; flatten/unflatten and
    // hashing all rely on this single ordering.
    template <class F>
    void visit(F&& f) {
        f(w1); f(b1); f(w2); f(b2); f(w3); f(b3); f(w4); f(b4);
        f(w5); f(b5); f(w6); f(b6); f(w7); f(b7);
        f(wt0); f(bt0); f(wt1); f(bt1); f(wt2); f(bt2); f(wt3); f(bt3);
    }
    template <class F>
    void visit(F&& f) const {
        f(w1); f(b1); f(w2); f(b2); f(w3); f(b3); f(w4); f(b4);
        f(w5); f(b5); f(w6); f(b6); f(w7); f(b7);
        f(wt0); f(bt0); f(wt1); f(bt1); f(wt2); f(bt2); f(wt3); f(bt3);
    }

    Index count() const {
        Index n = 0;
        visit([&](const auto& m) { n += m.size(); });
        return n;
    }

    Vector flatten() const {
        Vector out(count());
        Index at = 0;
        visit([&](const auto& m) {
            std::copy(m.data(), m.data() + m.size(), out.data() + at);
            at += m.size();
        });
        return out;
    }

    void unflatten(const Vector& flat) {
        if (flat.size() != count())
            throw std::invalid_argument("DenoiserParams: flat vector has " +
                                        std::to_string(flat.size()) + " entries, expected " +
                                        std::to_string(count()));
        Index at = 0;
        visit([&](auto& m) {
            std::copy(flat.data() + at, flat.data() + at + m.size(), m.data());
            at += m.size();
        });
    }

    void set_zero() {
        visit([](auto& m) { m.setZero(); });
    }
};

// Frozen evaluation context for decoder-only passes: the two skip feature
// maps, the decoder time biases, the timestep, and a hash binding them to
// the parameters that produced them.
struct DecoderContext {
    int t = -1;
    DenseMatrix e1;  // 8 × 256  (16×16 spatial)
    DenseMatrix e2;  // 16 × 64  (8×8 spatial)
    Vector tb1, tb2, tb3;
    std::uint64_t hash = 0;
};

struct TrainingMeta {
    std::string dataset_hash;
    std::vector<double> loss_curve;        // per logged interval
    double final_train_loss = -1.0;
    double holdout_loss = -1.0;            // trained-loss ceiling for eval checks
    int steps = 0;
    std::uint64_t seed = 0;
};

class DenoiserModel;

// Exact linearization of the decoder-from-bottleneck map at a base code h:
// a differentiable operator R^256 -> R^1024 with frozen parameters, skips,
// and timestep. Pre-activations at the base point are cached once; jvp/vjp
// push tangents/adjoints through the frozen linearized layers.
class DecoderOperator {
  public:
    DecoderOperator(const DenoiserModel& model, Vector h, DecoderContext ctx);

    Index rows() const { return 1024; }
    Index cols() const { return 256; }
    const Vector& base_point() const { return h0_; }
    const Vector& base_output() const { return eps0_; }
    int timestep() const { return ctx_.t; }

    Vector apply(const Vector& h) const;
    Vector jvp(const Vector& v) const;
    Vector vjp(const Vector& u) const;

  private:
    Vector decode_flat(const Vector& h, DenseMatrix* z1, DenseMatrix* z2, DenseMatrix* z3) const;

    DecoderContext ctx_;
    DenseMatrix w4_, w5_, w6_, w7_;
    Vector b4_, b5_, b6_, b7_;
    Vector h0_, eps0_;
    DenseMatrix dz1_, dz2_, dz3_;  // SiLU derivatives at base pre-activations
};

class DenoiserModel {
  public:
    static constexpr int kH = 32, kW = 32, kC = 1;
    static constexpr int kTimeDim = 32;
    static constexpr int kBottleneckChannels = 16, kBottleneckSide = 4;
    static constexpr Index kLatentDim = 256;   // d_h
    static constexpr Index kOutputDim = 1024;  // flattened epsilon

    // All conv plans are shape-fixed; shared across instances.
    struct Plans {
        nn::Conv3x3 c1{1, 8, 32, 32, 2};
        nn::Conv3x3 c2{8, 16, 16, 16, 2};
        nn::Conv3x3 c3{16, 16, 8, 8, 2};
        nn::Conv3x3 c4{32, 16, 8, 8, 1};
        nn::Conv3x3 c5{24, 8, 16, 16, 1};
        nn::Conv3x3 c6{8, 8, 32, 32, 1};
        nn::Conv3x3 c7{8, 1, 32, 32, 1};
    };
    static const Plans& plans() {
        static const Plans p;
        return p;
    }

    DenoiserModel() {
        auto shape = [](DenseMatrix& w, Vector& b, const nn::Conv3x3& c) {
            w = DenseMatrix::Zero(c.weight_rows(), c.weight_cols());
            b = Vector::Zero(c.c_out());
        };
        const Plans& pl = plans();
        shape(p_.w1, p_.b1, pl.c1);
        shape(p_.w2, p_.b2, pl.c2);
        shape(p_.w3, p_.b3, pl.c3);
        shape(p_.w4, p_.b4, pl.c4);
        shape(p_.w5, p_.b5, pl.c5);
        shape(p_.w6, p_.b6, pl.c6);
        shape(p_.w7, p_.b7, pl.c7);
        auto tshape = [](DenseMatrix& w, Vector& b, int c_out) {
            w = DenseMatrix::Zero(c_out, kTimeDim);
            b = Vector::Zero(c_out);
        };
        tshape(p_.wt0, p_.bt0, 16);
        tshape(p_.wt1, p_.bt1, 16);
        tshape(p_.wt2, p_.bt2, 8);
        tshape(p_.wt3, p_.bt3, 8);
    }

    // He-style initialization for the SiLU conv stack; the output conv stays
    // zero so an untrained model predicts exactly zero noise.
    static DenoiserModel random_init(std::uint64_t seed) {
        DenoiserModel m;
        Rng rng(seed);
        auto he = [&](DenseMatrix& w) {
            const double std = std::sqrt(2.0 / static_cast<double>(w.cols()));
            for (Index i = 0; i < w.rows(); ++i)
                for (Index j = 0; j < w.cols(); ++j) w(i, j) = std * rng.normal();
        };
        he(m.p_.w1);
        he(m.p_.w2);
        he(m.p_.w3);
        he(m.p_.w4);
        he(m.p_.w5);
        he(m.p_.w6);
        auto small = [&](DenseMatrix& w) {
            const double std = std::sqrt(1.0 / static_cast<double>(w.cols()));
            for (Index i = 0; i < w.rows(); ++i)
                for (Index j = 0; j < w.cols(); ++j) w(i, j) = std * rng.normal();
        };
        small(m.p_.wt0);
        small(m.p_.wt1);
        small(m.p_.wt2);
        small(m.p_.wt3);
        return m;
    }

    DenoiserParams& params() { return p_; }
    const DenoiserParams& params() const { return p_; }
    Index param_count() const { return p_.count(); }

    std::uint64_t param_hash64() const {
        Fnv64 h;
        p_.visit([&](const auto& m) {
            h.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
        });
        return h.value();
    }
    std::string param_hash_hex() const {
        Fnv64 h;
        p_.visit([&](const auto& m) {
            h.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
        });
        return h.hex();
    }

    struct EncodeResult {
        Vector h;            // bottleneck code, dim 256 (time bias included)
        DecoderContext ctx;  // frozen skips + decoder time biases
    };

    struct DenoiseResult {
        ImageTensor epsilon;
        Vector h;
        DecoderContext ctx;
    };

    EncodeResult encode(const ImageTensor& x, int t) const {
        check_input(x, t);
        const Plans& pl = plans();
        DenseMatrix xm = image_to_matrix(x);

        DenseMatrix ze1 = pl.c1.forward(xm, p_.w1, p_.b1);
        DenseMatrix e1 = nn::silu(ze1);
        DenseMatrix ze2 = pl.c2.forward(e1, p_.w2, p_.b2);
        DenseMatrix e2 = nn::silu(ze2);
        DenseMatrix zb = pl.c3.forward(e2, p_.w3, p_.b3);
        DenseMatrix bact = nn::silu(zb);

        const Vector temb = nn::time_embedding(t, kTimeDim);
        DenseMatrix h_img = bact;
        h_img.colwise() += Vector(p_.wt0 * temb + p_.bt0);

        EncodeResult out;
        out.h = Eigen::Map<const Vector>(h_img.data(), h_img.size());
        out.ctx.t = t;
        out.ctx.e1 = std::move(e1);
        out.ctx.e2 = std::move(e2);
        out.ctx.tb1 = p_.wt1 * temb + p_.bt1;
        out.ctx.tb2 = p_.wt2 * temb + p_.bt2;
        out.ctx.tb3 = p_.wt3 * temb + p_.bt3;
        out.ctx.hash = context_hash(out.ctx);
        if (!out.h.allFinite() || !out.ctx.e1.allFinite() || !out.ctx.e2.allFinite())
            throw std::runtime_error("DenoiserModel::encode: non-finite activations");
        return out;
    }

    // Decoder-only pass from a bottleneck code. The context hash ties the
    // skips to this model's parameters and the timestep they were computed
    // at; a stale or foreign context is rejected.
    ImageTensor denoise_from_bottleneck(const Vector& h, const DecoderContext& ctx) const {
        if (h.size() != kLatentDim)
            throw std::invalid_argument("denoise_from_bottleneck: h has " +
                                        std::to_string(h.size()) + " entries, expected 256");
        if (ctx.hash != context_hash(ctx))
            throw std::invalid_argument(
                "denoise_from_bottleneck: decoder context does not match this model/timestep "
                "(context hash check failed)");
        DenseMatrix eps = decode(h, ctx, nullptr, nullptr, nullptr);
        if (!eps.allFinite())
            throw std::runtime_error("denoise_from_bottleneck: non-finite activations");
        return matrix_to_image(eps);
    }

    DenoiseResult denoise(const ImageTensor& x, int t) const {
        EncodeResult enc = encode(x, t);
        DenseMatrix eps = decode(enc.h, enc.ctx, nullptr, nullptr, nullptr);
        if (!eps.allFinite()) throw std::runtime_error("DenoiserModel::denoise: non-finite activations");
        DenoiseResult out;
        out.epsilon = matrix_to_image(eps);
        out.h = std::move(enc.h);
        out.ctx = std::move(enc.ctx);
        return out;
    }

    DecoderOperator decoder_operator(const Vector& h, const DecoderContext& ctx) const {
        return DecoderOperator(*this, h, ctx);
    }

    // ---- training support -------------------------------------------------

    struct TrainTrace {
        Vector temb;
        DenseMatrix xm;
        DenseMatrix cols1, cols2, cols3, cols4, cols5, cols6, cols7;
        DenseMatrix ze1, ze2, zb;      // encoder pre-activations
        DenseMatrix e1, e2;            // encoder activations (skips)
        DenseMatrix z1, z2, z3;        // decoder pre-activations (time bias included)
        DenseMatrix cat1, cat2, u3;    // decoder conv inputs
        DenseMatrix d3;
    };

    // Full forward pass that keeps everything backward_train needs.
    ImageTensor forward_train(const ImageTensor& x, int t, TrainTrace& tr) const {
        check_input(x, t);
        const Plans& pl = plans();
        tr.temb = nn::time_embedding(t, kTimeDim);
        tr.xm = image_to_matrix(x);

        tr.ze1 = pl.c1.forward(tr.xm, p_.w1, p_.b1, &tr.cols1);
        tr.e1 = nn::silu(tr.ze1);
        tr.ze2 = pl.c2.forward(tr.e1, p_.w2, p_.b2, &tr.cols2);
        tr.e2 = nn::silu(tr.ze2);
        tr.zb = pl.c3.forward(tr.e2, p_.w3, p_.b3, &tr.cols3);
        DenseMatrix h_img = nn::silu(tr.zb);
        h_img.colwise() += Vector(p_.wt0 * tr.temb + p_.bt0);

        DenseMatrix u1 = nn::upsample2x(h_img, 4, 4);
        tr.cat1 = nn::concat_channels(u1, tr.e2);
        tr.z1 = pl.c4.forward(tr.cat1, p_.w4, p_.b4, &tr.cols4);
        tr.z1.colwise() += Vector(p_.wt1 * tr.temb + p_.bt1);
        DenseMatrix d1 = nn::silu(tr.z1);

        DenseMatrix u2 = nn::upsample2x(d1, 8, 8);
        tr.cat2 = nn::concat_channels(u2, tr.e1);
        tr.z2 = pl.c5.forward(tr.cat2, p_.w5, p_.b5, &tr.cols5);
        tr.z2.colwise() += Vector(p_.wt2 * tr.temb + p_.bt2);
        DenseMatrix d2 = nn::silu(tr.z2);

        tr.u3 = nn::upsample2x(d2, 16, 16);
        tr.z3 = pl.c6.forward(tr.u3, p_.w6, p_.b6, &tr.cols6);
        tr.z3.colwise() += Vector(p_.wt3 * tr.temb + p_.bt3);
        tr.d3 = nn::silu(tr.z3);

        DenseMatrix eps = pl.c7.forward(tr.d3, p_.w7, p_.b7, &tr.cols7);
        if (!eps.allFinite())
            throw std::runtime_error("DenoiserModel::forward_train: non-finite activations");
        return matrix_to_image(eps);
    }

    // Accumulates parameter gradients for d(loss)/d(eps) = geps (1 × 1024).
    void backward_train(const DenseMatrix& geps, const TrainTrace& tr, DenoiserParams& g) const {
        const Plans& pl = plans();

        DenseMatrix gd3 = pl.c7.input_grad(geps, p_.w7);
        {
            DenseMatrix gw;
            Vector gb;
            pl.c7.param_grads(geps, tr.cols7, gw, gb);
            g.w7 += gw;
            g.b7 += gb;
        }

        DenseMatrix gz3 = gd3.cwiseProduct(nn::silu_deriv(tr.z3));
        accumulate_time_grads(gz3, tr.temb, g.wt3, g.bt3);
        DenseMatrix gu3 = pl.c6.input_grad(gz3, p_.w6);
        {
            DenseMatrix gw;
            Vector gb;
            pl.c6.param_grads(gz3, tr.cols6, gw, gb);
            g.w6 += gw;
            g.b6 += gb;
        }

        DenseMatrix gd2 = nn::upsample2x_adjoint(gu3, 16, 16);
        DenseMatrix gz2 = gd2.cwiseProduct(nn::silu_deriv(tr.z2));
        accumulate_time_grads(gz2, tr.temb, g.wt2, g.bt2);
        DenseMatrix gcat2 = pl.c5.input_grad(gz2, p_.w5);
        {
            DenseMatrix gw;
            Vector gb;
            pl.c5.param_grads(gz2, tr.cols5, gw, gb);
            g.w5 += gw;
            g.b5 += gb;
        }
        DenseMatrix gu2 = gcat2.topRows(16);
        DenseMatrix ge1_skip = gcat2.bottomRows(8);

        DenseMatrix gd1 = nn::upsample2x_adjoint(gu2, 8, 8);
        DenseMatrix gz1 = gd1.cwiseProduct(nn::silu_deriv(tr.z1));
        accumulate_time_grads(gz1, tr.temb, g.wt1, g.bt1);
        DenseMatrix gcat1 = pl.c4.input_grad(gz1, p_.w4);
        {
            DenseMatrix gw;
            Vector gb;
            pl.c4.param_grads(gz1, tr.cols4, gw, gb);
            g.w4 += gw;
            g.b4 += gb;
        }
        DenseMatrix gu1 = gcat1.topRows(16);
        DenseMatrix ge2_skip = gcat1.bottomRows(16);

        DenseMatrix gh = nn::upsample2x_adjoint(gu1, 4, 4);
        accumulate_time_grads(gh, tr.temb, g.wt0, g.bt0);
        DenseMatrix gzb = gh.cwiseProduct(nn::silu_deriv(tr.zb));
        {
            DenseMatrix gw;
            Vector gb;
            pl.c3.param_grads(gzb, tr.cols3, gw, gb);
            g.w3 += gw;
            g.b3 += gb;
        }

        DenseMatrix ge2 = pl.c3.input_grad(gzb, p_.w3) + ge2_skip;
        DenseMatrix gze2 = ge2.cwiseProduct(nn::silu_deriv(tr.ze2));
        {
            DenseMatrix gw;
            Vector gb;
            pl.c2.param_grads(gze2, tr.cols2, gw, gb);
            g.w2 += gw;
            g.b2 += gb;
        }

        DenseMatrix ge1 = pl.c2.input_grad(gze2, p_.w2) + ge1_skip;
        DenseMatrix gze1 = ge1.cwiseProduct(nn::silu_deriv(tr.ze1));
        {
            DenseMatrix gw;
            Vector gb;
            pl.c1.param_grads(gze1, tr.cols1, gw, gb);
            g.w1 += gw;
            g.b1 += gb;
        }
    }

    // ---- shared decode path (used by denoise and denoise_from_bottleneck) --

    DenseMatrix decode(const Vector& h, const DecoderContext& ctx, DenseMatrix* z1_out,
                       DenseMatrix* z2_out, DenseMatrix* z3_out) const {
        return decode_with(plans(), p_.w4, p_.b4, p_.w5, p_.b5, p_.w6, p_.b6, p_.w7, p_.b7, h,
                           ctx, z1_out, z2_out, z3_out);
    }

    static DenseMatrix decode_with(const Plans& pl, const DenseMatrix& w4, const Vector& b4,
                                   const DenseMatrix& w5, const Vector& b5, const DenseMatrix& w6,
                                   const Vector& b6, const DenseMatrix& w7, const Vector& b7,
                                   const Vector& h, const DecoderContext& ctx, DenseMatrix* z1_out,
                                   DenseMatrix* z2_out, DenseMatrix* z3_out) {
        Eigen::Map<const DenseMatrix> h_img(h.data(), 16, 16);

        DenseMatrix u1 = nn::upsample2x(h_img, 4, 4);
        DenseMatrix z1 = pl.c4.forward(nn::concat_channels(u1, ctx.e2), w4, b4);
        z1.colwise() += ctx.tb1;
        DenseMatrix d1 = nn::silu(z1);
        if (z1_out) *z1_out = std::move(z1);

        DenseMatrix u2 = nn::upsample2x(d1, 8, 8);
        DenseMatrix z2 = pl.c5.forward(nn::concat_channels(u2, ctx.e1), w5, b5);
        z2.colwise() += ctx.tb2;
        DenseMatrix d2 = nn::silu(z2);
        if (z2_out) *z2_out = std::move(z2);

        DenseMatrix u3 = nn::upsample2x(d2, 16, 16);
        DenseMatrix z3 = pl.c6.forward(u3, w6, b6);
        z3.colwise() += ctx.tb3;
        DenseMatrix d3 = nn::silu(z3);
        if (z3_out) *z3_out = std::move(z3);

        return pl.c7.forward(d3, w7, b7);
    }

    std::uint64_t context_hash(const DecoderContext& ctx) const {
        Fnv64 f;
        f.update_pod(ctx.t);
        f.update_pod(param_hash64());
        f.update(ctx.e1.data(), static_cast<std::size_t>(ctx.e1.size()) * sizeof(double));
        f.update(ctx.e2.data(), static_cast<std::size_t>(ctx.e2.size()) * sizeof(double));
        f.update(ctx.tb1.data(), static_cast<std::size_t>(ctx.tb1.size()) * sizeof(double));
        f.update(ctx.tb2.data(), static_cast<std::size_t>(ctx.tb2.size()) * sizeof(double));
        f.update(ctx.tb3.data(), static_cast<std::size_t>(ctx.tb3.size()) * sizeof(double));
        return f.value();
    }

    static DenseMatrix image_to_matrix(const ImageTensor& x) {
        DenseMatrix m(x.c, static_cast<Index>(x.h) * x.w);
        std::copy(x.data.begin(), x.data.end(), m.data());
        return m;
    }

    static ImageTensor matrix_to_image(const DenseMatrix& m) {
        ImageTensor out(kH, kW, static_cast<int>(m.rows()));
        std::copy(m.data(), m.data() + m.size(), out.data.begin());
        return out;
    }

    TrainingMeta meta;

  private:
    static void accumulate_time_grads(const DenseMatrix& gz, const Vector& temb, DenseMatrix& gw,
                                      Vector& gb) {
        Vector gtb = gz.rowwise().sum();
        gw += gtb * temb.transpose();
        gb += gtb;
    }

    void check_input(const ImageTensor& x, int t) const {
        if (x.h != kH || x.w != kW || x.c != kC)
            throw std::invalid_argument("DenoiserModel: input must be 1x32x32");
        if (!x.all_finite()) throw std::invalid_argument("DenoiserModel: non-finite input");
        if (t < 0) throw std::invalid_argument("DenoiserModel: negative timestep");
    }

    DenoiserParams p_;
};

inline DecoderOperator::DecoderOperator(const DenoiserModel& model, Vector h, DecoderContext ctx)
    : ctx_(std::move(ctx)),
      w4_(model.params().w4),
      w5_(model.params().w5),
      w6_(model.params().w6),
      w7_(model.params().w7),
      b4_(model.params().b4),
      b5_(model.params().b5),
      b6_(model.params().b6),
      b7_(model.params().b7),
      h0_(std::move(h)) {
    if (h0_.size() != DenoiserModel::kLatentDim)
        throw std::invalid_argument("DecoderOperator: base code must have 256 entries");
    if (ctx_.hash != model.context_hash(ctx_))
        throw std::invalid_argument(
            "DecoderOperator: decoder context does not match this model/timestep");
    DenseMatrix z1, z2, z3;
    eps0_ = decode_flat(h0_, &z1, &z2, &z3);
    dz1_ = nn::silu_deriv(z1);
    dz2_ = nn::silu_deriv(z2);
    dz3_ = nn::silu_deriv(z3);
}

inline Vector DecoderOperator::decode_flat(const Vector& h, DenseMatrix* z1, DenseMatrix* z2,
                                           DenseMatrix* z3) const {
    DenseMatrix eps = DenoiserModel::decode_with(DenoiserModel::plans(), w4_, b4_, w5_, b5_, w6_,
                                                 b6_, w7_, b7_, h, ctx_, z1, z2, z3);
    return Eigen::Map<const Vector>(eps.data(), eps.size());
}

inline Vector DecoderOperator::apply(const Vector& h) const {
    if (h.size() != cols()) throw std::invalid_argument("DecoderOperator::apply: dimension mismatch");
    if (h.size() == h0_.size() && std::equal(h.data(), h.data() + h.size(), h0_.data()))
        return eps0_;
    return decode_flat(h, nullptr, nullptr, nullptr);
}

inline Vector DecoderOperator::jvp(const Vector& v) const {
    if (v.size() != cols()) throw std::invalid_argument("DecoderOperator::jvp: dimension mismatch");
    const auto& pl = DenoiserModel::plans();
    Eigen::Map<const DenseMatrix> v_img(v.data(), 16, 16);

    DenseMatrix du1 = nn::upsample2x(v_img, 4, 4);
    DenseMatrix dcat1 = nn::concat_channels(du1, DenseMatrix::Zero(16, 64));
    DenseMatrix dd1 = (w4_ * pl.c4.im2col(dcat1)).cwiseProduct(dz1_);

    DenseMatrix du2 = nn::upsample2x(dd1, 8, 8);
    DenseMatrix dcat2 = nn::concat_channels(du2, DenseMatrix::Zero(8, 256));
    DenseMatrix dd2 = (w5_ * pl.c5.im2col(dcat2)).cwiseProduct(dz2_);

    DenseMatrix du3 = nn::upsample2x(dd2, 16, 16);
    DenseMatrix dd3 = (w6_ * pl.c6.im2col(du3)).cwiseProduct(dz3_);

    DenseMatrix deps = w7_ * pl.c7.im2col(dd3);
    return Eigen::Map<const Vector>(deps.data(), deps.size());
}

inline Vector DecoderOperator::vjp(const Vector& u) const {
    if (u.size() != rows()) throw std::invalid_argument("DecoderOperator::vjp: dimension mismatch");
    const auto& pl = DenoiserModel::plans();
    Eigen::Map<const DenseMatrix> u_img(u.data(), 1, 1024);

    DenseMatrix gz3 = pl.c7.input_grad(u_img, w7_).cwiseProduct(dz3_);
    DenseMatrix gu3 = pl.c6.input_grad(gz3, w6_);
    DenseMatrix gz2 = nn::upsample2x_adjoint(gu3, 16, 16).cwiseProduct(dz2_);
    DenseMatrix gcat2 = pl.c5.input_grad(gz2, w5_);
    DenseMatrix gz1 = nn::upsample2x_adjoint(DenseMatrix(gcat2.topRows(16)), 8, 8).cwiseProduct(dz1_);
    DenseMatrix gcat1 = pl.c4.input_grad(gz1, w4_);
    DenseMatrix gh = nn::upsample2x_adjoint(DenseMatrix(gcat1.topRows(16)), 4, 4);
    return Eigen::Map<const Vector>(gh.data(), gh.size());
}

}  // namespace hspace
