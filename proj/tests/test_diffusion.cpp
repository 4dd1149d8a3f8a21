// Denoising-diffusion stack: noise schedule algebra, the deterministic
// forward/reverse step pair, bottleneck-edit injection, the toy denoiser's
// encode/decode contracts, the synthetic face renderer, and training
// (including checkpoint resume). Derived quantities are checked against
// independently coded oracles before any library-vs-library comparison.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "hspace/core/matrix.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/diffusion/ddim.hpp"
#include "hspace/diffusion/image.hpp"
#include "hspace/diffusion/model.hpp"
#include "hspace/diffusion/nn.hpp"
#include "hspace/diffusion/schedule.hpp"
#include "hspace/diffusion/synth.hpp"
#include "hspace/diffusion/train.hpp"
#include "hspace/op/operator.hpp"
#include "hspace/op/region.hpp"

using hspace::DenoiserModel;
using hspace::EditInjection;
using hspace::FaceDataset;
using hspace::FaceRenderer;
using hspace::ImageTensor;
using hspace::kFactorCount;
using hspace::NoiseSchedule;
using hspace::Rng;
using hspace::SemanticDirection;
using hspace::TrainConfig;
using hspace::Vector;

namespace {

ImageTensor random_image(Rng& rng, int h = 32, int w = 32, int c = 1) {
    ImageTensor img(h, w, c);
    for (double& v : img.data) v = rng.normal();
    return img;
}

// Independent oracle for the cumulative signal coefficient of a linear beta
// ramp: a_t = prod_{s<=t} (1 - beta_s) with beta interpolated endpoint to
// endpoint over T steps.
std::vector<double> cumulative_signal_oracle(int T, double b0, double b1) {
    std::vector<double> a(static_cast<std::size_t>(T) + 1, 1.0);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        double beta = b0;
        if (T > 1) beta += (b1 - b0) * static_cast<double>(t - 1) / static_cast<double>(T - 1);
        prod *= 1.0 - beta;
        a[static_cast<std::size_t>(t)] = prod;
    }
    return a;
}

SemanticDirection unit_direction(const Vector& v) {
    SemanticDirection d;
    d.v = v;
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Noise schedule
// ---------------------------------------------------------------------------

TEST_CASE("noise schedule: linear beta ramp invariants") {
    for (int T : {10, 100, 1000}) {
        NoiseSchedule s = NoiseSchedule::linear_beta(T);
        REQUIRE(s.T == T);
        REQUIRE(s.a.size() == static_cast<std::size_t>(T) + 1);
        REQUIRE(s.a[0] == 1.0);
        for (int t = 1; t <= T; ++t) {
            const double at = s.a[static_cast<std::size_t>(t)];
            REQUIRE(at > 0.0);
            REQUIRE(at < s.a[static_cast<std::size_t>(t) - 1]);
        }
        // Deterministic schedule: every per-step noise scale vanishes.
        REQUIRE(s.eta == 0.0);
        for (int t = 1; t <= T; ++t) REQUIRE(s.sigma(t) == 0.0);
        REQUIRE_NOTHROW(s.validate());
    }
}

TEST_CASE("noise schedule: cumulative signal matches independent product") {
    const int T = 100;
    NoiseSchedule s = NoiseSchedule::linear_beta(T, 1e-4, 2e-2);
    const std::vector<double> oracle = cumulative_signal_oracle(T, 1e-4, 2e-2);
    for (int t = 0; t <= T; ++t)
        REQUIRE(s.a[static_cast<std::size_t>(t)] ==
                Catch::Approx(oracle[static_cast<std::size_t>(t)]).epsilon(1e-14));
    // Endpoint sanity for the default ramp over 100 steps.
    REQUIRE(s.a[100] < 0.5);
    REQUIRE(s.a[100] > 0.1);
}

TEST_CASE("noise schedule: validation rejects malformed coefficients") {
    REQUIRE_THROWS_AS(NoiseSchedule::linear_beta(0), std::invalid_argument);

    NoiseSchedule s = NoiseSchedule::linear_beta(10);
    NoiseSchedule bad = s;
    bad.a[0] = 0.999;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = s;
    bad.a[5] = bad.a[4];  // not strictly decreasing
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = s;
    bad.a[7] = -0.1;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = s;
    bad.a.pop_back();
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = s;
    bad.eta = -0.5;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    REQUIRE_THROWS_AS(s.check_step(11, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(s.check_step(0, 1), std::invalid_argument);
    REQUIRE_NOTHROW(s.check_step(0, 0));
    REQUIRE_THROWS_AS(s.sigma(0), std::invalid_argument);
}

TEST_CASE("noise schedule: single-step schedule is valid") {
    NoiseSchedule s = NoiseSchedule::linear_beta(1);
    REQUIRE(s.a.size() == 2);
    REQUIRE(s.a[1] == Catch::Approx(1.0 - 1e-4).epsilon(1e-15));
}

// ---------------------------------------------------------------------------
// Forward diffusion and the DDIM step pair
// ---------------------------------------------------------------------------

TEST_CASE("forward diffusion: t=0 is the identity and coefficients match the closed form") {
    NoiseSchedule s = NoiseSchedule::linear_beta(50);
    Rng rng(123);
    ImageTensor x0 = random_image(rng, 8, 8, 1);
    ImageTensor noise = random_image(rng, 8, 8, 1);

    ImageTensor same = hspace::forward_diffuse(x0, 0, noise, s);
    REQUIRE(hspace::max_abs_diff(same, x0) == 0.0);

    const int t = 20;
    ImageTensor xt = hspace::forward_diffuse(x0, t, noise, s);
    const double at = s.a[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < xt.data.size(); ++i)
        REQUIRE(xt.data[i] ==
                Catch::Approx(std::sqrt(at) * x0.data[i] + std::sqrt(1.0 - at) * noise.data[i])
                    .margin(1e-15));

    ImageTensor wrong(4, 4, 1);
    REQUIRE_THROWS_AS(hspace::forward_diffuse(x0, t, wrong, s), std::invalid_argument);
    REQUIRE_THROWS_AS(hspace::forward_diffuse(x0, 51, noise, s), std::invalid_argument);
}

TEST_CASE("ddim step: with the true noise one reverse step undoes one forward step") {
    NoiseSchedule s = NoiseSchedule::linear_beta(100);
    Rng rng(7);
    ImageTensor x0 = random_image(rng, 8, 8, 1);
    ImageTensor noise = random_image(rng, 8, 8, 1);

    for (int t : {1, 50, 100}) {
        ImageTensor xt = hspace::forward_diffuse(x0, t, noise, s);
        auto [xprev, trace] = hspace::ddim_step(xt, t, noise, s);
        ImageTensor expect = hspace::forward_diffuse(x0, t - 1, noise, s);
        REQUIRE(hspace::max_abs_diff(xprev, expect) < 1e-12);
        // The predicted clean image is exact when epsilon is the true noise.
        REQUIRE(hspace::max_abs_diff(trace.predicted_x0, x0) < 1e-10);
        REQUIRE(trace.sigma == 0.0);
        REQUIRE_FALSE(trace.used_noise);
        REQUIRE(trace.dt_coefficient ==
                Catch::Approx(std::sqrt(1.0 - s.a[static_cast<std::size_t>(t) - 1]))
                    .epsilon(1e-14));
    }
}

TEST_CASE("ddim step: inversion step is the exact algebraic inverse at eta=0") {
    NoiseSchedule s = NoiseSchedule::linear_beta(60);
    Rng rng(99);
    for (int t : {1, 17, 60}) {
        ImageTensor x_prev = random_image(rng, 8, 8, 1);
        ImageTensor eps = random_image(rng, 8, 8, 1);
        // up then down
        ImageTensor x_t = hspace::ddim_inversion_step(x_prev, t, eps, s);
        ImageTensor back = hspace::ddim_step(x_t, t, eps, s).first;
        REQUIRE(hspace::max_abs_diff(back, x_prev) < 1e-12);
        // down then up
        ImageTensor down = hspace::ddim_step(x_t, t, eps, s).first;
        ImageTensor up = hspace::ddim_inversion_step(down, t, eps, s);
        REQUIRE(hspace::max_abs_diff(up, x_t) < 1e-12);
    }
    ImageTensor x(8, 8, 1), bad(4, 4, 1);
    REQUIRE_THROWS_AS(hspace::ddim_inversion_step(x, 1, bad, s), std::invalid_argument);
    REQUIRE_THROWS_AS(hspace::ddim_step(x, 0, x, s), std::invalid_argument);
}

TEST_CASE("ddim step: stochastic schedules require explicit noise") {
    NoiseSchedule s;
    s.T = 2;
    s.a = {1.0, 0.9, 0.5};
    s.eta = 0.7;
    s.validate();
    REQUIRE(s.sigma(2) > 0.0);
    REQUIRE(s.sigma(1) == 0.0);  // (1 - a_0) = 0 kills the first-step noise scale

    Rng rng(5);
    ImageTensor x = random_image(rng, 4, 4, 1);
    ImageTensor eps = random_image(rng, 4, 4, 1);
    ImageTensor z = random_image(rng, 4, 4, 1);

    REQUIRE_THROWS_AS(hspace::ddim_step(x, 2, eps, s), std::invalid_argument);
    ImageTensor zbad(2, 2, 1);
    REQUIRE_THROWS_AS(hspace::ddim_step(x, 2, eps, s, &zbad), std::invalid_argument);

    auto [out, trace] = hspace::ddim_step(x, 2, eps, s, &z);
    REQUIRE(trace.used_noise);
    REQUIRE(trace.sigma == Catch::Approx(s.sigma(2)));

    // Same step on the deterministic version of the schedule, then add the
    // noise term manually: must match because D_t shrinks with sigma.
    NoiseSchedule det = s;
    det.eta = 0.0;
    ImageTensor det_out = hspace::ddim_step(x, 2, eps, det).first;
    const double dt_noisy = trace.dt_coefficient;
    const double dt_det = std::sqrt(1.0 - s.a[1]);
    REQUIRE(dt_noisy < dt_det);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double manual = det_out.data[i] + (dt_noisy - dt_det) * eps.data[i] +
                              trace.sigma * z.data[i];
        REQUIRE(out.data[i] == Catch::Approx(manual).margin(1e-13));
    }
}

TEST_CASE("ddim step: rejects schedules where the deterministic radicand goes negative") {
    NoiseSchedule s;
    s.T = 2;
    s.a = {1.0, 0.9, 0.1};
    s.eta = 1.2;  // sigma_2^2 > 1 - a_1
    s.validate();
    ImageTensor x(4, 4, 1, 0.1), eps(4, 4, 1, 0.2), z(4, 4, 1, 0.0);
    REQUIRE_THROWS_WITH(hspace::ddim_step(x, 2, eps, s, &z),
                        Catch::Matchers::ContainsSubstring("1 - a_{t-1} - sigma^2 < 0"));
}

TEST_CASE("ddim inversion and reverse drivers validate their arguments") {
    DenoiserModel model = DenoiserModel::random_init(2);
    NoiseSchedule stochastic = NoiseSchedule::linear_beta(10, 1e-4, 2e-2, 0.5);
    ImageTensor x(32, 32, 1, 0.0);
    REQUIRE_THROWS_AS(hspace::ddim_invert(x, model, stochastic), std::invalid_argument);

    NoiseSchedule s = NoiseSchedule::linear_beta(10);
    REQUIRE_THROWS_AS(hspace::ddim_reverse_to(x, -1, model, s), std::invalid_argument);
    REQUIRE_THROWS_AS(hspace::ddim_reverse_to(x, 11, model, s), std::invalid_argument);

    EditInjection bad;
    bad.delta = Vector::Ones(5);
    bad.window_hi = 10;
    bad.window_lo = 0;
    REQUIRE_THROWS_AS(hspace::ddim_reverse_to(x, 0, model, s, &bad), std::invalid_argument);

    // eta > 0 reverse requires a generator once sigma_t > 0.
    REQUIRE_THROWS_AS(hspace::ddim_reverse_to(x, 0, model, stochastic), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Edit injection
// ---------------------------------------------------------------------------

TEST_CASE("edit injection: composition is the strength-weighted direction sum") {
    Rng rng(4);
    Vector v1 = rng.normal_vector(6), v2 = rng.normal_vector(6);
    std::vector<SemanticDirection> dirs = {unit_direction(v1), unit_direction(v2)};

    EditInjection e = EditInjection::compose(dirs, {2.0, -0.5}, 9, 3);
    REQUIRE(e.delta.size() == 6);
    REQUIRE((e.delta - (2.0 * v1 - 0.5 * v2)).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE_FALSE(e.is_noop());

    REQUIRE_FALSE(e.active_at(2));
    REQUIRE(e.active_at(3));
    REQUIRE(e.active_at(9));
    REQUIRE_FALSE(e.active_at(10));
}

TEST_CASE("edit injection: zero strengths and empty sets are no-ops") {
    EditInjection empty;
    REQUIRE(empty.is_noop());

    Rng rng(8);
    std::vector<SemanticDirection> dirs = {unit_direction(rng.normal_vector(4))};
    EditInjection zero = EditInjection::compose(dirs, {0.0}, 5, 0);
    REQUIRE(zero.is_noop());
}

TEST_CASE("edit injection: validation") {
    Rng rng(9);
    std::vector<SemanticDirection> dirs = {unit_direction(rng.normal_vector(4)),
                                           unit_direction(rng.normal_vector(3))};
    REQUIRE_THROWS_AS(EditInjection::compose(dirs, {1.0}, 5, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(EditInjection::compose(dirs, {1.0, 1.0}, 5, 0),
                      std::invalid_argument);  // dimension mismatch between directions
    std::vector<SemanticDirection> one = {unit_direction(rng.normal_vector(4))};
    REQUIRE_THROWS_AS(EditInjection::compose(one, {1.0}, 2, 5), std::invalid_argument);
    const double nan = std::nan("");
    REQUIRE_THROWS_AS(EditInjection::compose(one, {nan}, 5, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Denoiser model
// ---------------------------------------------------------------------------

TEST_CASE("denoiser: initialization is deterministic and starts at zero output") {
    DenoiserModel a = DenoiserModel::random_init(41);
    DenoiserModel b = DenoiserModel::random_init(41);
    DenoiserModel c = DenoiserModel::random_init(42);
    REQUIRE(a.param_hash_hex() == b.param_hash_hex());
    REQUIRE(a.param_hash_hex() != c.param_hash_hex());

    // The output convolution is zero-initialized, so the predicted noise of a
    // fresh model is exactly zero while the bottleneck code is generically not.
    Rng rng(3);
    ImageTensor x = random_image(rng);
    auto res = a.denoise(x, 17);
    REQUIRE(res.epsilon.all_finite());
    for (double v : res.epsilon.data) REQUIRE(v == 0.0);
    REQUIRE(res.h.size() == DenoiserModel::kLatentDim);
    REQUIRE(res.h.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("denoiser: repeated evaluation is bit-identical") {
    DenoiserModel m = DenoiserModel::random_init(11);
    Rng rng(12);
    m.params().w7 = rng.normal_matrix(m.params().w7.rows(), m.params().w7.cols());
    ImageTensor x = random_image(rng);
    auto r1 = m.denoise(x, 9);
    auto r2 = m.denoise(x, 9);
    REQUIRE(hspace::max_abs_diff(r1.epsilon, r2.epsilon) == 0.0);
    REQUIRE((r1.h - r2.h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("denoiser: encode plus decode-from-bottleneck reproduces denoise exactly") {
    DenoiserModel m = DenoiserModel::random_init(21);
    Rng rng(22);
    m.params().w7 = 0.05 * rng.normal_matrix(m.params().w7.rows(), m.params().w7.cols());
    ImageTensor x = random_image(rng);

    auto enc = m.encode(x, 37);
    auto full = m.denoise(x, 37);
    REQUIRE((enc.h - full.h).cwiseAbs().maxCoeff() == 0.0);
    ImageTensor via_bottleneck = m.denoise_from_bottleneck(enc.h, enc.ctx);
    REQUIRE(hspace::max_abs_diff(via_bottleneck, full.epsilon) == 0.0);

    // A shifted code changes the output (the decoder actually reads h).
    Vector shifted = enc.h;
    shifted[0] += 1.0;
    ImageTensor edited = m.denoise_from_bottleneck(shifted, enc.ctx);
    REQUIRE(hspace::max_abs_diff(edited, full.epsilon) > 0.0);
}

TEST_CASE("denoiser: decoder context is rejected by a different model") {
    DenoiserModel m1 = DenoiserModel::random_init(31);
    DenoiserModel m2 = DenoiserModel::random_init(32);
    Rng rng(33);
    ImageTensor x = random_image(rng);
    auto enc = m1.encode(x, 5);
    REQUIRE_THROWS_WITH(m2.denoise_from_bottleneck(enc.h, enc.ctx),
                        Catch::Matchers::ContainsSubstring("context"));
    REQUIRE_THROWS_AS(m1.denoise_from_bottleneck(Vector::Zero(7), enc.ctx),
                      std::invalid_argument);

    // Mutating the model invalidates previously issued contexts.
    DenoiserModel m3 = m1;
    m3.params().w4(0, 0) += 0.5;
    REQUIRE_THROWS_AS(m3.denoise_from_bottleneck(enc.h, enc.ctx), std::invalid_argument);
}

TEST_CASE("denoiser: input validation") {
    DenoiserModel m = DenoiserModel::random_init(1);
    ImageTensor small(16, 16, 1);
    REQUIRE_THROWS_AS(m.denoise(small, 1), std::invalid_argument);
    ImageTensor x(32, 32, 1, 0.0);
    x.data[5] = std::nan("");
    REQUIRE_THROWS_AS(m.denoise(x, 1), std::invalid_argument);
    ImageTensor ok(32, 32, 1, 0.0);
    REQUIRE_THROWS_AS(m.denoise(ok, -1), std::invalid_argument);
}

TEST_CASE("decoder operator: matches the decoder and freezes its weights") {
    DenoiserModel m = DenoiserModel::random_init(55);
    Rng rng(56);
    m.params().w7 = 0.1 * rng.normal_matrix(m.params().w7.rows(), m.params().w7.cols());
    ImageTensor x = random_image(rng);
    auto enc = m.encode(x, 12);
    auto op = m.decoder_operator(enc.h, enc.ctx);

    REQUIRE(op.rows() == DenoiserModel::kOutputDim);
    REQUIRE(op.cols() == DenoiserModel::kLatentDim);

    ImageTensor eps = m.denoise_from_bottleneck(enc.h, enc.ctx);
    Vector at_base = op.apply(enc.h);
    for (std::size_t i = 0; i < eps.data.size(); ++i)
        REQUIRE(at_base[static_cast<hspace::Index>(i)] == eps.data[i]);

    Vector shifted = enc.h + 0.3 * rng.normal_vector(DenoiserModel::kLatentDim);
    Vector moved = op.apply(shifted);
    ImageTensor moved_img = m.denoise_from_bottleneck(shifted, enc.ctx);
    for (std::size_t i = 0; i < moved_img.data.size(); ++i)
        REQUIRE(moved[static_cast<hspace::Index>(i)] ==
                Catch::Approx(moved_img.data[i]).margin(1e-14));

    // Linearization is internally adjoint-consistent.
    REQUIRE(hspace::max_adjoint_discrepancy(op, 20, 77) < 1e-10);

    // The operator snapshots decoder weights: later mutation of the model
    // must not change what the operator computes.
    Vector before = op.apply(shifted);
    m.params().w7 *= 2.0;
    Vector after = op.apply(shifted);
    REQUIRE((before - after).cwiseAbs().maxCoeff() == 0.0);

    // Stale context is rejected at construction time.
    REQUIRE_THROWS_AS(m.decoder_operator(enc.h, enc.ctx), std::invalid_argument);
}

TEST_CASE("time embedding: distinct per timestep, bounded, validated") {
    REQUIRE_THROWS_AS(hspace::nn::time_embedding(3, 7), std::invalid_argument);
    REQUIRE_THROWS_AS(hspace::nn::time_embedding(3, 0), std::invalid_argument);

    std::vector<Vector> embs;
    for (int t = 0; t <= 100; ++t) embs.push_back(hspace::nn::time_embedding(t, 32));
    for (const Vector& e : embs) {
        REQUIRE(e.size() == 32);
        REQUIRE(e.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    }
    double min_gap = 1e300;
    for (std::size_t i = 0; i < embs.size(); ++i)
        for (std::size_t j = i + 1; j < embs.size(); ++j)
            min_gap = std::min(min_gap, (embs[i] - embs[j]).norm());
    REQUIRE(min_gap > 1e-3);
}

// ---------------------------------------------------------------------------
// Synthetic face corpus
// ---------------------------------------------------------------------------

TEST_CASE("face renderer: images are exactly affine in the factors") {
    FaceRenderer r(32);
    std::array<double, kFactorCount> zero{};
    REQUIRE(hspace::max_abs_diff(r.render(zero), r.base()) == 0.0);

    std::array<double, kFactorCount> g1 = {0.3, 0.8, -0.4, 0.6, -0.2};
    std::array<double, kFactorCount> g2 = {0.5, 0.1, 0.9, -0.7, 0.4};
    std::array<double, kFactorCount> sum;
    for (int k = 0; k < kFactorCount; ++k) sum[static_cast<std::size_t>(k)] =
        g1[static_cast<std::size_t>(k)] + g2[static_cast<std::size_t>(k)];

    ImageTensor lhs = r.render(g1);
    const ImageTensor rhs_b = r.render(g2), base = r.base(), direct = r.render(sum);
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        REQUIRE(lhs.data[i] + rhs_b.data[i] - base.data[i] ==
                Catch::Approx(direct.data[i]).margin(1e-12));

    // Unit-factor render minus base recovers each template.
    for (int k = 0; k < kFactorCount; ++k) {
        std::array<double, kFactorCount> e{};
        e[static_cast<std::size_t>(k)] = 1.0;
        ImageTensor rendered = r.render(e);
        ImageTensor tmpl = r.factor_template(k);
        for (std::size_t i = 0; i < tmpl.data.size(); ++i)
            REQUIRE(rendered.data[i] - base.data[i] ==
                    Catch::Approx(tmpl.data[i]).margin(1e-12));
    }
    REQUIRE_THROWS_AS(r.factor_template(kFactorCount), std::invalid_argument);
    REQUIRE_THROWS_AS(FaceRenderer(4), std::invalid_argument);
}

TEST_CASE("face renderer: no clipping anywhere over the factor box") {
    FaceRenderer r(32);
    hspace::FactorRanges ranges;
    // Affinity makes pixel extremes over the box occur at corners, so it is
    // enough to walk all 2^5 corners.
    for (int corner = 0; corner < (1 << kFactorCount); ++corner) {
        std::array<double, kFactorCount> g;
        for (int k = 0; k < kFactorCount; ++k)
            g[static_cast<std::size_t>(k)] = (corner >> k & 1)
                                                 ? ranges.hi[static_cast<std::size_t>(k)]
                                                 : ranges.lo[static_cast<std::size_t>(k)];
        ImageTensor img = r.render(g);
        for (double v : img.data) {
            REQUIRE(v <= 1.0);
            REQUIRE(v >= -1.0);
        }
    }
}

TEST_CASE("face renderer: facial templates are concentrated in their regions") {
    FaceRenderer r(32);
    hspace::RegionSet regions = hspace::default_face_regions(32, 1);
    const std::array<const char*, 4> owner = {"left_eye", "right_eye", "mouth", "mouth"};
    for (int k = 0; k < 4; ++k) {
        const hspace::RegionMask* region = regions.find(owner[static_cast<std::size_t>(k)]);
        REQUIRE(region != nullptr);
        ImageTensor tmpl = r.factor_template(k);
        double inside = 0.0, total = 0.0;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const double e = tmpl.at(0, y, x) * tmpl.at(0, y, x);
                total += e;
                if (region->in(0, y, x)) inside += e;
            }
        REQUIRE(total > 0.0);
        REQUIRE(inside / total > 0.9);
    }
    // Brightness is a uniform lift over the whole frame.
    ImageTensor bright = r.factor_template(4);
    REQUIRE(bright.data[0] > 0.0);
    for (double v : bright.data) REQUIRE(v == bright.data[0]);
}

TEST_CASE("default face regions: exact partition of the frame") {
    hspace::RegionSet regions = hspace::default_face_regions(32, 1);
    REQUIRE(regions.size() == 4);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < regions.size(); ++i) covered += regions[i].pixel_count;
    REQUIRE(covered == 32 * 32);
    const hspace::RegionMask* mouth = regions.find("mouth");
    REQUIRE(mouth != nullptr);
    REQUIRE(mouth->in(0, 20, 16));
    REQUIRE_FALSE(mouth->in(0, 5, 5));
    REQUIRE(regions.find("nose") == nullptr);
}

TEST_CASE("synthetic dataset: deterministic, in-range, and consistent with the renderer") {
    hspace::SynthConfig cfg;
    cfg.count = 12;
    cfg.seed = 404;
    FaceDataset a = hspace::synth_dataset(cfg);
    FaceDataset b = hspace::synth_dataset(cfg);
    REQUIRE(a.hash_hex() == b.hash_hex());

    cfg.seed = 405;
    FaceDataset c = hspace::synth_dataset(cfg);
    REQUIRE(a.hash_hex() != c.hash_hex());

    REQUIRE(a.size() == 12);
    REQUIRE(a.factors.rows() == 12);
    REQUIRE(a.factors.cols() == kFactorCount);

    hspace::FactorRanges ranges;
    FaceRenderer r(32);
    for (int i = 0; i < 12; ++i) {
        std::array<double, kFactorCount> g;
        for (int k = 0; k < kFactorCount; ++k) {
            const double v = a.factors(i, k);
            REQUIRE(v >= ranges.lo[static_cast<std::size_t>(k)]);
            REQUIRE(v <= ranges.hi[static_cast<std::size_t>(k)]);
            g[static_cast<std::size_t>(k)] = v;
        }
        REQUIRE(hspace::max_abs_diff(a.images[static_cast<std::size_t>(i)], r.render(g)) == 0.0);
    }

    hspace::SynthConfig badcfg;
    badcfg.count = 0;
    REQUIRE_THROWS_AS(hspace::synth_dataset(badcfg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

FaceDataset small_dataset(int count, std::uint64_t seed) {
    hspace::SynthConfig cfg;
    cfg.count = count;
    cfg.seed = seed;
    return hspace::synth_dataset(cfg);
}

}  // namespace

TEST_CASE("training: loss drops from the zero-prediction baseline") {
    FaceDataset ds = small_dataset(24, 1001);
    NoiseSchedule s = NoiseSchedule::linear_beta(50);
    TrainConfig cfg;
    cfg.steps = 150;
    cfg.batch_size = 8;
    cfg.learning_rate = 2e-3;
    cfg.log_every = 10;
    cfg.seed = 6;
    cfg.loss_threshold = 10.0;  // keep the holdout warning out of this test

    hspace::TrainResult res = hspace::train_denoiser(ds, s, cfg);
    const auto& curve = res.model.meta.loss_curve;
    REQUIRE_FALSE(curve.empty());
    // Zero-initialized output conv predicts zero noise, so the first recorded
    // loss sits near E|eps|^2 = 1.
    REQUIRE(curve.front() == Catch::Approx(1.0).margin(0.45));
    REQUIRE(res.model.meta.final_train_loss < 0.85 * curve.front());
    REQUIRE(res.model.meta.holdout_loss > 0.0);
    REQUIRE(std::isfinite(res.model.meta.holdout_loss));
    REQUIRE(res.model.meta.dataset_hash == ds.hash_hex());
    REQUIRE(res.model.meta.steps == 150);
    REQUIRE(res.state.steps_done == 150);
    REQUIRE(res.state.adam_t == 150);
    REQUIRE(res.state.adam_m.size() == res.model.param_count());
}

TEST_CASE("training: zero learning rate leaves the parameters bit-identical") {
    FaceDataset ds = small_dataset(8, 1002);
    NoiseSchedule s = NoiseSchedule::linear_beta(20);
    TrainConfig cfg;
    cfg.steps = 5;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.0;
    cfg.seed = 9;
    cfg.loss_threshold = 10.0;

    hspace::TrainResult res = hspace::train_denoiser(ds, s, cfg);
    DenoiserModel untouched =
        DenoiserModel::random_init(hspace::seed_for(cfg.seed, "model-init"));
    REQUIRE(res.model.param_hash_hex() == untouched.param_hash_hex());
}

TEST_CASE("training: bitwise deterministic for a fixed seed") {
    FaceDataset ds = small_dataset(8, 1003);
    NoiseSchedule s = NoiseSchedule::linear_beta(20);
    TrainConfig cfg;
    cfg.steps = 12;
    cfg.batch_size = 4;
    cfg.seed = 14;
    cfg.loss_threshold = 10.0;

    hspace::TrainResult a = hspace::train_denoiser(ds, s, cfg);
    hspace::TrainResult b = hspace::train_denoiser(ds, s, cfg);
    REQUIRE(a.model.param_hash_hex() == b.model.param_hash_hex());
    REQUIRE(a.model.meta.loss_curve == b.model.meta.loss_curve);

    cfg.seed = 15;
    hspace::TrainResult c = hspace::train_denoiser(ds, s, cfg);
    REQUIRE(a.model.param_hash_hex() != c.model.param_hash_hex());
}

TEST_CASE("training: resume continues the optimization trajectory") {
    FaceDataset ds = small_dataset(24, 1004);
    NoiseSchedule s = NoiseSchedule::linear_beta(50);
    TrainConfig cfg;
    cfg.steps = 120;
    cfg.batch_size = 8;
    cfg.seed = 21;
    cfg.log_every = 20;
    cfg.loss_threshold = 10.0;

    hspace::TrainResult full = hspace::train_denoiser(ds, s, cfg);

    TrainConfig half = cfg;
    half.steps = 60;
    hspace::TrainResult first = hspace::train_denoiser(ds, s, half);
    REQUIRE(first.state.steps_done == 60);

    hspace::TrainResult second =
        hspace::train_denoiser(ds, s, cfg, &first.model, &first.state);
    REQUIRE(second.state.steps_done == 120);
    REQUIRE(second.state.adam_t == 120);
    REQUIRE(second.warnings.empty());

    // The optimizer state carries the trajectory across the checkpoint: the
    // resumed end-of-run loss stays within 10% of the uninterrupted run.
    const double uninterrupted = full.model.meta.final_train_loss;
    const double resumed = second.model.meta.final_train_loss;
    REQUIRE(std::abs(resumed - uninterrupted) <= 0.10 * uninterrupted);

    // Step-target bookkeeping.
    REQUIRE_THROWS_WITH(hspace::train_denoiser(ds, s, half, &first.model, &first.state),
                        Catch::Matchers::ContainsSubstring("already reached"));
    REQUIRE_THROWS_AS(hspace::train_denoiser(ds, s, cfg, &first.model, nullptr),
                      std::invalid_argument);

    // Resuming against a different corpus is allowed but flagged.
    FaceDataset other = small_dataset(24, 9999);
    hspace::TrainResult crossed =
        hspace::train_denoiser(other, s, cfg, &first.model, &first.state);
    bool flagged = false;
    for (const std::string& w : crossed.warnings)
        if (w.find("different dataset") != std::string::npos) flagged = true;
    REQUIRE(flagged);
}

TEST_CASE("training: divergence raises instead of returning garbage") {
    FaceDataset ds = small_dataset(8, 1005);
    NoiseSchedule s = NoiseSchedule::linear_beta(20);
    TrainConfig cfg;
    cfg.steps = 10;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e40;
    cfg.seed = 30;
    REQUIRE_THROWS_AS(hspace::train_denoiser(ds, s, cfg), std::runtime_error);
}

TEST_CASE("training: validation and loss helper") {
    FaceDataset empty;
    NoiseSchedule s = NoiseSchedule::linear_beta(10);
    TrainConfig cfg;
    REQUIRE_THROWS_AS(hspace::train_denoiser(empty, s, cfg), std::invalid_argument);

    FaceDataset ds = small_dataset(4, 1006);
    TrainConfig bad = cfg;
    bad.steps = 0;
    REQUIRE_THROWS_AS(hspace::train_denoiser(ds, s, bad), std::invalid_argument);

    DenoiserModel m = DenoiserModel::random_init(3);
    const double l1 = hspace::epsilon_prediction_loss(m, s, ds.images, 42);
    const double l2 = hspace::epsilon_prediction_loss(m, s, ds.images, 42);
    REQUIRE(l1 == l2);
    REQUIRE(l1 > 0.0);
    REQUIRE_THROWS_AS(hspace::epsilon_prediction_loss(m, s, {}, 42), std::invalid_argument);
}
