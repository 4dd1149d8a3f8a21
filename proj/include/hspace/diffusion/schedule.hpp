#pragma once

// Noise schedule and the elementary DDIM steps.
//
// Forward process: x_t = sqrt(a_t) x_0 + sqrt(1 - a_t) e with cumulative
// signal coefficients a_t (a_0 = 1, strictly decreasing). Reverse step:
//
//   P_t     = (x_t - sqrt(1 - a_t) eps) / sqrt(a_t)        (predicted x_0)
//   x_{t-1} = sqrt(a_{t-1}) P_t + D_t eps + sigma_t z
//   D_t     = sqrt(1 - a_{t-1} - sigma_t^2)
//   sigma_t = eta sqrt((1 - a_{t-1}) / (1 - a_t)) sqrt(1 - a_t / a_{t-1})
//
// The D_t radicand uses a_{t-1}: that is the standard deterministic update
// and the only choice under which eta = 0 makes one reverse step exactly
// invert one forward step given the true eps. eta = 0 forces all sigma_t = 0.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/diffusion/image.hpp"

namespace hspace {

struct NoiseSchedule {
    int T = 0;
    std::vector<double> a;  // size T+1, a[0] = 1, strictly decreasing, in (0, 1]
    double eta = 0.0;

    double sigma(int t) const {
        check_step(t, 1);
        if (eta == 0.0) return 0.0;
        const double at = a[static_cast<std::size_t>(t)];
        const double ap = a[static_cast<std::size_t>(t) - 1];
        return eta * std::sqrt((1.0 - ap) / (1.0 - at)) * std::sqrt(1.0 - at / ap);
    }

    void check_step(int t, int lo) const {
        if (t < lo || t > T)
            throw std::invalid_argument("NoiseSchedule: timestep " + std::to_string(t) +
                                        " outside [" + std::to_string(lo) + ", " +
                                        std::to_string(T) + "]");
    }

    void validate() const {
        if (T < 1) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
        if (a.size() != static_cast<std::size_t>(T) + 1)
            throw std::invalid_argument("NoiseSchedule: coefficient vector must have T+1 entries");
        if (a[0] != 1.0) throw std::invalid_argument("NoiseSchedule: a_0 must equal 1");
        for (int t = 1; t <= T; ++t) {
            const double at = a[static_cast<std::size_t>(t)];
            if (!(at > 0.0 && at < a[static_cast<std::size_t>(t) - 1]))
                throw std::invalid_argument(
                    "NoiseSchedule: a_t must be strictly decreasing and positive (t=" +
                    std::to_string(t) + ")");
        }
        if (eta < 0.0) throw std::invalid_argument("NoiseSchedule: eta must be >= 0");
    }

    // DDPM-style linear beta ramp; a_t is the running product of (1 - beta_s).
    static NoiseSchedule linear_beta(int T, double beta_start = 1e-4, double beta_end = 2e-2,
                                     double eta = 0.0) {
        if (T < 1) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
        NoiseSchedule s;
        s.T = T;
        s.eta = eta;
        s.a.resize(static_cast<std::size_t>(T) + 1);
        s.a[0] = 1.0;
        double prod = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double beta =
                T == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) /
                             static_cast<double>(T - 1);
            prod *= 1.0 - beta;
            s.a[static_cast<std::size_t>(t)] = prod;
        }
        s.validate();
        return s;
    }
};

inline ImageTensor forward_diffuse(const ImageTensor& x0, int t, const ImageTensor& noise,
                                   const NoiseSchedule& s) {
    s.check_step(t, 0);
    if (!x0.same_shape(noise)) throw std::invalid_argument("forward_diffuse: noise shape mismatch");
    if (t == 0) return x0;
    const double at = s.a[static_cast<std::size_t>(t)];
    const double cs = std::sqrt(at), cn = std::sqrt(1.0 - at);
    ImageTensor out = x0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = cs * x0.data[i] + cn * noise.data[i];
    return out;
}

struct DdimStepTrace {
    ImageTensor predicted_x0;  // P_t
    double dt_coefficient = 0.0;
    double sigma = 0.0;
    bool used_noise = false;
};

// One reverse step t -> t-1. `z` must be supplied exactly when eta > 0.
inline std::pair<ImageTensor, DdimStepTrace> ddim_step(const ImageTensor& x_t, int t,
                                                       const ImageTensor& epsilon,
                                                       const NoiseSchedule& s,
                                                       const ImageTensor* z = nullptr) {
    s.check_step(t, 1);
    if (!x_t.same_shape(epsilon)) throw std::invalid_argument("ddim_step: epsilon shape mismatch");
    const double at = s.a[static_cast<std::size_t>(t)];
    const double ap = s.a[static_cast<std::size_t>(t) - 1];
    const double sigma = s.sigma(t);
    const double radicand = 1.0 - ap - sigma * sigma;
    if (radicand < 0.0)
        throw std::invalid_argument("ddim_step: 1 - a_{t-1} - sigma^2 < 0 at t=" +
                                    std::to_string(t) + " (invalid schedule/eta combination)");
    if (sigma > 0.0 && z == nullptr)
        throw std::invalid_argument("ddim_step: stochastic step (eta > 0) requires noise z");
    if (z != nullptr && !z->same_shape(x_t))
        throw std::invalid_argument("ddim_step: z shape mismatch");

    const double inv_sqrt_at = 1.0 / std::sqrt(at);
    const double c_eps = std::sqrt(1.0 - at);
    const double c_prev = std::sqrt(ap);
    const double d_t = std::sqrt(radicand);

    DdimStepTrace trace;
    trace.predicted_x0 = x_t;
    trace.dt_coefficient = d_t;
    trace.sigma = sigma;
    trace.used_noise = sigma > 0.0;

    ImageTensor out = x_t;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double p = (x_t.data[i] - c_eps * epsilon.data[i]) * inv_sqrt_at;
        trace.predicted_x0.data[i] = p;
        double v = c_prev * p + d_t * epsilon.data[i];
        if (trace.used_noise) v += sigma * z->data[i];
        out.data[i] = v;
    }
    return {std::move(out), std::move(trace)};
}

// One deterministic inversion step t-1 -> t, the algebraic inverse of
// ddim_step at eta = 0 when the same epsilon is used for both:
//   P = (x_{t-1} - sqrt(1 - a_{t-1}) eps) / sqrt(a_{t-1})
//   x_t = sqrt(a_t) P + sqrt(1 - a_t) eps.
inline ImageTensor ddim_inversion_step(const ImageTensor& x_prev, int t,
                                       const ImageTensor& epsilon, const NoiseSchedule& s) {
    s.check_step(t, 1);
    if (!x_prev.same_shape(epsilon))
        throw std::invalid_argument("ddim_inversion_step: epsilon shape mismatch");
    const double at = s.a[static_cast<std::size_t>(t)];
    const double ap = s.a[static_cast<std::size_t>(t) - 1];
    const double inv_sqrt_ap = 1.0 / std::sqrt(ap);
    const double c_prev = std::sqrt(1.0 - ap);
    const double c_t = std::sqrt(at), c_eps = std::sqrt(1.0 - at);
    ImageTensor out = x_prev;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double p = (x_prev.data[i] - c_prev * epsilon.data[i]) * inv_sqrt_ap;
        out.data[i] = c_t * p + c_eps * epsilon.data[i];
    }
    return out;
}

}  // namespace hspace
