#pragma once

// Deterministic DDIM trajectories for the toy denoiser: inversion of a clean
// image to x_T, reverse generation down to an arbitrary timestep, and h-space
// edit injection during the reverse pass.
//
// Inversion runs the up-step t-1 -> t with the model's noise prediction at
// (x_{t-1}, t-1); the reverse pass steps t -> t-1 with the prediction at
// (x_t, t). When the two predictions agree along the path the round trip is
// exact by construction, so the residual error measures only the model's
// local drift between adjacent steps.
//
// Edits follow the injected-bottleneck form: inside the window the noise is
// recomputed from h_t + sum_i alpha_i v_i with skips frozen, where h_t is
// re-extracted from the current x_t at every step. A zero edit (all
// strengths zero) bypasses injection entirely and is bitwise identical to
// the unedited pass.

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hspace/core/matrix.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/diffusion/model.hpp"
#include "hspace/diffusion/schedule.hpp"
#include "hspace/direction.hpp"

namespace hspace {

struct EditInjection {
    Vector delta;       // precomposed sum of alpha_i v_i; empty = no edit
    int window_hi = 0;  // inject while window_lo <= t <= window_hi
    int window_lo = 0;

    bool is_noop() const {
        if (delta.size() == 0) return true;
        for (Index i = 0; i < delta.size(); ++i)
            if (delta[i] != 0.0) return false;
        return true;
    }
    bool active_at(int t) const { return t >= window_lo && t <= window_hi; }

    static EditInjection compose(const std::vector<Vector>& directions,
                                 const std::vector<double>& strengths, int window_hi,
                                 int window_lo) {
        if (directions.size() != strengths.size())
            throw std::invalid_argument("EditInjection: " + std::to_string(directions.size()) +
                                        " directions but " + std::to_string(strengths.size()) +
                                        " strengths");
        if (window_lo > window_hi)
            throw std::invalid_argument("EditInjection: window_lo exceeds window_hi");
        EditInjection e;
        e.window_hi = window_hi;
        e.window_lo = window_lo;
        for (std::size_t i = 0; i < directions.size(); ++i) {
            if (!std::isfinite(strengths[i]))
                throw std::invalid_argument("EditInjection: non-finite strength");
            const Vector& v = directions[i];
            if (e.delta.size() == 0) e.delta = Vector::Zero(v.size());
            if (v.size() != e.delta.size())
                throw std::invalid_argument("EditInjection: direction dimension mismatch");
            e.delta += strengths[i] * v;
        }
        return e;
    }

    static EditInjection compose(const std::vector<SemanticDirection>& directions,
                                 const std::vector<double>& strengths, int window_hi,
                                 int window_lo) {
        std::vector<Vector> vs;
        vs.reserve(directions.size());
        for (const auto& d : directions) vs.push_back(d.v);
        return compose(vs, strengths, window_hi, window_lo);
    }
};

// Deterministic inversion x_0 -> x_T (eta must be 0).
inline ImageTensor ddim_invert(const ImageTensor& x0, const DenoiserModel& model,
                               const NoiseSchedule& s) {
    if (s.eta != 0.0)
        throw std::invalid_argument("ddim_invert: inversion requires a deterministic schedule "
                                    "(eta = 0)");
    ImageTensor x = x0;
    for (int t = 1; t <= s.T; ++t) {
        ImageTensor eps = model.denoise(x, t - 1).epsilon;
        x = ddim_inversion_step(x, t, eps, s);
    }
    return x;
}

// Reverse pass from x_T down to x_{target_t}. `edit`, when present and not a
// no-op, replaces the noise prediction inside the window by the decoder
// output at h_t + delta. For eta > 0 an Rng must be supplied for the
// stochastic term.
inline ImageTensor ddim_reverse_to(const ImageTensor& x_T, int target_t,
                                   const DenoiserModel& model, const NoiseSchedule& s,
                                   const EditInjection* edit = nullptr, Rng* rng = nullptr) {
    if (target_t < 0 || target_t > s.T)
        throw std::invalid_argument("ddim_reverse_to: target timestep " +
                                    std::to_string(target_t) + " outside [0, " +
                                    std::to_string(s.T) + "]");
    const bool editing = edit != nullptr && !edit->is_noop();
    if (editing && edit->delta.size() != DenoiserModel::kLatentDim)
        throw std::invalid_argument("ddim_reverse_to: edit direction dimension " +
                                    std::to_string(edit->delta.size()) + " does not match d_h " +
                                    std::to_string(DenoiserModel::kLatentDim));

    ImageTensor x = x_T;
    for (int t = s.T; t > target_t; --t) {
        ImageTensor eps;
        if (editing && edit->active_at(t)) {
            DenoiserModel::DenoiseResult r = model.denoise(x, t);
            eps = model.denoise_from_bottleneck(r.h + edit->delta, r.ctx);
        } else {
            eps = model.denoise(x, t).epsilon;
        }
        if (s.sigma(t) > 0.0) {
            if (rng == nullptr)
                throw std::invalid_argument("ddim_reverse_to: eta > 0 requires an Rng");
            ImageTensor z(x.h, x.w, x.c);
            for (double& v : z.data) v = rng->normal();
            x = ddim_step(x, t, eps, s, &z).first;
        } else {
            x = ddim_step(x, t, eps, s).first;
        }
    }
    return x;
}

// Full generation: reverse the whole chain to x_0.
inline ImageTensor ddim_generate(const ImageTensor& x_T, const DenoiserModel& model,
                                 const NoiseSchedule& s, const EditInjection* edit = nullptr,
                                 Rng* rng = nullptr) {
    return ddim_reverse_to(x_T, 0, model, s, edit, rng);
}

}  // namespace hspace
