#pragma once

// Epsilon-prediction training for the toy denoiser: sample an image, a
// timestep, and Gaussian noise; noise the image via the forward process; fit
// the model's noise prediction by MSE with Adam. Single-threaded and
// deterministic for a fixed seed (batching order, timesteps, and noise all
// derive from one generator). Training can stop at a checkpoint and resume:
// the optimizer moments travel with the model so the loss picks up where it
// left off.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/core/matrix.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/diffusion/model.hpp"
#include "hspace/diffusion/schedule.hpp"
#include "hspace/diffusion/synth.hpp"

namespace hspace {

struct TrainConfig {
    int steps = 1200;  // total step target, including any resumed progress
    int batch_size = 16;
    double learning_rate = 2e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    double holdout_fraction = 0.1;   // trailing images reserved for evaluation
    double loss_threshold = 0.15;    // holdout MSE above this emits a warning
    int log_every = 25;
};

// Optimizer state plus progress counter; checkpoints persist this alongside
// the parameters so a resumed run continues the same trajectory.
struct TrainState {
    Vector adam_m;
    Vector adam_v;
    long adam_t = 0;
    int steps_done = 0;

    bool empty() const { return adam_m.size() == 0; }
};

struct TrainResult {
    DenoiserModel model;
    TrainState state;
    std::vector<std::string> warnings;
};

class Adam {
  public:
    Adam(Index n, double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

    void restore(const Vector& m, const Vector& v, long t) {
        if (m.size() != m_.size() || v.size() != v_.size())
            throw std::invalid_argument("Adam::restore: moment dimension mismatch");
        m_ = m;
        v_ = v;
        t_ = t;
    }

    const Vector& m() const { return m_; }
    const Vector& v() const { return v_; }
    long t() const { return t_; }

    void step(Vector& params, const Vector& grad) {
        if (grad.size() != m_.size() || params.size() != m_.size())
            throw std::invalid_argument("Adam: dimension mismatch");
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
        // lr = 0 must leave parameters bitwise untouched (moments still
        // advance), so skip the subtraction rather than subtract a signed 0.
        if (lr_ == 0.0) return;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (Index i = 0; i < params.size(); ++i) {
            const double mhat = m_[i] / bc1;
            const double vhat = v_[i] / bc2;
            params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }

  private:
    double lr_, beta1_, beta2_, eps_;
    Vector m_, v_;
    long t_ = 0;
};

// Mean epsilon-prediction MSE over a set of images with deterministic
// (timestep, noise) draws, used for the held-out evaluation.
inline double epsilon_prediction_loss(const DenoiserModel& model, const NoiseSchedule& s,
                                      const std::vector<ImageTensor>& images,
                                      std::uint64_t seed) {
    if (images.empty()) throw std::invalid_argument("epsilon_prediction_loss: no images");
    Rng rng(seed);
    double acc = 0.0;
    for (const ImageTensor& x0 : images) {
        const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.T)));
        ImageTensor noise(x0.h, x0.w, x0.c);
        for (double& v : noise.data) v = rng.normal();
        ImageTensor x_t = forward_diffuse(x0, t, noise, s);
        acc += mse(model.denoise(x_t, t).epsilon, noise);
    }
    return acc / static_cast<double>(images.size());
}

// Trains toward config.steps total steps. Pass a previously returned model +
// state to continue an interrupted run; the loss curve appends and the Adam
// moments carry over.
inline TrainResult train_denoiser(const FaceDataset& dataset, const NoiseSchedule& schedule,
                                  const TrainConfig& config,
                                  const DenoiserModel* resume_model = nullptr,
                                  const TrainState* resume_state = nullptr) {
    if (dataset.images.empty()) throw std::invalid_argument("train_denoiser: empty dataset");
    if (config.steps < 1 || config.batch_size < 1)
        throw std::invalid_argument("train_denoiser: steps and batch_size must be >= 1");
    if ((resume_model == nullptr) != (resume_state == nullptr))
        throw std::invalid_argument("train_denoiser: resume needs both model and state");
    schedule.validate();

    // Trailing slice becomes the holdout; with very small datasets everything
    // trains and the holdout evaluation falls back to the training images.
    const auto n_total = static_cast<int>(dataset.images.size());
    int n_holdout = static_cast<int>(std::floor(config.holdout_fraction * n_total));
    if (n_total - n_holdout < 1) n_holdout = 0;
    const int n_train = n_total - n_holdout;

    TrainResult out;
    int start_step = 0;
    if (resume_model) {
        out.model = *resume_model;
        start_step = resume_state->steps_done;
        if (start_step >= config.steps)
            throw std::invalid_argument("train_denoiser: step target " +
                                        std::to_string(config.steps) +
                                        " already reached by resumed state (" +
                                        std::to_string(start_step) + ")");
        if (!out.model.meta.dataset_hash.empty() &&
            out.model.meta.dataset_hash != dataset.hash_hex())
            out.warnings.push_back("resumed training uses a different dataset than the checkpoint");
    } else {
        out.model = DenoiserModel::random_init(seed_for(config.seed, "model-init"));
        out.model.meta = TrainingMeta{};
    }
    DenoiserModel& model = out.model;

    // A resumed run draws from a fresh stream tied to its start step; the
    // optimizer state, not the sample stream, is what keeps the trajectory
    // continuous.
    const std::string rng_label =
        start_step == 0 ? "train-loop" : "train-loop@" + std::to_string(start_step);
    Rng rng(seed_for(config.seed, rng_label));
    Adam opt(model.param_count(), config.learning_rate, config.adam_beta1, config.adam_beta2,
             config.adam_eps);
    if (resume_state && !resume_state->empty())
        opt.restore(resume_state->adam_m, resume_state->adam_v, resume_state->adam_t);

    model.meta.dataset_hash = dataset.hash_hex();
    model.meta.seed = config.seed;
    model.meta.steps = config.steps;

    DenoiserParams grads = model.params();  // same shapes; zeroed below
    std::vector<double> recent;
    for (int step = start_step; step < config.steps; ++step) {
        grads.set_zero();
        double loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            const auto idx = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n_train)));
            const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.T)));
            const ImageTensor& x0 = dataset.images[idx];
            ImageTensor noise(x0.h, x0.w, x0.c);
            for (double& v : noise.data) v = rng.normal();
            ImageTensor x_t = forward_diffuse(x0, t, noise, schedule);

            DenoiserModel::TrainTrace trace;
            ImageTensor eps = model.forward_train(x_t, t, trace);
            loss += mse(eps, noise);

            // d(mean-over-batch-and-pixels)/d(eps)
            const double scale =
                2.0 / (static_cast<double>(eps.size()) * static_cast<double>(config.batch_size));
            DenseMatrix geps(1, static_cast<Index>(eps.size()));
            for (std::size_t i = 0; i < eps.size(); ++i)
                geps(0, static_cast<Index>(i)) = scale * (eps.data[i] - noise.data[i]);
            model.backward_train(geps, trace, grads);
        }
        loss /= static_cast<double>(config.batch_size);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_denoiser: loss diverged (non-finite) at step " +
                                     std::to_string(step));

        Vector flat = model.params().flatten();
        Vector gflat = grads.flatten();
        opt.step(flat, gflat);
        model.params().unflatten(flat);

        recent.push_back(loss);
        if (recent.size() > 50) recent.erase(recent.begin());
        if (step % config.log_every == 0 || step == config.steps - 1)
            model.meta.loss_curve.push_back(loss);
    }

    double tail = 0.0;
    for (double l : recent) tail += l;
    model.meta.final_train_loss = tail / static_cast<double>(recent.size());

    std::vector<ImageTensor> holdout(dataset.images.end() - n_holdout, dataset.images.end());
    if (holdout.empty())
        holdout.assign(dataset.images.begin(), dataset.images.end());
    model.meta.holdout_loss =
        epsilon_prediction_loss(model, schedule, holdout, seed_for(config.seed, "holdout-eval"));
    if (model.meta.holdout_loss > config.loss_threshold)
        out.warnings.push_back("held-out loss " + std::to_string(model.meta.holdout_loss) +
                               " exceeds threshold " + std::to_string(config.loss_threshold));

    out.state.adam_m = opt.m();
    out.state.adam_v = opt.v();
    out.state.adam_t = opt.t();
    out.state.steps_done = config.steps;
    return out;
}

}  // namespace hspace
