#pragma once

#include <cmath>
#include <vector>

#include "tsimg/core.hpp"
#include "tsimg/transforms.hpp"

namespace tsimg {

// EDM noise-schedule and sampler parameters.
struct DiffusionConfig {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int num_steps = 18;
    double sigma_data = 0.5;
    double p_mean = -1.2;  // log-normal sigma sampling for training
    double p_std = 1.2;

    void validate() const {
        check(sigma_min > 0 && sigma_max > 0 && sigma_min < sigma_max,
              "diffusion: require 0 < sigma_min < sigma_max");
        check(rho > 0, "diffusion: rho must be positive");
        check(num_steps >= 2, "diffusion: num_steps must be >= 2");
        check(sigma_data > 0 && p_std > 0, "diffusion: sigma_data and p_std must be positive");
    }
};

// N+1 strictly decreasing noise levels, last one 0.
struct NoiseLevelSchedule {
    std::vector<double> sigmas;
    int steps() const { return int(sigmas.size()) - 1; }
};

inline NoiseLevelSchedule build_schedule(const DiffusionConfig& cfg) {
    cfg.validate();
    NoiseLevelSchedule sched;
    const int N = cfg.num_steps;
    const double inv_rho = 1.0 / cfg.rho;
    const double a = std::pow(cfg.sigma_max, inv_rho);
    const double b = std::pow(cfg.sigma_min, inv_rho);
    sched.sigmas.resize(N + 1);
    for (int i = 0; i < N; ++i)
        sched.sigmas[i] = std::pow(a + (double(i) / (N - 1)) * (b - a), cfg.rho);
    sched.sigmas[0] = cfg.sigma_max;      // endpoints exact
    sched.sigmas[N - 1] = cfg.sigma_min;
    sched.sigmas[N] = 0.0;
    return sched;
}

// Denoiser interface: denoise(x, sigma) estimates the clean image D(x; sigma).
// The score follows as (D(x;sigma) - x) / sigma^2.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual ImageTensor denoise(const ImageTensor& x_noisy, double sigma) const = 0;
};

// EDM preconditioning coefficients around a raw network F:
//   D(x;sigma) = c_skip * x + c_out * F(c_in * x, c_noise)
struct Preconditioning {
    double c_skip, c_out, c_in, c_noise;
};

inline Preconditioning preconditioning_for(double sigma, double sigma_data) {
    const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    return {d2 / (s2 + d2), sigma * sigma_data / std::sqrt(s2 + d2),
            1.0 / std::sqrt(s2 + d2), std::log(sigma) / 4.0};
}

inline double loss_weight(double sigma, double sigma_data) {
    const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    return (s2 + d2) / (s2 * d2);
}

// Weighted denoising score-matching loss:
//   lambda(sigma) * mean((D(x0 + sigma*noise; sigma) - x0)^2)
inline double training_loss(const ScoreModel& model, const ImageTensor& x0,
                            const ImageTensor& noise, double sigma,
                            const DiffusionConfig& cfg) {
    check(sigma > 0, "training_loss: sigma must be positive");
    if (noise.numel() != x0.numel() || noise.channels != x0.channels)
        throw ShapeError("training_loss: noise/x0 shape mismatch");
    ImageTensor noisy = x0;
    for (size_t i = 0; i < noisy.numel(); ++i) noisy.values[i] += sigma * noise.values[i];
    ImageTensor d = model.denoise(noisy, sigma);
    if (d.numel() != x0.numel()) throw ShapeError("training_loss: model changed shape");
    double se = 0.0;
    for (size_t i = 0; i < x0.numel(); ++i) {
        double e = d.values[i] - x0.values[i];
        se += e * e;
    }
    return loss_weight(sigma, cfg.sigma_data) * se / double(x0.numel());
}

// ln(sigma) ~ N(P_mean, P_std^2)
inline double sample_sigma_for_training(const DiffusionConfig& cfg, Rng& rng) {
    return std::exp(cfg.p_mean + cfg.p_std * rng.normal());
}

inline ImageTensor score_from_denoiser(const ImageTensor& x, double sigma,
                                       const ScoreModel& model) {
    check(sigma > 0, "score_from_denoiser: sigma must be positive");
    ImageTensor d = model.denoise(x, sigma);
    if (d.numel() != x.numel()) throw ShapeError("score_from_denoiser: model changed shape");
    const double inv_s2 = 1.0 / (sigma * sigma);
    for (size_t i = 0; i < d.numel(); ++i) d.values[i] = (d.values[i] - x.values[i]) * inv_s2;
    return d;
}

namespace detail {

inline void require_finite_step(const ImageTensor& x, int step) {
    if (!all_finite(x.values))
        throw RuntimeFailure("sampler: non-finite value at step " + std::to_string(step));
}

}  // namespace detail

// Deterministic second-order (Heun) probability-flow ODE sampler.
inline ImageTensor heun_sample(const ScoreModel& model, ImageShape shape,
                               const NoiseLevelSchedule& sched, uint64_t seed) {
    check(sched.steps() >= 1 && sched.sigmas.back() == 0.0, "heun_sample: invalid schedule");
    Rng rng(seed);
    ImageTensor x(shape.C, shape.H, shape.W);
    rng.fill_normal(x.values);
    for (double& v : x.values) v *= sched.sigmas[0];

    const int N = sched.steps();
    for (int i = 0; i < N; ++i) {
        const double s_cur = sched.sigmas[i], s_next = sched.sigmas[i + 1];
        const double dt = s_next - s_cur;
        ImageTensor d = model.denoise(x, s_cur);
        if (d.numel() != x.numel()) throw ShapeError("heun_sample: model changed shape");
        // d_i = (x - D(x;sigma)) / sigma
        for (size_t j = 0; j < x.numel(); ++j) d.values[j] = (x.values[j] - d.values[j]) / s_cur;
        ImageTensor xe = x;
        for (size_t j = 0; j < x.numel(); ++j) xe.values[j] += dt * d.values[j];
        if (s_next > 0.0) {
            ImageTensor d2 = model.denoise(xe, s_next);
            for (size_t j = 0; j < x.numel(); ++j)
                x.values[j] += dt * 0.5 *
                               (d.values[j] + (xe.values[j] - d2.values[j]) / s_next);
        } else {
            x = std::move(xe);
        }
        detail::require_finite_step(x, i);
    }
    return x;
}

// Exact denoiser for data ~ N(0, s^2 I): D(x;sigma) = s^2 x / (s^2 + sigma^2).
// Closed-form oracle model used by sampler and loss diagnostics.
class GaussianDenoiser : public ScoreModel {
public:
    explicit GaussianDenoiser(double data_std) : s2_(data_std * data_std) {}

    ImageTensor denoise(const ImageTensor& x, double sigma) const override {
        ImageTensor d = x;
        const double c = s2_ / (s2_ + sigma * sigma);
        for (double& v : d.values) v *= c;
        return d;
    }

private:
    double s2_;
};

}  // namespace tsimg
