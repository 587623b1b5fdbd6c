#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tsimg/diffusion.hpp"

using namespace tsimg;

namespace {

// D(x; sigma) = x: pretends its input is already clean
class IdentityModel : public ScoreModel {
public:
    ImageTensor denoise(const ImageTensor& x, double) const override { return x; }
};

class PerfectModel : public ScoreModel {
public:
    explicit PerfectModel(ImageTensor x0) : x0_(std::move(x0)) {}
    ImageTensor denoise(const ImageTensor&, double) const override { return x0_; }

private:
    ImageTensor x0_;
};

}  // namespace

TEST_CASE("noise schedule hits sigma_max and sigma_min at its endpoints") {
    DiffusionConfig cfg;
    auto sched = build_schedule(cfg);
    REQUIRE(int(sched.sigmas.size()) == cfg.num_steps + 1);
    CHECK(sched.sigmas[0] == cfg.sigma_max);
    CHECK(sched.sigmas[size_t(cfg.num_steps) - 1] == doctest::Approx(cfg.sigma_min).epsilon(1e-12));
    CHECK(sched.sigmas.back() == 0.0);
}

TEST_CASE("rho = 1 gives linearly spaced noise levels") {
    DiffusionConfig cfg;
    cfg.sigma_min = 1.0;
    cfg.sigma_max = 3.0;
    cfg.rho = 1.0;
    cfg.num_steps = 3;
    auto sched = build_schedule(cfg);
    REQUIRE(sched.sigmas.size() == 4);
    CHECK(sched.sigmas[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(sched.sigmas[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(sched.sigmas[2] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sched.sigmas[3] == 0.0);
}

TEST_CASE("mid-schedule value matches a high-precision reference") {
    DiffusionConfig cfg;  // 0.002 / 80 / rho 7 / 18 steps
    auto sched = build_schedule(cfg);
    CHECK(sched.sigmas[9] == doctest::Approx(1.9233398370400499).epsilon(1e-13));
}

TEST_CASE("a perfect denoiser has zero training loss") {
    ImageTensor x0(1, 4, 4);
    Rng rng(1);
    rng.fill_normal(x0.values);
    ImageTensor noise(1, 4, 4);
    rng.fill_normal(noise.values);
    PerfectModel m(x0);
    DiffusionConfig cfg;
    CHECK(training_loss(m, x0, noise, 1.3, cfg) == 0.0);
}

TEST_CASE("preconditioning collapses to the identity as sigma -> 0") {
    auto pc = preconditioning_for(1e-9, 0.5);
    CHECK(pc.c_skip == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(pc.c_out) < 1e-8);
    CHECK(pc.c_in == doctest::Approx(2.0).epsilon(1e-6));  // 1/sigma_data
}

TEST_CASE("gaussian-data optimal denoiser loss matches the closed form") {
    // data ~ N(0, s^2 I), D(x) = s^2 x / (s^2 + sigma^2):
    // E[(D - x0)^2] = sigma^2 s^2 / (s^2 + sigma^2) per element
    const double s = 0.5, sigma = 0.7;
    DiffusionConfig cfg;
    GaussianDenoiser model(s);
    Rng rng(42);
    const int draws = 100000;
    double acc = 0.0;
    ImageTensor x0(1, 1, 1), noise(1, 1, 1);
    for (int i = 0; i < draws; ++i) {
        x0.values[0] = s * rng.normal();
        noise.values[0] = rng.normal();
        acc += training_loss(model, x0, noise, sigma, cfg);
    }
    acc /= draws;
    const double expected =
        loss_weight(sigma, cfg.sigma_data) * sigma * sigma * s * s / (s * s + sigma * sigma);
    CHECK(std::abs(acc - expected) < 0.01 * expected);
}

TEST_CASE("training sigma draws follow the stated log-normal law") {
    DiffusionConfig cfg;
    Rng rng(7);
    const int draws = 100000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < draws; ++i) {
        double sg = sample_sigma_for_training(cfg, rng);
        CHECK(sg > 0.0);
        double l = std::log(sg);
        mean += l;
        m2 += l * l;
    }
    mean /= draws;
    double sd = std::sqrt(m2 / draws - mean * mean);
    CHECK(std::abs(mean - cfg.p_mean) < 0.02);
    CHECK(std::abs(sd - cfg.p_std) < 0.02);
}

TEST_CASE("identity denoiser leaves the initial noise untouched") {
    DiffusionConfig cfg;
    auto sched = build_schedule(cfg);
    IdentityModel m;
    const uint64_t seed = 99;
    auto out = heun_sample(m, {1, 4, 4}, sched, seed);
    Rng rng(seed);
    ImageTensor expect(1, 4, 4);
    rng.fill_normal(expect.values);
    for (auto& v : expect.values) v *= cfg.sigma_max;
    for (size_t i = 0; i < out.numel(); ++i)
        CHECK(out.values[i] == doctest::Approx(expect.values[i]).epsilon(1e-12));
}

TEST_CASE("two-step sampler matches a hand-unrolled computation") {
    DiffusionConfig cfg;
    cfg.num_steps = 2;
    cfg.sigma_min = 0.4;
    cfg.sigma_max = 2.0;
    auto sched = build_schedule(cfg);
    const double s = 0.5;
    GaussianDenoiser model(s);
    const uint64_t seed = 5;
    auto out = heun_sample(model, {1, 2, 2}, sched, seed);

    Rng rng(seed);
    std::vector<double> x(4);
    for (auto& v : x) v = rng.normal() * sched.sigmas[0];
    auto D = [&](double v, double sg) { return s * s * v / (s * s + sg * sg); };
    for (int i = 0; i < 2; ++i) {
        double si = sched.sigmas[size_t(i)], sn = sched.sigmas[size_t(i) + 1];
        for (auto& v : x) {
            double d = (v - D(v, si)) / si;
            double xe = v + (sn - si) * d;
            if (sn > 0.0) {
                double d2 = (xe - D(xe, sn)) / sn;
                v = v + (sn - si) * 0.5 * (d + d2);
            } else {
                v = xe;
            }
        }
    }
    for (size_t i = 0; i < 4; ++i) CHECK(out.values[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("sampled gaussian moments match the data law") {
    DiffusionConfig cfg;
    cfg.sigma_max = 10.0;  // 20x the data std; tighter spacing near sigma ~ s
    auto sched = build_schedule(cfg);
    const double s = 0.5;
    GaussianDenoiser model(s);
    const int n = 2000;
    double mean = 0.0, m2 = 0.0;
    size_t cnt = 0;
    for (int i = 0; i < n; ++i) {
        auto out = heun_sample(model, {1, 4, 4}, sched, 10000 + uint64_t(i));
        for (double v : out.values) {
            mean += v;
            m2 += v * v;
            ++cnt;
        }
    }
    mean /= double(cnt);
    double sd = std::sqrt(m2 / double(cnt) - mean * mean);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(sd - s) < 0.03 * s);
}

TEST_CASE("score is derived from the denoiser by (D - x) / sigma^2") {
    const double s = 0.5, sigma = 0.9;
    GaussianDenoiser model(s);
    ImageTensor x(1, 3, 3);
    Rng rng(3);
    rng.fill_normal(x.values);

    auto sc = score_from_denoiser(x, sigma, model);
    for (size_t i = 0; i < x.numel(); ++i) {
        double expect = -x.values[i] / (s * s + sigma * sigma);
        CHECK(sc.values[i] == doctest::Approx(expect).epsilon(1e-12));
    }

    IdentityModel id;
    auto zero = score_from_denoiser(x, sigma, id);
    for (double v : zero.values) CHECK(v == 0.0);

    ImageTensor origin(1, 3, 3);
    auto at0 = score_from_denoiser(origin, sigma, model);
    for (size_t i = 0; i < at0.numel(); ++i)
        CHECK(at0.values[i] ==
              doctest::Approx(model.denoise(origin, sigma).values[i] / (sigma * sigma)));
}

TEST_CASE("invalid diffusion configs are rejected") {
    DiffusionConfig cfg;
    cfg.sigma_min = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = DiffusionConfig{};
    cfg.sigma_max = cfg.sigma_min / 2;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = DiffusionConfig{};
    cfg.num_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
