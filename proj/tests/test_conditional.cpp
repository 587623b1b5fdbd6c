#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "tsimg/conditional.hpp"
#include "tsimg/denoiser.hpp"

using namespace tsimg;

namespace {

int unobserved_count(const TimeMask& m) {
    int c = 0;
    for (uint8_t v : m.observed) c += (v == 0);
    return c;
}

}  // namespace

TEST_CASE("interpolation mask hides the rounded fraction of positions") {
    auto m = make_interpolation_mask(24, 5, 0.5, 1);
    CHECK(unobserved_count(m) == 60);
    auto small = make_interpolation_mask(4, 1, 0.25, 2);
    CHECK(unobserved_count(small) == 1);
}

TEST_CASE("interpolation masks differ across seeds") {
    auto a = make_interpolation_mask(24, 1, 0.5, 10);
    auto b = make_interpolation_mask(24, 1, 0.5, 11);
    CHECK(a.observed != b.observed);
}

TEST_CASE("interpolation mask rejects degenerate fractions") {
    CHECK_THROWS_AS(make_interpolation_mask(24, 1, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(make_interpolation_mask(24, 1, 1.0, 1), ValidationError);
}

TEST_CASE("extrapolation mask keeps the first ceil(L/2) steps") {
    auto m2 = make_extrapolation_mask(2, 1);
    CHECK(m2.at(0, 0) == 1);
    CHECK(m2.at(1, 0) == 0);
    auto m3 = make_extrapolation_mask(3, 2);
    for (int k = 0; k < 2; ++k) {
        CHECK(m3.at(0, k) == 1);
        CHECK(m3.at(1, k) == 1);
        CHECK(m3.at(2, k) == 0);
    }
}

TEST_CASE("mask csv round trips") {
    auto m = make_interpolation_mask(24, 3, 0.5, 5);
    write_mask_csv(m, "tmp_mask.csv");
    auto back = load_mask_csv("tmp_mask.csv", 24, 3);
    CHECK(back.observed == m.observed);
    std::remove("tmp_mask.csv");
}

TEST_CASE("all-observed mask returns the conditioning series unchanged") {
    DenoiserConfig dcfg;
    dcfg.base_channels = 4;
    dcfg.channel_multipliers = {1, 2};
    dcfg.in_channels = 1;
    dcfg.image_size = 8;
    dcfg.noise_embedding_dim = 8;
    UNet net(dcfg, 7);
    PreconditionedDenoiser model(net, 0.5);

    TransformSpec sp;
    sp.kind = TransformKind::DelayEmbedding;
    sp.L = 24;
    sp.K = 1;
    sp.n = 8;
    sp.m = 3;
    sp.target_h = 8;
    sp.target_w = 8;

    TimeSeries x(24, 1);
    Rng rng(8);
    for (auto& v : x.values) v = rng.uniform(-1.0, 1.0);
    ConditioningContext ctx{x, TimeMask(24, 1, true), sp};
    auto sched = build_schedule(DiffusionConfig{});
    auto out = inpaint_sample(model, ctx, sched, 9);
    CHECK(out.values == x.values);
}

TEST_CASE("all-unobserved mask reproduces the unconditional sampler bitwise") {
    // padding-free configuration: folding 64 steps into an 8x8 image, so the
    // image mask is empty and every update reduces to the unconditional one
    DenoiserConfig dcfg;
    dcfg.base_channels = 4;
    dcfg.channel_multipliers = {1, 2};
    dcfg.in_channels = 1;
    dcfg.image_size = 8;
    dcfg.noise_embedding_dim = 8;
    UNet net(dcfg, 17);
    Rng prng(18);
    for (auto& p : net.params().all())
        for (auto& v : p.value) v += prng.uniform(-0.05, 0.05);
    PreconditionedDenoiser model(net, 0.5);

    TransformSpec sp;
    sp.kind = TransformKind::Folding;
    sp.L = 64;
    sp.K = 1;
    sp.target_h = 8;
    sp.target_w = 8;

    TimeSeries x(64, 1);  // values are irrelevant: nothing is observed
    ConditioningContext ctx{x, TimeMask(64, 1, false), sp};
    DiffusionConfig cfg;
    cfg.num_steps = 6;
    auto sched = build_schedule(cfg);

    auto cond = inpaint_sample(model, ctx, sched, 19);
    auto uncond = img2ts(heun_sample(model, {1, 8, 8}, sched, 19), sp);
    CHECK(cond.values == uncond.values);
}

TEST_CASE("context validation catches mismatched mask shapes") {
    TransformSpec sp;
    sp.kind = TransformKind::Folding;
    sp.L = 64;
    sp.K = 1;
    sp.target_h = 8;
    sp.target_w = 8;
    ConditioningContext ctx{TimeSeries(64, 1), TimeMask(32, 1, true), sp};
    CHECK_THROWS_AS(ctx.validate(), Error);
}
