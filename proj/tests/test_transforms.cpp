#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>

#include "tsimg/transforms.hpp"

using namespace tsimg;

namespace {

TimeSeries random_series(int L, int K, uint64_t seed) {
    Rng rng(seed);
    TimeSeries s(L, K);
    for (auto& v : s.values) v = rng.uniform(-1.0, 1.0);
    return s;
}

TransformSpec de_spec(int L, int K, int n = 8, int m = 3, int th = 0, int tw = 0) {
    TransformSpec sp;
    sp.kind = TransformKind::DelayEmbedding;
    sp.L = L;
    sp.K = K;
    sp.n = n;
    sp.m = m;
    sp.target_h = th;
    sp.target_w = tw;
    return sp;
}

}  // namespace

TEST_CASE("delay embedding of a constant series fills covered cells, pads with zero") {
    auto sp = de_spec(24, 1, 8, 3, 8, 8);
    TimeSeries x(24, 1);
    for (auto& v : x.values) v = 2.5;
    auto img = delay_embed(x, sp);
    REQUIRE(img.height == 8);
    REQUIRE(img.width == 8);
    for (int r = 0; r < 8; ++r)
        for (int j = 0; j < 8; ++j) {
            int t = 3 * j + r;
            if (j < 7 && t < 24)
                CHECK(img.at(0, r, j) == 2.5);
            else
                CHECK(img.at(0, r, j) == 0.0);
        }
}

TEST_CASE("delay embedding cell (r, j) holds x[m*j + r]") {
    auto sp = de_spec(24, 2);
    auto x = random_series(24, 2, 5);
    auto img = delay_embed(x, sp);
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < img.width; ++j)
            for (int r = 0; r < 8; ++r) {
                int t = 3 * j + r;
                if (t < 24) CHECK(img.at(k, r, j) == x.at(t, k));
            }
}

TEST_CASE("delay embedding round trip is exact") {
    for (uint64_t s = 0; s < 200; ++s) {
        auto sp = de_spec(24, 1, 8, 3, 8, 8);
        auto x = random_series(24, 1, s);
        auto back = delay_embed_inverse(delay_embed(x, sp), sp);
        CHECK(back.values == x.values);
    }
}

TEST_CASE("delay embedding inverse averages inconsistent overlaps") {
    // L=4, n=2, m=1: t=1 is covered by cells (1,0) and (0,1)
    auto sp = de_spec(4, 1, 2, 1);
    auto sh = output_shape(sp);
    ImageTensor img(sh.C, sh.H, sh.W);
    img.at(0, 1, 0) = 1.0;
    img.at(0, 0, 1) = 3.0;
    auto x = delay_embed_inverse(img, sp);
    CHECK(x.at(1, 0) == doctest::Approx(2.0));
}

TEST_CASE("delay embedding scales to a 65k series") {
    auto t0 = std::chrono::steady_clock::now();
    auto sp = de_spec(65536, 1, 256, 256);
    auto x = random_series(65536, 1, 9);
    auto img = delay_embed(x, sp);
    CHECK(img.height == 256);
    auto back = delay_embed_inverse(img, sp);
    CHECK(back.values == x.values);
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(dt < 5.0);
}

TEST_CASE("stft of the zero series is the zero image and inverts to zero") {
    TransformSpec sp;
    sp.kind = TransformKind::Stft;
    sp.L = 24;
    sp.K = 1;
    sp.n_fft = 63;
    sp.hop_length = 23;
    TimeSeries x(24, 1);
    auto img = stft_forward(x, sp);
    for (double v : img.values) CHECK(v == 0.0);
    auto back = stft_inverse(img, sp);
    for (double v : back.values) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("stft image has n_fft/2 + 1 rows and paired channels") {
    TransformSpec sp;
    sp.kind = TransformKind::Stft;
    sp.L = 128;
    sp.K = 2;
    sp.n_fft = 63;
    sp.hop_length = 23;
    auto sh = output_shape(sp);
    CHECK(sh.C == 4);
    CHECK(sh.H == 32);
}

TEST_CASE("pure on-bin tone concentrates energy in its frequency row") {
    // L=64, f = 7/63: periodic in every 63-sample frame, reflect padding is
    // an exact continuation of the cosine
    const int L = 64, bin = 7;
    TransformSpec sp;
    sp.kind = TransformKind::Stft;
    sp.L = L;
    sp.K = 1;
    sp.n_fft = 63;
    sp.hop_length = 23;
    TimeSeries x(L, 1);
    for (int t = 0; t < L; ++t) x.at(t, 0) = std::cos(2.0 * M_PI * bin * t / 63.0);
    auto img = stft_forward(x, sp);
    std::vector<double> rowmag(size_t(img.height), 0.0);
    for (int h = 0; h < img.height; ++h)
        for (int w = 0; w < img.width; ++w) {
            double re = img.at(0, h, w), im = img.at(1, h, w);
            rowmag[size_t(h)] += std::sqrt(re * re + im * im);
        }
    double peak = rowmag[bin];
    REQUIRE(peak > 0.0);
    for (int h = 0; h < img.height; ++h) {
        if (std::abs(h - bin) <= 1) continue;  // Hann main lobe spans one neighbor
        CHECK(rowmag[size_t(h)] <= 0.01 * peak);
    }
}

TEST_CASE("stft round trip error is small on unit-scale inputs") {
    for (int L : {24, 100}) {
        TransformSpec sp;
        sp.kind = TransformKind::Stft;
        sp.L = L;
        sp.K = 1;
        sp.n_fft = 63;
        sp.hop_length = 23;
        for (uint64_t s = 0; s < 100; ++s) {
            auto x = random_series(L, 1, 1000 + s);
            auto back = stft_inverse(stft_forward(x, sp), sp);
            for (size_t i = 0; i < x.values.size(); ++i)
                CHECK(std::abs(back.values[i] - x.values[i]) < 1e-5);
        }
    }
}

TEST_CASE("stft with hop_length > n_fft is rejected") {
    TransformSpec sp;
    sp.kind = TransformKind::Stft;
    sp.L = 128;
    sp.K = 1;
    sp.n_fft = 63;
    sp.hop_length = 64;
    CHECK_THROWS_AS(output_shape(sp), ValidationError);
}

TEST_CASE("folding lays out row-major and pads the tail with zeros") {
    TransformSpec sp;
    sp.kind = TransformKind::Folding;
    sp.L = 4;
    sp.K = 1;
    sp.target_h = 2;
    sp.target_w = 2;
    TimeSeries x(4, 1);
    for (int t = 0; t < 4; ++t) x.at(t, 0) = t + 1.0;
    auto img = fold(x, sp);
    CHECK(img.at(0, 0, 0) == 1.0);
    CHECK(img.at(0, 0, 1) == 2.0);
    CHECK(img.at(0, 1, 0) == 3.0);
    CHECK(img.at(0, 1, 1) == 4.0);

    TransformSpec sp5 = sp;
    sp5.L = 5;
    sp5.target_w = 3;
    TimeSeries y(5, 1);
    for (int t = 0; t < 5; ++t) y.at(t, 0) = t + 1.0;
    auto img5 = fold(y, sp5);
    CHECK(img5.at(0, 1, 2) == 0.0);
    auto back = unfold(img5, sp5);
    REQUIRE(back.length == 5);
    CHECK(back.values == y.values);
}

TEST_CASE("folding round trip is bitwise") {
    TransformSpec sp;
    sp.kind = TransformKind::Folding;
    sp.L = 24;
    sp.K = 3;
    sp.target_h = 5;
    sp.target_w = 5;
    for (uint64_t s = 0; s < 200; ++s) {
        auto x = random_series(24, 3, 2000 + s);
        auto back = unfold(fold(x, sp), sp);
        CHECK(back.values == x.values);
    }
}

TEST_CASE("gaf of a constant series is the all-ones image and inverts") {
    TransformSpec sp;
    sp.kind = TransformKind::Gaf;
    sp.L = 6;
    sp.K = 1;
    TimeSeries x(6, 1);
    for (auto& v : x.values) v = 4.0;
    auto img = gaf_forward(x, sp);
    for (double v : img.values) CHECK(v == doctest::Approx(1.0));
    auto back = gaf_inverse(img, sp);
    for (double v : back.values) CHECK(v == doctest::Approx(4.0));
}

TEST_CASE("gaf diagonal equals 2*u^2 - 1 for the rescaled series") {
    TransformSpec sp;
    sp.kind = TransformKind::Gaf;
    sp.L = 16;
    sp.K = 1;
    auto x = random_series(16, 1, 777);
    auto img = gaf_forward(x, sp);
    double lo = img.aux[0], hi = img.aux[1];
    for (int t = 0; t < 16; ++t) {
        double u = (x.at(t, 0) - lo) / (hi - lo);
        CHECK(img.at(0, t, t) == doctest::Approx(2.0 * u * u - 1.0).epsilon(1e-9));
    }
}

TEST_CASE("gaf round trip recovers the series within 1e-6") {
    TransformSpec sp;
    sp.kind = TransformKind::Gaf;
    sp.L = 24;
    sp.K = 2;
    for (uint64_t s = 0; s < 200; ++s) {
        auto x = random_series(24, 2, 3000 + s);
        auto back = gaf_inverse(gaf_forward(x, sp), sp);
        for (size_t i = 0; i < x.values.size(); ++i)
            CHECK(std::abs(back.values[i] - x.values[i]) < 1e-6);
    }
}

TEST_CASE("gaf length guard rejects series beyond the configured maximum") {
    TransformSpec sp;
    sp.kind = TransformKind::Gaf;
    sp.L = 2048;
    sp.K = 1;
    CHECK_THROWS_AS(output_shape(sp), ValidationError);
}

TEST_CASE("all-observed time mask projects to an all-observed image mask") {
    auto sp = de_spec(24, 2, 8, 3, 8, 8);
    TimeMask m(24, 2, true);
    auto im = project_time_mask(m, sp);
    for (uint8_t v : im.observed) CHECK(v == 1);
}

TEST_CASE("masking one time index unsets exactly its delay-embedding pixels") {
    auto sp = de_spec(24, 1, 8, 3, 8, 8);
    TimeMask m(24, 1, true);
    m.at(5, 0) = 0;
    auto im = project_time_mask(m, sp);
    for (int r = 0; r < im.height; ++r)
        for (int j = 0; j < im.width; ++j) {
            bool in_range = j < 7 && 3 * j + r < 24;  // padded pixels stay observed
            bool hit = in_range && 3 * j + r == 5;
            CHECK(im.at(0, r, j) == (hit ? 0 : 1));
        }
}

TEST_CASE("mask projection rejects non-pixel-aligned transforms") {
    TransformSpec sp;
    sp.kind = TransformKind::Stft;
    sp.L = 128;
    sp.K = 1;
    sp.n_fft = 63;
    sp.hop_length = 23;
    TimeMask m(128, 1, true);
    CHECK_THROWS_AS(project_time_mask(m, sp), ValidationError);
}

TEST_CASE("debug image file round trips through disk (f32 storage)") {
    auto sp = de_spec(24, 2, 8, 3, 8, 8);
    auto img = delay_embed(random_series(24, 2, 4), sp);
    write_image_debug(img, "tmp_img.tsim");
    auto back = read_image_debug("tmp_img.tsim");
    REQUIRE(back.channels == img.channels);
    REQUIRE(back.height == img.height);
    REQUIRE(back.width == img.width);
    for (size_t i = 0; i < img.numel(); ++i)
        CHECK(back.values[i] == doctest::Approx(img.values[i]).epsilon(1e-6));
    std::remove("tmp_img.tsim");
}

TEST_CASE("shape mismatches between series and spec are rejected") {
    auto sp = de_spec(24, 1);
    auto x = random_series(20, 1, 1);
    CHECK_THROWS_AS(delay_embed(x, sp), ShapeError);
    TransformSpec bad = de_spec(24, 1, 30, 3);  // n > L
    CHECK_THROWS_AS(output_shape(bad), ValidationError);
}
