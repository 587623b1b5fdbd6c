#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "tsimg/csv.hpp"
#include "tsimg/series.hpp"

using namespace tsimg;

TEST_CASE("sine generator values stay in [-1, 1]") {
    auto b = generate_sine(100, 24, 5, 42);
    REQUIRE(b.size() == 100);
    for (const auto& s : b.items)
        for (double v : s.values) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("sine generator is deterministic per seed") {
    auto a = generate_sine(50, 24, 3, 7);
    auto b = generate_sine(50, 24, 3, 7);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.items[i].values == b.items[i].values);
    auto c = generate_sine(50, 24, 3, 8);
    CHECK(a.items[0].values != c.items[0].values);
}

TEST_CASE("sine per-channel empirical mean is near zero") {
    const int N = 10000, L = 24, K = 3;
    auto b = generate_sine(N, L, K, 123);
    for (int k = 0; k < K; ++k) {
        double mean = 0.0;
        for (const auto& s : b.items)
            for (int t = 0; t < L; ++t) mean += s.at(t, k);
        mean /= double(N) * L;
        CHECK(std::abs(mean) < 0.05);
    }
}

TEST_CASE("sine channels are exchangeable: per-channel histograms agree") {
    // two-sample chi-square between channel 0 and each other channel,
    // 50 bins over [-1,1], alpha = 0.01 (critical value for df=49)
    const int N = 20000, L = 24, K = 4, B = 50;
    const double crit = 74.919;
    auto b = generate_sine(N, L, K, 99);
    auto histogram = [&](int k) {
        std::vector<double> h(B, 0.0);
        for (const auto& s : b.items)
            for (int t = 0; t < L; ++t) {
                int bin = int((s.at(t, k) + 1.0) / 2.0 * B);
                if (bin >= B) bin = B - 1;
                if (bin < 0) bin = 0;
                h[size_t(bin)] += 1.0;
            }
        return h;
    };
    auto h0 = histogram(0);
    for (int k = 1; k < K; ++k) {
        auto hk = histogram(k);
        double chi2 = 0.0;
        for (int i = 0; i < B; ++i) {
            double tot = h0[size_t(i)] + hk[size_t(i)];
            if (tot == 0.0) continue;
            double d = h0[size_t(i)] - hk[size_t(i)];
            chi2 += d * d / tot;  // equal sample sizes
        }
        CHECK(chi2 < crit);
    }
}

TEST_CASE("csv readback of a small two-series file") {
    const char* path = "tmp_two_series.csv";
    {
        std::ofstream f(path);
        f << "series_id,t,f0\n";
        for (int s = 0; s < 2; ++s)
            for (int t = 0; t < 4; ++t) f << s << "," << t << "," << (s * 10 + t) << "\n";
    }
    auto b = load_csv(path);
    REQUIRE(b.size() == 2);
    CHECK(b.length() == 4);
    CHECK(b.features() == 1);
    CHECK(b.items[1].at(3, 0) == doctest::Approx(13.0));
    std::remove(path);
}

TEST_CASE("csv parse error names the offending row and column") {
    const char* path = "tmp_bad_cell.csv";
    {
        std::ofstream f(path);
        f << "series_id,t,f0\n0,0,1.5\n0,1,oops\n";
    }
    try {
        load_csv(path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        std::string msg = e.what();
        CHECK(msg.find("row") != std::string::npos);
        CHECK(msg.find("column") != std::string::npos);
    }
    std::remove(path);
}

TEST_CASE("csv write/load round trip preserves values") {
    auto b = generate_sine(10, 24, 3, 5);
    write_csv(b, "tmp_roundtrip.csv");
    auto back = load_csv("tmp_roundtrip.csv");
    REQUIRE(back.size() == b.size());
    for (size_t i = 0; i < b.size(); ++i)
        for (size_t j = 0; j < b.items[i].values.size(); ++j)
            CHECK(std::abs(back.items[i].values[j] - b.items[i].values[j]) < 1e-12);
    std::remove("tmp_roundtrip.csv");
}

TEST_CASE("min-max normalization maps into the unit interval") {
    auto b = generate_sine(20, 24, 2, 3);
    for (auto& s : b.items)
        for (auto& v : s.values) v = 3.0 * v + 5.0;
    auto [n01, st01] = normalize(b, NormKind::MinMax01);
    for (const auto& s : n01.items)
        for (double v : s.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    auto [n11, st11] = normalize(b, NormKind::MinMax11);
    for (const auto& s : n11.items)
        for (double v : s.values) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("denormalize inverts normalize") {
    auto b = generate_sine(20, 24, 2, 11);
    for (auto& s : b.items)
        for (auto& v : s.values) v = 7.0 * v - 2.0;
    for (NormKind k : {NormKind::MinMax01, NormKind::MinMax11, NormKind::MeanCenterGlobalStd}) {
        auto [n, st] = normalize(b, k);
        auto back = denormalize(n, st);
        for (size_t i = 0; i < b.size(); ++i)
            for (size_t j = 0; j < b.items[i].values.size(); ++j) {
                double ref = b.items[i].values[j];
                double tol = 1e-9 * std::max(1.0, std::abs(ref));
                CHECK(std::abs(back.items[i].values[j] - ref) <= tol);
            }
    }
}

TEST_CASE("constant channel under min-max is a degenerate-range error") {
    SeriesBatch b;
    TimeSeries s(4, 1);
    for (int t = 0; t < 4; ++t) s.at(t, 0) = 2.5;
    b.push(std::move(s));
    CHECK_THROWS_AS(normalize(b, NormKind::MinMax01), ValidationError);
}

TEST_CASE("identity mean/std state leaves values unchanged") {
    SeriesBatch b;
    TimeSeries s(3, 1);
    s.at(0, 0) = 0.4;
    s.at(1, 0) = -1.1;
    s.at(2, 0) = 2.0;
    b.push(std::move(s));
    NormalizationState st;
    st.kind = NormKind::MeanCenterGlobalStd;
    st.features = 1;
    st.ch_std = {1.0};
    st.seq_means = {0.0};
    auto back = denormalize(b, st);
    CHECK(back.items[0].values == b.items[0].values);
}

TEST_CASE("denormalizing 0.5 with recorded range [2, 4] gives the midpoint 3") {
    SeriesBatch b;
    TimeSeries s(1, 1);
    s.at(0, 0) = 0.5;
    b.push(std::move(s));
    NormalizationState st;
    st.kind = NormKind::MinMax01;
    st.features = 1;
    st.ch_min = {2.0};
    st.ch_max = {4.0};
    auto back = denormalize(b, st);
    CHECK(back.items[0].at(0, 0) == doctest::Approx(3.0));
}
