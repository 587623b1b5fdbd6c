#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "tsimg/core.hpp"

namespace tsimg {

// A length-L, K-feature real-valued sequence, stored row-major (t major, k minor).
struct TimeSeries {
    int length = 0;    // L
    int features = 0;  // K
    std::vector<double> values;

    TimeSeries() = default;
    TimeSeries(int L, int K) : length(L), features(K), values(size_t(L) * K, 0.0) {
        check(L >= 1 && K >= 1, "TimeSeries requires L >= 1 and K >= 1");
    }

    double& at(int t, int k) { return values[size_t(t) * features + k]; }
    double at(int t, int k) const { return values[size_t(t) * features + k]; }

    void validate() const {
        check(length >= 1 && features >= 1, "TimeSeries requires L >= 1 and K >= 1");
        check(values.size() == size_t(length) * features, "TimeSeries value count mismatch");
        if (!all_finite(values)) throw ValidationError("TimeSeries contains non-finite values");
    }
};

// Ordered collection of series sharing one (L, K).
struct SeriesBatch {
    std::vector<TimeSeries> items;

    int length() const { return items.empty() ? 0 : items.front().length; }
    int features() const { return items.empty() ? 0 : items.front().features; }
    size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }

    void push(TimeSeries ts) {
        if (!items.empty()) {
            if (ts.length != length() || ts.features != features())
                throw ShapeError("SeriesBatch members must share (L, K): got " +
                                 std::to_string(ts.length) + "x" + std::to_string(ts.features) +
                                 " vs " + std::to_string(length()) + "x" + std::to_string(features()));
        }
        items.push_back(std::move(ts));
    }
};

enum class NormKind {
    MinMax01,            // per-channel min-max to [0, 1]
    MeanCenterGlobalStd, // per-sequence mean centering + one global per-channel std
    MinMax11,            // per-channel min-max to [-1, 1]
};

inline const char* norm_kind_name(NormKind k) {
    switch (k) {
        case NormKind::MinMax01: return "minmax01";
        case NormKind::MeanCenterGlobalStd: return "meancenter";
        case NormKind::MinMax11: return "minmax11";
    }
    return "?";
}

inline NormKind norm_kind_from_name(const std::string& s) {
    if (s == "minmax01") return NormKind::MinMax01;
    if (s == "meancenter") return NormKind::MeanCenterGlobalStd;
    if (s == "minmax11") return NormKind::MinMax11;
    throw ValidationError("unknown normalization kind: " + s +
                          " (expected minmax01|meancenter|minmax11)");
}

// Everything needed to invert a normalize() call exactly.
struct NormalizationState {
    NormKind kind = NormKind::MinMax01;
    int features = 0;
    std::vector<double> ch_min;   // min-max kinds, per channel
    std::vector<double> ch_max;
    std::vector<double> ch_std;   // meancenter kind, per channel
    std::vector<double> seq_means;  // meancenter: per (sequence, channel), row-major
};

// Sine benchmark: each channel of each sample is sin(2*pi*eta*t + theta),
// eta ~ U[0,1], theta ~ U[-pi,pi], drawn independently per (sample, channel).
inline SeriesBatch generate_sine(int num_samples, int L, int K, uint64_t seed) {
    check(num_samples >= 1, "generate_sine: num_samples must be >= 1");
    check(L >= 1 && K >= 1, "generate_sine: L and K must be >= 1");
    SeriesBatch out;
    Rng rng(seed);
    for (int i = 0; i < num_samples; ++i) {
        TimeSeries ts(L, K);
        for (int k = 0; k < K; ++k) {
            double eta = rng.uniform();
            double theta = rng.uniform(-M_PI, M_PI);
            for (int t = 0; t < L; ++t)
                ts.at(t, k) = std::sin(2.0 * M_PI * eta * t + theta);
        }
        out.push(std::move(ts));
    }
    return out;
}

inline std::pair<SeriesBatch, NormalizationState> normalize(const SeriesBatch& batch, NormKind kind) {
    check(!batch.empty(), "normalize: batch is empty");
    const int K = batch.features();
    NormalizationState st;
    st.kind = kind;
    st.features = K;
    SeriesBatch out;

    if (kind == NormKind::MinMax01 || kind == NormKind::MinMax11) {
        st.ch_min.assign(K, std::numeric_limits<double>::infinity());
        st.ch_max.assign(K, -std::numeric_limits<double>::infinity());
        for (const auto& ts : batch.items)
            for (int t = 0; t < ts.length; ++t)
                for (int k = 0; k < K; ++k) {
                    st.ch_min[k] = std::min(st.ch_min[k], ts.at(t, k));
                    st.ch_max[k] = std::max(st.ch_max[k], ts.at(t, k));
                }
        for (int k = 0; k < K; ++k)
            if (!(st.ch_max[k] > st.ch_min[k]))
                throw ValidationError("normalize: channel " + std::to_string(k) +
                                      " is constant; min-max range is degenerate");
        for (const auto& ts : batch.items) {
            TimeSeries n(ts.length, K);
            for (int t = 0; t < ts.length; ++t)
                for (int k = 0; k < K; ++k) {
                    double u = (ts.at(t, k) - st.ch_min[k]) / (st.ch_max[k] - st.ch_min[k]);
                    n.at(t, k) = (kind == NormKind::MinMax01) ? u : 2.0 * u - 1.0;
                }
            out.push(std::move(n));
        }
    } else {
        // per-sequence per-channel means, one global std per channel
        st.seq_means.assign(batch.size() * K, 0.0);
        for (size_t i = 0; i < batch.size(); ++i) {
            const auto& ts = batch.items[i];
            for (int k = 0; k < K; ++k) {
                double s = 0.0;
                for (int t = 0; t < ts.length; ++t) s += ts.at(t, k);
                st.seq_means[i * K + k] = s / ts.length;
            }
        }
        st.ch_std.assign(K, 0.0);
        size_t n_per_ch = 0;
        for (size_t i = 0; i < batch.size(); ++i) {
            const auto& ts = batch.items[i];
            n_per_ch += ts.length;
            for (int t = 0; t < ts.length; ++t)
                for (int k = 0; k < K; ++k) {
                    double d = ts.at(t, k) - st.seq_means[i * K + k];
                    st.ch_std[k] += d * d;
                }
        }
        for (int k = 0; k < K; ++k) {
            st.ch_std[k] = std::sqrt(st.ch_std[k] / double(n_per_ch));
            if (st.ch_std[k] <= 0.0) st.ch_std[k] = 1.0;  // centered-constant channel
        }
        for (size_t i = 0; i < batch.size(); ++i) {
            const auto& ts = batch.items[i];
            TimeSeries n(ts.length, K);
            for (int t = 0; t < ts.length; ++t)
                for (int k = 0; k < K; ++k)
                    n.at(t, k) = (ts.at(t, k) - st.seq_means[i * K + k]) / st.ch_std[k];
            out.push(std::move(n));
        }
    }
    return {std::move(out), std::move(st)};
}

inline SeriesBatch denormalize(const SeriesBatch& batch, const NormalizationState& st) {
    check(!batch.empty(), "denormalize: batch is empty");
    if (batch.features() != st.features)
        throw ShapeError("denormalize: feature count mismatch (" + std::to_string(batch.features()) +
                         " vs state " + std::to_string(st.features) + ")");
    const int K = st.features;
    SeriesBatch out;
    if (st.kind == NormKind::MinMax01 || st.kind == NormKind::MinMax11) {
        for (const auto& ts : batch.items) {
            TimeSeries d(ts.length, K);
            for (int t = 0; t < ts.length; ++t)
                for (int k = 0; k < K; ++k) {
                    double u = ts.at(t, k);
                    if (st.kind == NormKind::MinMax11) u = (u + 1.0) / 2.0;
                    d.at(t, k) = u * (st.ch_max[k] - st.ch_min[k]) + st.ch_min[k];
                }
            out.push(std::move(d));
        }
    } else {
        if (st.seq_means.size() != batch.size() * size_t(K))
            throw ShapeError("denormalize: state holds " + std::to_string(st.seq_means.size() / K) +
                             " sequences, batch has " + std::to_string(batch.size()));
        for (size_t i = 0; i < batch.size(); ++i) {
            const auto& ts = batch.items[i];
            TimeSeries d(ts.length, K);
            for (int t = 0; t < ts.length; ++t)
                for (int k = 0; k < K; ++k)
                    d.at(t, k) = ts.at(t, k) * st.ch_std[k] + st.seq_means[i * K + k];
            out.push(std::move(d));
        }
    }
    return out;
}

}  // namespace tsimg
