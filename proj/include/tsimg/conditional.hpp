#pragma once

#include <fstream>

#include "tsimg/csv.hpp"
#include "tsimg/diffusion.hpp"
#include "tsimg/transforms.hpp"

namespace tsimg {

// Known values + observedness + the transform used to carry them into image space.
struct ConditioningContext {
    TimeSeries series;
    TimeMask mask;
    TransformSpec spec;

    void validate() const {
        check(spec.kind == TransformKind::DelayEmbedding || spec.kind == TransformKind::Folding,
              "conditional: transform must be delay-embedding or folding");
        check(mask.length == series.length && mask.features == series.features,
              "conditional: mask/series shape mismatch");
        check(series.length == spec.L && series.features == spec.K,
              "conditional: series/spec shape mismatch");
    }
};

// Exactly round(fraction*L*K) positions unobserved, uniform without replacement.
inline TimeMask make_interpolation_mask(int L, int K, double fraction, uint64_t seed) {
    check(fraction > 0.0 && fraction < 1.0, "interpolation mask: fraction must be in (0,1)");
    const size_t total = size_t(L) * K;
    size_t n_hidden = size_t(std::llround(fraction * double(total)));
    TimeMask mask(L, K, true);
    // partial Fisher-Yates over position indices
    std::vector<uint32_t> idx(total);
    for (size_t i = 0; i < total; ++i) idx[i] = uint32_t(i);
    Rng rng(seed);
    for (size_t i = 0; i < n_hidden; ++i) {
        size_t j = i + size_t(rng.below(total - i));
        std::swap(idx[i], idx[j]);
        mask.observed[idx[i]] = 0;
    }
    return mask;
}

// First ceil(L/2) timesteps observed across all features.
inline TimeMask make_extrapolation_mask(int L, int K) {
    check(L >= 2, "extrapolation mask: L must be >= 2");
    TimeMask mask(L, K, false);
    const int observed_steps = (L + 1) / 2;
    for (int t = 0; t < observed_steps; ++t)
        for (int k = 0; k < K; ++k) mask.at(t, k) = 1;
    return mask;
}

// Masked conditional sampling: Heun steps with the known region re-imposed
// (re-noised to the current level) after every update. At the final step
// sigma = 0, so observed pixels land on the clean conditioning values.
inline TimeSeries inpaint_sample(const ScoreModel& model, const ConditioningContext& ctx,
                                 const NoiseLevelSchedule& sched, uint64_t seed) {
    ctx.validate();
    check(sched.steps() >= 1 && sched.sigmas.back() == 0.0, "inpaint_sample: invalid schedule");
    const ImageTensor y = ts2img(ctx.series, ctx.spec);
    const ImageMask M = project_time_mask(ctx.mask, ctx.spec);

    Rng rng(seed);
    ImageTensor x(y.channels, y.height, y.width);
    rng.fill_normal(x.values);
    for (double& v : x.values) v *= sched.sigmas[0];

    const int N = sched.steps();
    for (int i = 0; i < N; ++i) {
        const double s_cur = sched.sigmas[i], s_next = sched.sigmas[i + 1];
        const double dt = s_next - s_cur;
        ImageTensor d = model.denoise(x, s_cur);
        if (d.numel() != x.numel()) throw ShapeError("inpaint_sample: model changed shape");
        for (size_t j = 0; j < x.numel(); ++j) d.values[j] = (x.values[j] - d.values[j]) / s_cur;
        ImageTensor xe = x;
        for (size_t j = 0; j < x.numel(); ++j) xe.values[j] += dt * d.values[j];
        if (s_next > 0.0) {
            ImageTensor d2 = model.denoise(xe, s_next);
            for (size_t j = 0; j < x.numel(); ++j)
                x.values[j] += dt * 0.5 * (d.values[j] + (xe.values[j] - d2.values[j]) / s_next);
        } else {
            x = std::move(xe);
        }
        // harmonize the known region with the current noise level
        for (size_t j = 0; j < x.numel(); ++j)
            if (M.observed[j]) x.values[j] = y.values[j] + s_next * rng.normal();
        detail::require_finite_step(x, i);
    }

    TimeSeries out = img2ts(x, ctx.spec);
    // observed positions are bit-exact by final overwrite
    for (int t = 0; t < out.length; ++t)
        for (int k = 0; k < out.features; ++k)
            if (ctx.mask.at(t, k)) out.at(t, k) = ctx.series.at(t, k);
    return out;
}

// Mask file: CSV with header `t,k,observed` listing the unobserved entries;
// every unlisted position is observed.
inline TimeMask load_mask_csv(const std::string& path, int L, int K) {
    std::ifstream in(path);
    if (!in) throw ValidationError("mask csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("mask csv: empty file " + path);
    auto header = detail::split_csv_line(line);
    if (header.size() != 3 || header[0] != "t" || header[1] != "k" || header[2] != "observed")
        throw ParseError("mask csv: expected header t,k,observed in " + path);
    TimeMask mask(L, K, true);
    size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 3)
            throw ParseError("mask csv: row " + std::to_string(row) + " needs 3 cells");
        long t = detail::parse_long(cells[0], row, 1);
        long k = detail::parse_long(cells[1], row, 2);
        long obs = detail::parse_long(cells[2], row, 3);
        if (t < 0 || t >= L || k < 0 || k >= K)
            throw ValidationError("mask csv: position (" + std::to_string(t) + "," +
                                  std::to_string(k) + ") out of range at row " +
                                  std::to_string(row));
        mask.at(int(t), int(k)) = obs != 0;
    }
    return mask;
}

inline void write_mask_csv(const TimeMask& mask, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("mask csv: cannot write " + path);
    out << "t,k,observed\n";
    for (int t = 0; t < mask.length; ++t)
        for (int k = 0; k < mask.features; ++k)
            if (!mask.at(t, k)) out << t << "," << k << ",0\n";
}

}  // namespace tsimg
