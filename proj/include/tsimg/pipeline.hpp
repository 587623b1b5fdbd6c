#pragma once

#include <filesystem>
#include <functional>

#include "tsimg/conditional.hpp"
#include "tsimg/config.hpp"
#include "tsimg/csv.hpp"

namespace tsimg {

inline SeriesBatch load_dataset(const DatasetConfig& cfg, uint64_t seed) {
    if (cfg.source == "sine") return generate_sine(cfg.num_samples, cfg.L, cfg.K, seed);
    SeriesBatch b = load_csv(cfg.source);
    if (b.length() != cfg.L || b.features() != cfg.K)
        throw ValidationError("dataset: " + cfg.source + " is " + std::to_string(b.length()) +
                              "x" + std::to_string(b.features()) + ", config expects " +
                              std::to_string(cfg.L) + "x" + std::to_string(cfg.K));
    return b;
}

struct PreparedData {
    SeriesBatch normalized;
    NormalizationState norm;
    std::vector<ImageTensor> images;
    std::vector<double> aux_default;  // dataset-level aux for generated images
};

inline PreparedData prepare_images(const SeriesBatch& raw, NormKind kind,
                                   const TransformSpec& spec) {
    PreparedData out;
    auto [normed, st] = normalize(raw, kind);
    out.normalized = std::move(normed);
    out.norm = std::move(st);
    out.images.reserve(out.normalized.size());
    for (const auto& ts : out.normalized.items) out.images.push_back(ts2img(ts, spec));
    if (!out.images.empty() && !out.images.front().aux.empty()) {
        // mean per-image aux, reused when inverting freshly sampled images
        out.aux_default.assign(out.images.front().aux.size(), 0.0);
        for (const auto& img : out.images)
            for (size_t i = 0; i < img.aux.size(); ++i) out.aux_default[i] += img.aux[i];
        for (double& v : out.aux_default) v /= double(out.images.size());
    }
    return out;
}

inline std::vector<nn::BTensor> make_training_batches(const std::vector<ImageTensor>& images,
                                                      int batch_size, uint64_t seed) {
    check(!images.empty(), "make_training_batches: no images");
    const auto& im0 = images.front();
    std::vector<int> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[size_t(rng.below(i))]);
    std::vector<nn::BTensor> batches;
    for (size_t lo = 0; lo < order.size(); lo += size_t(batch_size)) {
        const size_t hi = std::min(order.size(), lo + size_t(batch_size));
        nn::BTensor bt(int(hi - lo), im0.channels, im0.height, im0.width);
        for (size_t b = lo; b < hi; ++b) {
            const auto& img = images[size_t(order[b])];
            std::copy(img.values.begin(), img.values.end(),
                      bt.v.begin() + long((b - lo) * img.numel()));
        }
        batches.push_back(std::move(bt));
    }
    return batches;
}

// Undo dataset normalization for series with no per-sequence state
// (generated data): min-max kinds invert exactly; mean-centered data is
// rescaled by the global std with mean left at zero.
inline SeriesBatch denormalize_generated(const SeriesBatch& batch,
                                         const NormalizationState& st) {
    if (st.kind != NormKind::MeanCenterGlobalStd) return denormalize(batch, st);
    SeriesBatch out;
    for (const auto& ts : batch.items) {
        TimeSeries d(ts.length, ts.features);
        for (int t = 0; t < ts.length; ++t)
            for (int k = 0; k < ts.features; ++k) d.at(t, k) = ts.at(t, k) * st.ch_std[size_t(k)];
        out.push(std::move(d));
    }
    return out;
}

// Runs epochs [start_epoch, end_epoch); invokes on_epoch(epoch, mean_loss).
inline void train_loop(UNet& net, nn::AdamW& opt, const std::vector<ImageTensor>& images,
                       const RunConfig& rc, int start_epoch, int end_epoch,
                       const std::function<void(int, double)>& on_epoch) {
    for (int e = start_epoch; e < end_epoch; ++e) {
        auto batches = make_training_batches(images, rc.training.batch_size,
                                             derive_seed(rc.training.seed, 0xba7c + uint64_t(e)));
        double loss;
        try {
            loss = train_epoch(net, opt, batches, rc.diffusion,
                               derive_seed(rc.training.seed, uint64_t(e)));
        } catch (const RuntimeFailure& f) {
            throw RuntimeFailure("epoch " + std::to_string(e) + ": " + f.what());
        }
        if (on_epoch) on_epoch(e, loss);
    }
}

inline SeriesBatch generate_series(const UNet& net, const RunConfig& rc,
                                   const NormalizationState& norm,
                                   const std::vector<double>& aux_default, int count,
                                   uint64_t seed) {
    const auto sched = build_schedule(rc.diffusion);
    const auto sh = output_shape(rc.transform);
    PreconditionedDenoiser model(net, rc.diffusion.sigma_data);
    SeriesBatch normed;
    for (int i = 0; i < count; ++i) {
        ImageTensor img = heun_sample(model, sh, sched, derive_seed(seed, uint64_t(i)));
        img.aux = aux_default;
        normed.push(img2ts(img, rc.transform));
    }
    if (count == 0) return normed;
    return denormalize_generated(normed, norm);
}

// Normalization state round-trips through the checkpoint config block.
inline void norm_state_to_map(const NormalizationState& st, ConfigMap& m) {
    auto join = [](const std::vector<double>& v) {
        std::ostringstream os;
        os.precision(17);
        for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        return os.str();
    };
    m["norm.kind"] = norm_kind_name(st.kind);
    m["norm.features"] = std::to_string(st.features);
    m["norm.ch_min"] = join(st.ch_min);
    m["norm.ch_max"] = join(st.ch_max);
    m["norm.ch_std"] = join(st.ch_std);
}

inline NormalizationState norm_state_from_map(const ConfigMap& m) {
    NormalizationState st;
    auto split = [](const std::string& s) {
        std::vector<double> v;
        std::istringstream is(s);
        std::string tok;
        while (std::getline(is, tok, ',')) v.push_back(std::stod(tok));
        return v;
    };
    st.kind = norm_kind_from_name(m.at("norm.kind"));
    st.features = std::stoi(m.at("norm.features"));
    st.ch_min = split(m.at("norm.ch_min"));
    st.ch_max = split(m.at("norm.ch_max"));
    st.ch_std = split(m.at("norm.ch_std"));
    return st;
}

inline void aux_to_map(const std::vector<double>& aux, ConfigMap& m) {
    std::ostringstream os;
    os.precision(17);
    for (size_t i = 0; i < aux.size(); ++i) os << (i ? "," : "") << aux[i];
    m["transform.aux_default"] = os.str();
}

inline std::vector<double> aux_from_map(const ConfigMap& m) {
    std::vector<double> v;
    auto it = m.find("transform.aux_default");
    if (it == m.end() || it->second.empty()) return v;
    std::istringstream is(it->second);
    std::string tok;
    while (std::getline(is, tok, ',')) v.push_back(std::stod(tok));
    return v;
}

}  // namespace tsimg
