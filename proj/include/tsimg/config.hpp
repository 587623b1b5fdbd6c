#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "tsimg/denoiser.hpp"
#include "tsimg/diffusion.hpp"
#include "tsimg/eval.hpp"
#include "tsimg/series.hpp"
#include "tsimg/transforms.hpp"

namespace tsimg {

struct DatasetConfig {
    std::string source = "sine";  // "sine" or a CSV path
    int L = 24;
    int K = 5;
    int num_samples = 2000;  // sine only
    NormKind normalization = NormKind::MinMax11;
};

struct TrainingConfig {
    int epochs = 200;
    int batch_size = 128;
    double learning_rate = 1e-4;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    int checkpoint_interval = 50;
};

struct EvalConfig {
    std::vector<std::string> metrics = {"discriminative", "predictive", "marginal"};
    int repeats = 3;
    int k_future = 10;
    int bins = 50;
    SequenceEncoderConfig encoder;
};

struct RunConfig {
    DatasetConfig dataset;
    // defaults form a coherent pipeline: 24x5 sine, 8x8 delay embedding,
    // 5-channel denoiser sized for a single desktop core
    TransformSpec transform = {.target_h = 8, .target_w = 8};
    DiffusionConfig diffusion;
    DenoiserConfig denoiser = {.base_channels = 16, .channel_multipliers = {1, 2}, .in_channels = 5};
    TrainingConfig training;
    EvalConfig eval;

    void validate() const {
        check(dataset.L >= 1 && dataset.K >= 1, "config: dataset L and K must be positive");
        auto sh = output_shape(transform);
        diffusion.validate();
        denoiser.validate();
        if (denoiser.in_channels != sh.C)
            throw ValidationError("config: denoiser.in_channels (" +
                                  std::to_string(denoiser.in_channels) +
                                  ") must equal transform output channels (" +
                                  std::to_string(sh.C) + ")");
        if (denoiser.image_size != sh.H || denoiser.image_size != sh.W)
            throw ValidationError("config: denoiser.image_size (" +
                                  std::to_string(denoiser.image_size) +
                                  ") must equal transform output size (" + std::to_string(sh.H) +
                                  "x" + std::to_string(sh.W) + ")");
        check(training.epochs >= 0 && training.batch_size >= 1,
              "config: training epochs must be >= 0 and batch_size >= 1");
        check(training.learning_rate > 0 && training.weight_decay >= 0,
              "config: learning_rate must be positive, weight_decay nonnegative");
        eval.encoder.validate();
        check(eval.repeats >= 1 && eval.k_future >= 1 && eval.bins >= 1,
              "config: eval repeats/k_future/bins must be positive");
        static const std::set<std::string> known = {"discriminative", "predictive", "marginal",
                                                    "classification", "prediction"};
        for (const auto& m : eval.metrics)
            if (!known.count(m))
                throw ValidationError(
                    "config: unknown metric '" + m +
                    "' (valid: discriminative, predictive, marginal, classification, prediction)");
    }
};

namespace cfgdetail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& allowed,
                           const std::string& section) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ValidationError("config: unknown key '" + it.key() + "' in section " + section);
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace cfgdetail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using cfgdetail::get;
    using cfgdetail::reject_unknown;
    RunConfig rc;
    reject_unknown(j, {"dataset", "transform", "diffusion", "denoiser", "training", "eval"},
                   "(top level)");

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        reject_unknown(d, {"source", "L", "K", "num_samples", "normalization"}, "dataset");
        get(d, "source", rc.dataset.source);
        get(d, "L", rc.dataset.L);
        get(d, "K", rc.dataset.K);
        get(d, "num_samples", rc.dataset.num_samples);
        if (d.contains("normalization"))
            rc.dataset.normalization = norm_kind_from_name(d.at("normalization").get<std::string>());
    }
    rc.transform.L = rc.dataset.L;
    rc.transform.K = rc.dataset.K;
    if (j.contains("transform")) {
        const auto& t = j.at("transform");
        reject_unknown(t, {"kind", "n", "m", "n_fft", "hop_length", "target_h", "target_w",
                           "gaf_max_len"},
                       "transform");
        if (t.contains("kind"))
            rc.transform.kind = transform_kind_from_name(t.at("kind").get<std::string>());
        get(t, "n", rc.transform.n);
        get(t, "m", rc.transform.m);
        get(t, "n_fft", rc.transform.n_fft);
        get(t, "hop_length", rc.transform.hop_length);
        get(t, "target_h", rc.transform.target_h);
        get(t, "target_w", rc.transform.target_w);
        get(t, "gaf_max_len", rc.transform.gaf_max_len);
    }
    if (j.contains("diffusion")) {
        const auto& d = j.at("diffusion");
        reject_unknown(d, {"sigma_min", "sigma_max", "rho", "num_steps", "sigma_data", "p_mean",
                           "p_std"},
                       "diffusion");
        get(d, "sigma_min", rc.diffusion.sigma_min);
        get(d, "sigma_max", rc.diffusion.sigma_max);
        get(d, "rho", rc.diffusion.rho);
        get(d, "num_steps", rc.diffusion.num_steps);
        get(d, "sigma_data", rc.diffusion.sigma_data);
        get(d, "p_mean", rc.diffusion.p_mean);
        get(d, "p_std", rc.diffusion.p_std);
    }
    if (j.contains("denoiser")) {
        const auto& d = j.at("denoiser");
        reject_unknown(d, {"base_channels", "channel_multipliers", "in_channels", "image_size",
                           "noise_embedding_dim"},
                       "denoiser");
        get(d, "base_channels", rc.denoiser.base_channels);
        get(d, "channel_multipliers", rc.denoiser.channel_multipliers);
        get(d, "in_channels", rc.denoiser.in_channels);
        get(d, "image_size", rc.denoiser.image_size);
        get(d, "noise_embedding_dim", rc.denoiser.noise_embedding_dim);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        reject_unknown(t, {"epochs", "batch_size", "learning_rate", "weight_decay", "seed",
                           "checkpoint_interval"},
                       "training");
        get(t, "epochs", rc.training.epochs);
        get(t, "batch_size", rc.training.batch_size);
        get(t, "learning_rate", rc.training.learning_rate);
        get(t, "weight_decay", rc.training.weight_decay);
        get(t, "seed", rc.training.seed);
        get(t, "checkpoint_interval", rc.training.checkpoint_interval);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, {"metrics", "repeats", "k_future", "bins", "encoder"}, "eval");
        get(e, "metrics", rc.eval.metrics);
        get(e, "repeats", rc.eval.repeats);
        get(e, "k_future", rc.eval.k_future);
        get(e, "bins", rc.eval.bins);
        if (e.contains("encoder")) {
            const auto& enc = e.at("encoder");
            reject_unknown(enc, {"hidden_dim", "epochs", "learning_rate", "batch_size"},
                           "eval.encoder");
            get(enc, "hidden_dim", rc.eval.encoder.hidden_dim);
            get(enc, "epochs", rc.eval.encoder.epochs);
            get(enc, "learning_rate", rc.eval.encoder.learning_rate);
            get(enc, "batch_size", rc.eval.encoder.batch_size);
        }
    }
    rc.validate();
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config: invalid JSON in " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

// Checkpoint config block round-trip helpers.
inline ConfigMap config_to_map(const RunConfig& rc) {
    ConfigMap m;
    m["dataset.source"] = rc.dataset.source;
    m["dataset.L"] = std::to_string(rc.dataset.L);
    m["dataset.K"] = std::to_string(rc.dataset.K);
    m["dataset.num_samples"] = std::to_string(rc.dataset.num_samples);
    m["dataset.normalization"] = norm_kind_name(rc.dataset.normalization);
    m["transform.kind"] = transform_kind_name(rc.transform.kind);
    m["transform.n"] = std::to_string(rc.transform.n);
    m["transform.m"] = std::to_string(rc.transform.m);
    m["transform.n_fft"] = std::to_string(rc.transform.n_fft);
    m["transform.hop_length"] = std::to_string(rc.transform.hop_length);
    m["transform.target_h"] = std::to_string(rc.transform.target_h);
    m["transform.target_w"] = std::to_string(rc.transform.target_w);
    m["transform.gaf_max_len"] = std::to_string(rc.transform.gaf_max_len);
    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    m["diffusion.sigma_min"] = fmt(rc.diffusion.sigma_min);
    m["diffusion.sigma_max"] = fmt(rc.diffusion.sigma_max);
    m["diffusion.rho"] = fmt(rc.diffusion.rho);
    m["diffusion.num_steps"] = std::to_string(rc.diffusion.num_steps);
    m["diffusion.sigma_data"] = fmt(rc.diffusion.sigma_data);
    m["diffusion.p_mean"] = fmt(rc.diffusion.p_mean);
    m["diffusion.p_std"] = fmt(rc.diffusion.p_std);
    m["denoiser.base_channels"] = std::to_string(rc.denoiser.base_channels);
    {
        std::string s;
        for (int v : rc.denoiser.channel_multipliers) s += (s.empty() ? "" : ",") + std::to_string(v);
        m["denoiser.channel_multipliers"] = s;
    }
    m["denoiser.in_channels"] = std::to_string(rc.denoiser.in_channels);
    m["denoiser.image_size"] = std::to_string(rc.denoiser.image_size);
    m["denoiser.noise_embedding_dim"] = std::to_string(rc.denoiser.noise_embedding_dim);
    m["training.epochs"] = std::to_string(rc.training.epochs);
    m["training.batch_size"] = std::to_string(rc.training.batch_size);
    m["training.learning_rate"] = fmt(rc.training.learning_rate);
    m["training.weight_decay"] = fmt(rc.training.weight_decay);
    m["training.seed"] = std::to_string(rc.training.seed);
    m["training.checkpoint_interval"] = std::to_string(rc.training.checkpoint_interval);
    return m;
}

inline RunConfig config_from_map(const ConfigMap& m) {
    RunConfig rc;
    auto s = [&](const char* k) -> std::string {
        auto it = m.find(k);
        if (it == m.end()) throw RuntimeFailure(std::string("checkpoint config: missing key ") + k);
        return it->second;
    };
    rc.dataset.source = s("dataset.source");
    rc.dataset.L = std::stoi(s("dataset.L"));
    rc.dataset.K = std::stoi(s("dataset.K"));
    rc.dataset.num_samples = std::stoi(s("dataset.num_samples"));
    rc.dataset.normalization = norm_kind_from_name(s("dataset.normalization"));
    rc.transform.kind = transform_kind_from_name(s("transform.kind"));
    rc.transform.L = rc.dataset.L;
    rc.transform.K = rc.dataset.K;
    rc.transform.n = std::stoi(s("transform.n"));
    rc.transform.m = std::stoi(s("transform.m"));
    rc.transform.n_fft = std::stoi(s("transform.n_fft"));
    rc.transform.hop_length = std::stoi(s("transform.hop_length"));
    rc.transform.target_h = std::stoi(s("transform.target_h"));
    rc.transform.target_w = std::stoi(s("transform.target_w"));
    rc.transform.gaf_max_len = std::stoi(s("transform.gaf_max_len"));
    rc.diffusion.sigma_min = std::stod(s("diffusion.sigma_min"));
    rc.diffusion.sigma_max = std::stod(s("diffusion.sigma_max"));
    rc.diffusion.rho = std::stod(s("diffusion.rho"));
    rc.diffusion.num_steps = std::stoi(s("diffusion.num_steps"));
    rc.diffusion.sigma_data = std::stod(s("diffusion.sigma_data"));
    rc.diffusion.p_mean = std::stod(s("diffusion.p_mean"));
    rc.diffusion.p_std = std::stod(s("diffusion.p_std"));
    rc.denoiser.base_channels = std::stoi(s("denoiser.base_channels"));
    {
        rc.denoiser.channel_multipliers.clear();
        std::istringstream is(s("denoiser.channel_multipliers"));
        std::string tok;
        while (std::getline(is, tok, ',')) rc.denoiser.channel_multipliers.push_back(std::stoi(tok));
    }
    rc.denoiser.in_channels = std::stoi(s("denoiser.in_channels"));
    rc.denoiser.image_size = std::stoi(s("denoiser.image_size"));
    rc.denoiser.noise_embedding_dim = std::stoi(s("denoiser.noise_embedding_dim"));
    rc.training.epochs = std::stoi(s("training.epochs"));
    rc.training.batch_size = std::stoi(s("training.batch_size"));
    rc.training.learning_rate = std::stod(s("training.learning_rate"));
    rc.training.weight_decay = std::stod(s("training.weight_decay"));
    rc.training.seed = std::stoull(s("training.seed"));
    rc.training.checkpoint_interval = std::stoi(s("training.checkpoint_interval"));
    rc.validate();
    return rc;
}

}  // namespace tsimg
