#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tsimg/nn.hpp"
#include "tsimg/series.hpp"
#include "tsimg/transforms.hpp"

namespace tsimg {

struct MetricReport {
    std::string metric;
    double value = 0.0;
    double std_dev = 0.0;
    int repeats = 1;
    std::vector<uint64_t> seeds;
    std::string config_snapshot;
};

inline MetricReport aggregate_reports(const std::vector<MetricReport>& rs) {
    check(!rs.empty(), "aggregate_reports: empty");
    MetricReport out = rs.front();
    out.repeats = int(rs.size());
    out.seeds.clear();
    double mean = 0.0;
    for (const auto& r : rs) {
        mean += r.value;
        for (uint64_t s : r.seeds) out.seeds.push_back(s);
    }
    mean /= double(rs.size());
    double var = 0.0;
    for (const auto& r : rs) var += (r.value - mean) * (r.value - mean);
    out.value = mean;
    out.std_dev = rs.size() >= 3 ? std::sqrt(var / double(rs.size())) : 0.0;
    return out;
}

// Proxy-network settings for the learned metrics.
struct SequenceEncoderConfig {
    int hidden_dim = 16;
    int epochs = 100;
    double learning_rate = 0.01;
    int batch_size = 128;

    void validate() const {
        check(hidden_dim >= 1 && epochs >= 1 && learning_rate > 0 && batch_size >= 1,
              "SequenceEncoderConfig: all fields must be positive");
    }
};

namespace evaldetail {

// Single-layer GRU over K features, batched BPTT. Small and self-contained;
// deliberately independent of the diffusion/denoiser code paths.
struct Gru {
    int K = 0, H = 0;
    int wz, uz, bz, wr, ur, br, wn, un, bn;

    void build(nn::ParamStore& P, int K_, int H_, Rng& rng) {
        K = K_;
        H = H_;
        auto mk = [&](const char* name, std::vector<int> shape) {
            int id = P.add(name, std::move(shape));
            size_t fan = P[id].shape.size() > 1 ? size_t(P[id].shape[1]) : 0;
            if (fan > 0) {
                double s = 1.0 / std::sqrt(double(fan));
                for (double& v : P[id].value) v = s * rng.normal();
            }
            return id;
        };
        wz = mk("gru.wz", {H, K});
        uz = mk("gru.uz", {H, H});
        bz = mk("gru.bz", {H});
        wr = mk("gru.wr", {H, K});
        ur = mk("gru.ur", {H, H});
        br = mk("gru.br", {H});
        wn = mk("gru.wn", {H, K});
        un = mk("gru.un", {H, H});
        bn = mk("gru.bn", {H});
    }

    struct Cache {
        int B = 0, L = 0;
        std::vector<double> x;             // B*L*K
        std::vector<double> z, r, n, u, h;  // B*L*H
    };

    // x: B*L*K row-major; returns hidden states B*L*H in cache.h
    void forward(const nn::ParamStore& P, const std::vector<double>& x, int B, int L,
                 Cache& c) const {
        c.B = B;
        c.L = L;
        c.x = x;
        const size_t n_bh = size_t(B) * L * H;
        c.z.assign(n_bh, 0.0);
        c.r.assign(n_bh, 0.0);
        c.n.assign(n_bh, 0.0);
        c.u.assign(n_bh, 0.0);
        c.h.assign(n_bh, 0.0);
        std::vector<double> hp(H);
        for (int b = 0; b < B; ++b) {
            std::fill(hp.begin(), hp.end(), 0.0);
            for (int t = 0; t < L; ++t) {
                const double* xt = &x[(size_t(b) * L + t) * K];
                const size_t off = (size_t(b) * L + t) * H;
                for (int i = 0; i < H; ++i) {
                    double az = P[bz].value[size_t(i)], ar = P[br].value[size_t(i)],
                           uu = P[bn].value[size_t(i)], an = 0.0;
                    const double* wzr = &P[wz].value[size_t(i) * K];
                    const double* wrr = &P[wr].value[size_t(i) * K];
                    const double* wnr = &P[wn].value[size_t(i) * K];
                    for (int k = 0; k < K; ++k) {
                        az += wzr[k] * xt[k];
                        ar += wrr[k] * xt[k];
                        an += wnr[k] * xt[k];
                    }
                    const double* uzr = &P[uz].value[size_t(i) * H];
                    const double* urr = &P[ur].value[size_t(i) * H];
                    const double* unr = &P[un].value[size_t(i) * H];
                    for (int j = 0; j < H; ++j) {
                        az += uzr[j] * hp[j];
                        ar += urr[j] * hp[j];
                        uu += unr[j] * hp[j];
                    }
                    const double zv = 1.0 / (1.0 + std::exp(-az));
                    const double rv = 1.0 / (1.0 + std::exp(-ar));
                    const double nv = std::tanh(an + rv * uu);
                    c.z[off + i] = zv;
                    c.r[off + i] = rv;
                    c.n[off + i] = nv;
                    c.u[off + i] = uu;
                    c.h[off + i] = (1.0 - zv) * nv + zv * hp[i];
                }
                for (int i = 0; i < H; ++i) hp[i] = c.h[off + i];
            }
        }
    }

    // gh: gradient wrt hidden states, B*L*H; accumulates parameter grads.
    void backward(nn::ParamStore& P, const Cache& c, const std::vector<double>& gh) const {
        const int B = c.B, L = c.L;
        std::vector<double> dh(H), dhp(H), daz(H), dar(H), dan(H), du(H), hp(H);
        for (int b = 0; b < B; ++b) {
            std::fill(dhp.begin(), dhp.end(), 0.0);
            for (int t = L - 1; t >= 0; --t) {
                const size_t off = (size_t(b) * L + t) * H;
                const double* xt = &c.x[(size_t(b) * L + t) * K];
                if (t > 0) {
                    const size_t poff = (size_t(b) * L + t - 1) * H;
                    for (int i = 0; i < H; ++i) hp[i] = c.h[poff + i];
                } else {
                    std::fill(hp.begin(), hp.end(), 0.0);
                }
                for (int i = 0; i < H; ++i) {
                    dh[i] = gh[off + i] + dhp[i];
                    const double zv = c.z[off + i], nv = c.n[off + i], rv = c.r[off + i],
                                 uu = c.u[off + i];
                    const double dz = dh[i] * (hp[i] - nv);
                    const double dn = dh[i] * (1.0 - zv);
                    dhp[i] = dh[i] * zv;
                    const double da_n = dn * (1.0 - nv * nv);
                    dan[i] = da_n;
                    du[i] = da_n * rv;
                    dar[i] = da_n * uu * rv * (1.0 - rv);
                    daz[i] = dz * zv * (1.0 - zv);
                }
                for (int i = 0; i < H; ++i) {
                    P[bz].grad[size_t(i)] += daz[i];
                    P[br].grad[size_t(i)] += dar[i];
                    P[bn].grad[size_t(i)] += du[i];
                    double* gwz = &P[wz].grad[size_t(i) * K];
                    double* gwr = &P[wr].grad[size_t(i) * K];
                    double* gwn = &P[wn].grad[size_t(i) * K];
                    for (int k = 0; k < K; ++k) {
                        gwz[k] += daz[i] * xt[k];
                        gwr[k] += dar[i] * xt[k];
                        gwn[k] += dan[i] * xt[k];
                    }
                    double* guz = &P[uz].grad[size_t(i) * H];
                    double* gur = &P[ur].grad[size_t(i) * H];
                    double* gun = &P[un].grad[size_t(i) * H];
                    for (int j = 0; j < H; ++j) {
                        guz[j] += daz[i] * hp[j];
                        gur[j] += dar[i] * hp[j];
                        gun[j] += du[i] * hp[j];
                    }
                }
                // carry through the recurrent matmuls
                for (int j = 0; j < H; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < H; ++i)
                        s += P[uz].value[size_t(i) * H + j] * daz[i] +
                             P[ur].value[size_t(i) * H + j] * dar[i] +
                             P[un].value[size_t(i) * H + j] * du[i];
                    dhp[j] += s;
                }
            }
        }
    }
};

// TimeGAN-style [0,1] scaling fitted on the real batch, applied to both sides.
struct MinMaxScaler {
    std::vector<double> lo, range;

    void fit(const SeriesBatch& real) {
        const int K = real.features();
        lo.assign(size_t(K), std::numeric_limits<double>::infinity());
        std::vector<double> hi(size_t(K), -std::numeric_limits<double>::infinity());
        for (const auto& ts : real.items)
            for (int t = 0; t < ts.length; ++t)
                for (int k = 0; k < K; ++k) {
                    lo[size_t(k)] = std::min(lo[size_t(k)], ts.at(t, k));
                    hi[size_t(k)] = std::max(hi[size_t(k)], ts.at(t, k));
                }
        range.resize(size_t(K));
        for (int k = 0; k < K; ++k) {
            range[size_t(k)] = hi[size_t(k)] - lo[size_t(k)];
            if (range[size_t(k)] <= 0.0) range[size_t(k)] = 1.0;
        }
    }

    // packs items[idx] into a flat B*L*K buffer, scaled
    std::vector<double> pack(const SeriesBatch& b, const std::vector<int>& idx) const {
        const int L = b.length(), K = b.features();
        std::vector<double> out(idx.size() * size_t(L) * K);
        for (size_t i = 0; i < idx.size(); ++i) {
            const auto& ts = b.items[size_t(idx[i])];
            for (int t = 0; t < L; ++t)
                for (int k = 0; k < K; ++k)
                    out[(i * L + t) * K + k] =
                        (ts.at(t, k) - lo[size_t(k)]) / range[size_t(k)];
        }
        return out;
    }
};

inline void require_metric_data(const SeriesBatch& real, const SeriesBatch& synth,
                                const SequenceEncoderConfig& cfg) {
    cfg.validate();
    check(!real.empty() && !synth.empty(), "metric: empty batch");
    if (real.length() != synth.length() || real.features() != synth.features())
        throw ShapeError("metric: real and synth batches must share (L, K)");
    if (int(real.size()) < 2 * cfg.batch_size || int(synth.size()) < 2 * cfg.batch_size)
        throw ValidationError("metric: insufficient data, need at least 2*batch_size = " +
                              std::to_string(2 * cfg.batch_size) + " items per side");
}

inline std::vector<int> shuffled_indices(size_t n, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[size_t(rng.below(i))]);
    return idx;
}

// Trains a GRU + mean-pool + logit binary discriminator (real=1, synth=0).
// Returns (test accuracy, test cross-entropy).
inline std::pair<double, double> train_discriminator(const SeriesBatch& real,
                                                     const SeriesBatch& synth,
                                                     const SequenceEncoderConfig& cfg,
                                                     uint64_t seed) {
    const int L = real.length(), K = real.features(), H = cfg.hidden_dim;
    Rng rng(derive_seed(seed, 0x0d15c));
    MinMaxScaler sc;
    sc.fit(real);

    // half of each side for training, half for testing
    auto ridx = shuffled_indices(real.size(), rng);
    auto sidx = shuffled_indices(synth.size(), rng);
    const size_t rtr = real.size() / 2, str = synth.size() / 2;

    struct Item {
        int idx;
        bool is_real;
    };
    std::vector<Item> train, test;
    for (size_t i = 0; i < real.size(); ++i)
        (i < rtr ? train : test).push_back({ridx[i], true});
    for (size_t i = 0; i < synth.size(); ++i)
        (i < str ? train : test).push_back({sidx[i], false});

    nn::ParamStore P;
    Gru gru;
    gru.build(P, K, H, rng);
    int head_w = P.add("head.weight", {1, H});
    int head_b = P.add("head.bias", {1});
    {
        double s = 1.0 / std::sqrt(double(H));
        for (double& v : P[head_w].value) v = s * rng.normal();
    }
    nn::AdamW opt(P, {cfg.learning_rate, 1.0, 0.9, 0.999, 1e-8});

    auto run_batch = [&](const std::vector<Item>& items, size_t lo, size_t hi, bool learn,
                         double& acc_hits, double& ce_sum) {
        const int B = int(hi - lo);
        std::vector<int> idx_r, idx_s;
        std::vector<double> x(size_t(B) * L * K);
        std::vector<double> label(size_t(B), 0.0);
        for (int b = 0; b < B; ++b) {
            const Item& it = items[lo + size_t(b)];
            const SeriesBatch& src = it.is_real ? real : synth;
            std::vector<int> one{it.idx};
            auto packed = sc.pack(src, one);
            std::copy(packed.begin(), packed.end(), x.begin() + size_t(b) * L * K);
            label[size_t(b)] = it.is_real ? 1.0 : 0.0;
        }
        Gru::Cache c;
        gru.forward(P, x, B, L, c);
        std::vector<double> gh(size_t(B) * L * H, 0.0);
        for (int b = 0; b < B; ++b) {
            double logit = P[head_b].value[0];
            std::vector<double> pooled(size_t(H), 0.0);
            for (int t = 0; t < L; ++t)
                for (int i = 0; i < H; ++i) pooled[size_t(i)] += c.h[(size_t(b) * L + t) * H + i];
            for (int i = 0; i < H; ++i) {
                pooled[size_t(i)] /= L;
                logit += P[head_w].value[size_t(i)] * pooled[size_t(i)];
            }
            const double y = label[size_t(b)];
            const double p = 1.0 / (1.0 + std::exp(-logit));
            // numerically safe BCE-with-logits
            const double ce = std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
            ce_sum += ce;
            acc_hits += ((logit > 0.0) == (y > 0.5)) ? 1.0 : 0.0;
            if (learn) {
                const double dlogit = (p - y) / B;
                P[head_b].grad[0] += dlogit;
                for (int i = 0; i < H; ++i) {
                    P[head_w].grad[size_t(i)] += dlogit * pooled[size_t(i)];
                    const double g = dlogit * P[head_w].value[size_t(i)] / L;
                    for (int t = 0; t < L; ++t) gh[(size_t(b) * L + t) * H + i] = g;
                }
            }
        }
        if (learn) {
            gru.backward(P, c, gh);
            opt.step(P);
            P.zero_grad();
        }
    };

    for (int e = 0; e < cfg.epochs; ++e) {
        auto order = shuffled_indices(train.size(), rng);
        std::vector<Item> shuffled(train.size());
        for (size_t i = 0; i < train.size(); ++i) shuffled[i] = train[size_t(order[i])];
        for (size_t lo = 0; lo < shuffled.size(); lo += size_t(cfg.batch_size)) {
            size_t hi = std::min(shuffled.size(), lo + size_t(cfg.batch_size));
            double a = 0, c2 = 0;
            run_batch(shuffled, lo, hi, true, a, c2);
        }
    }
    double hits = 0.0, ce = 0.0;
    for (size_t lo = 0; lo < test.size(); lo += size_t(cfg.batch_size)) {
        size_t hi = std::min(test.size(), lo + size_t(cfg.batch_size));
        run_batch(test, lo, hi, false, hits, ce);
    }
    return {hits / double(test.size()), ce / double(test.size())};
}

}  // namespace evaldetail

// |test accuracy - 0.5| of a real-vs-synthetic discriminator; lower is better.
inline MetricReport discriminative_score(const SeriesBatch& real, const SeriesBatch& synth,
                                         const SequenceEncoderConfig& cfg, uint64_t seed) {
    evaldetail::require_metric_data(real, synth, cfg);
    auto [acc, ce] = evaldetail::train_discriminator(real, synth, cfg, seed);
    (void)ce;
    return {"discriminative", std::abs(acc - 0.5), 0.0, 1, {seed}, ""};
}

// Mean test cross-entropy of the trained discriminator; higher (closer to ln 2
// and above) means less distinguishable samples.
inline MetricReport classification_score(const SeriesBatch& real, const SeriesBatch& synth,
                                         const SequenceEncoderConfig& cfg, uint64_t seed) {
    evaldetail::require_metric_data(real, synth, cfg);
    auto [acc, ce] = evaldetail::train_discriminator(real, synth, cfg, seed);
    (void)acc;
    return {"classification", ce, 0.0, 1, {seed}, ""};
}

// Train-on-synthetic-test-on-real one-step-ahead MAE over all features.
inline MetricReport predictive_score(const SeriesBatch& real, const SeriesBatch& synth,
                                     const SequenceEncoderConfig& cfg, uint64_t seed) {
    evaldetail::require_metric_data(real, synth, cfg);
    const int L = real.length(), K = real.features(), H = cfg.hidden_dim;
    check(L >= 2, "predictive_score: L must be >= 2");
    Rng rng(derive_seed(seed, 0x93ed));
    evaldetail::MinMaxScaler sc;
    sc.fit(real);

    nn::ParamStore P;
    evaldetail::Gru gru;
    gru.build(P, K, H, rng);
    int head_w = P.add("head.weight", {K, H});
    int head_b = P.add("head.bias", {K});
    {
        double s = 1.0 / std::sqrt(double(H));
        for (double& v : P[head_w].value) v = s * rng.normal();
    }
    nn::AdamW opt(P, {cfg.learning_rate, 0.0, 0.9, 0.999, 1e-8});

    const int Lenc = L - 1;
    auto run = [&](const SeriesBatch& data, const std::vector<int>& idx, bool learn) {
        double abs_sum = 0.0;
        size_t count = 0;
        for (size_t lo = 0; lo < idx.size(); lo += size_t(cfg.batch_size)) {
            size_t hi = std::min(idx.size(), lo + size_t(cfg.batch_size));
            std::vector<int> sel(idx.begin() + long(lo), idx.begin() + long(hi));
            const int B = int(sel.size());
            auto full = sc.pack(data, sel);  // B*L*K
            std::vector<double> x(size_t(B) * Lenc * K);
            for (int b = 0; b < B; ++b)
                std::copy(&full[size_t(b) * L * K], &full[(size_t(b) * L + Lenc) * K],
                          &x[size_t(b) * Lenc * K]);
            evaldetail::Gru::Cache c;
            gru.forward(P, x, B, Lenc, c);
            std::vector<double> gh(size_t(B) * Lenc * H, 0.0);
            const double inv = 1.0 / double(size_t(B) * Lenc * K);
            for (int b = 0; b < B; ++b)
                for (int t = 0; t < Lenc; ++t) {
                    const double* hvec = &c.h[(size_t(b) * Lenc + t) * H];
                    for (int k = 0; k < K; ++k) {
                        double yhat = P[head_b].value[size_t(k)];
                        const double* wrow = &P[head_w].value[size_t(k) * H];
                        for (int i = 0; i < H; ++i) yhat += wrow[i] * hvec[i];
                        const double target = full[(size_t(b) * L + t + 1) * K + k];
                        const double err = yhat - target;
                        abs_sum += std::abs(err);
                        ++count;
                        if (learn) {
                            const double de = (err > 0 ? 1.0 : (err < 0 ? -1.0 : 0.0)) * inv;
                            P[head_b].grad[size_t(k)] += de;
                            double* gw = &P[head_w].grad[size_t(k) * H];
                            double* ghv = &gh[(size_t(b) * Lenc + t) * H];
                            for (int i = 0; i < H; ++i) {
                                gw[i] += de * hvec[i];
                                ghv[i] += de * wrow[i];
                            }
                        }
                    }
                }
            if (learn) {
                gru.backward(P, c, gh);
                opt.step(P);
                P.zero_grad();
            }
        }
        return abs_sum / double(count);
    };

    for (int e = 0; e < cfg.epochs; ++e) {
        auto order = evaldetail::shuffled_indices(synth.size(), rng);
        run(synth, order, true);
    }
    // test on a held-out half of real
    auto ridx = evaldetail::shuffled_indices(real.size(), rng);
    ridx.resize(real.size() / 2);
    double mae = run(real, ridx, false);
    return {"predictive", mae, 0.0, 1, {seed}, ""};
}

// Train-on-synthetic seq2seq predictor of the last k_future steps; MSE on real.
inline MetricReport prediction_score(const SeriesBatch& real, const SeriesBatch& synth,
                                     const SequenceEncoderConfig& cfg, int k_future,
                                     uint64_t seed) {
    evaldetail::require_metric_data(real, synth, cfg);
    const int L = real.length(), K = real.features(), H = cfg.hidden_dim;
    if (k_future >= L)
        throw ValidationError("prediction_score: k_future must be < L (k=" +
                              std::to_string(k_future) + ", L=" + std::to_string(L) + ")");
    check(k_future >= 1, "prediction_score: k_future must be >= 1");
    Rng rng(derive_seed(seed, 0x9e3d));
    evaldetail::MinMaxScaler sc;
    sc.fit(real);

    nn::ParamStore P;
    evaldetail::Gru gru;
    gru.build(P, K, H, rng);
    const int out_dim = k_future * K;
    int head_w = P.add("head.weight", {out_dim, H});
    int head_b = P.add("head.bias", {out_dim});
    {
        double s = 1.0 / std::sqrt(double(H));
        for (double& v : P[head_w].value) v = s * rng.normal();
    }
    nn::AdamW opt(P, {cfg.learning_rate, 0.0, 0.9, 0.999, 1e-8});

    const int Lenc = L - k_future;
    auto run = [&](const SeriesBatch& data, const std::vector<int>& idx, bool learn) {
        double se_sum = 0.0;
        size_t count = 0;
        for (size_t lo = 0; lo < idx.size(); lo += size_t(cfg.batch_size)) {
            size_t hi = std::min(idx.size(), lo + size_t(cfg.batch_size));
            std::vector<int> sel(idx.begin() + long(lo), idx.begin() + long(hi));
            const int B = int(sel.size());
            auto full = sc.pack(data, sel);
            std::vector<double> x(size_t(B) * Lenc * K);
            for (int b = 0; b < B; ++b)
                std::copy(&full[size_t(b) * L * K], &full[(size_t(b) * L + Lenc) * K],
                          &x[size_t(b) * Lenc * K]);
            evaldetail::Gru::Cache c;
            gru.forward(P, x, B, Lenc, c);
            std::vector<double> gh(size_t(B) * Lenc * H, 0.0);
            const double inv = 1.0 / double(size_t(B) * out_dim);
            for (int b = 0; b < B; ++b) {
                const double* hlast = &c.h[(size_t(b) * Lenc + Lenc - 1) * H];
                double* ghlast = &gh[(size_t(b) * Lenc + Lenc - 1) * H];
                for (int o = 0; o < out_dim; ++o) {
                    double yhat = P[head_b].value[size_t(o)];
                    const double* wrow = &P[head_w].value[size_t(o) * H];
                    for (int i = 0; i < H; ++i) yhat += wrow[i] * hlast[i];
                    const double target = full[(size_t(b) * L + Lenc) * K + o];
                    const double err = yhat - target;
                    se_sum += err * err;
                    ++count;
                    if (learn) {
                        const double de = 2.0 * err * inv;
                        P[head_b].grad[size_t(o)] += de;
                        double* gw = &P[head_w].grad[size_t(o) * H];
                        for (int i = 0; i < H; ++i) {
                            gw[i] += de * hlast[i];
                            ghlast[i] += de * wrow[i];
                        }
                    }
                }
            }
            if (learn) {
                gru.backward(P, c, gh);
                opt.step(P);
                P.zero_grad();
            }
        }
        return se_sum / double(count);
    };

    for (int e = 0; e < cfg.epochs; ++e) {
        auto order = evaldetail::shuffled_indices(synth.size(), rng);
        run(synth, order, true);
    }
    auto ridx = evaldetail::shuffled_indices(real.size(), rng);
    ridx.resize(real.size() / 2);
    double mse = run(real, ridx, false);
    return {"prediction", mse, 0.0, 1, {seed}, ""};
}

enum class MarginalRange { Real, Union };

// Mean absolute difference between pooled binned value distributions.
inline MetricReport marginal_score(const SeriesBatch& real, const SeriesBatch& synth,
                                   int bins = 50, MarginalRange mode = MarginalRange::Real) {
    check(!real.empty() && !synth.empty(), "marginal_score: empty batch");
    check(bins >= 1, "marginal_score: bins must be >= 1");
    auto minmax = [](const SeriesBatch& b) {
        double lo = b.items[0].values[0], hi = lo;
        for (const auto& ts : b.items)
            for (double v : ts.values) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        return std::pair<double, double>(lo, hi);
    };
    auto [lo, hi] = minmax(real);
    if (mode == MarginalRange::Union) {
        auto [slo, shi] = minmax(synth);
        lo = std::min(lo, slo);
        hi = std::max(hi, shi);
    }
    if (!(hi > lo)) throw ValidationError("marginal_score: real data has empty value range");

    auto histogram = [&](const SeriesBatch& b) {
        std::vector<double> hgram(size_t(bins), 0.0);
        size_t n = 0;
        for (const auto& ts : b.items)
            for (double v : ts.values) {
                int bin = int((v - lo) / (hi - lo) * bins);
                bin = std::clamp(bin, 0, bins - 1);
                hgram[size_t(bin)] += 1.0;
                ++n;
            }
        for (double& h : hgram) h /= double(n);
        return hgram;
    };
    auto hr = histogram(real), hs = histogram(synth);
    double mad = 0.0;
    for (int i = 0; i < bins; ++i) mad += std::abs(hr[size_t(i)] - hs[size_t(i)]);
    mad /= double(bins);
    return {"marginal", mad, 0.0, 1, {}, ""};
}

// MSE over the unobserved positions only.
inline double masked_mse(const TimeSeries& truth, const TimeSeries& generated,
                         const TimeMask& mask) {
    if (truth.length != generated.length || truth.features != generated.features ||
        mask.length != truth.length || mask.features != truth.features)
        throw ShapeError("masked_mse: shape mismatch");
    double se = 0.0;
    size_t n = 0;
    for (int t = 0; t < truth.length; ++t)
        for (int k = 0; k < truth.features; ++k)
            if (!mask.at(t, k)) {
                const double d = generated.at(t, k) - truth.at(t, k);
                se += d * d;
                ++n;
            }
    if (n == 0) throw ValidationError("masked_mse: mask has no unobserved positions");
    return se / double(n);
}

}  // namespace tsimg
