#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <zlib.h>

#include "tsimg/diffusion.hpp"
#include "tsimg/nn.hpp"

namespace tsimg {

struct DenoiserConfig {
    int base_channels = 64;
    std::vector<int> channel_multipliers = {1, 2, 2, 2};
    int in_channels = 1;
    int image_size = 8;
    int noise_embedding_dim = 32;

    void validate() const {
        check(base_channels >= 1 && in_channels >= 1 && image_size >= 1,
              "denoiser: channel/size fields must be positive");
        check(!channel_multipliers.empty(), "denoiser: channel_multipliers is empty");
        for (int m : channel_multipliers)
            check(m >= 1, "denoiser: multipliers must be positive");
        check(noise_embedding_dim >= 2 && noise_embedding_dim % 2 == 0,
              "denoiser: noise_embedding_dim must be even and >= 2");
        int down = 1 << (int(channel_multipliers.size()) - 1);
        check(image_size % down == 0,
              "denoiser: image_size " + std::to_string(image_size) +
                  " not divisible by 2^(levels-1) = " + std::to_string(down));
    }

    int levels() const { return int(channel_multipliers.size()); }
    int channels_at(int level) const { return base_channels * channel_multipliers[size_t(level)]; }
};

namespace detail {

inline std::vector<double> silu_vec_backward(const std::vector<double>& x,
                                             const std::vector<double>& gy) {
    std::vector<double> gx(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x[i]));
        gx[i] = gy[i] * s * (1.0 + x[i] * (1.0 - s));
    }
    return gx;
}

}  // namespace detail

// Residual block: GN -> SiLU -> conv3x3, + noise-embedding projection,
// GN -> SiLU -> conv3x3, plus identity/1x1 skip.
struct ResBlock {
    int cin = 0, cout = 0, emb_dim = 0;
    int gn1_g = -1, gn1_b = -1, conv1_w = -1, conv1_b = -1;
    int emb_w = -1, emb_b = -1;
    int gn2_g = -1, gn2_b = -1, conv2_w = -1, conv2_b = -1;
    int skip_w = -1, skip_b = -1;  // only when cin != cout

    struct Tape {
        nn::BTensor x, a1, s1, h, a2, s2;
        nn::GroupNormCache g1, g2;
    };

    void build(nn::ParamStore& P, const std::string& prefix, int cin_, int cout_, int E) {
        cin = cin_;
        cout = cout_;
        emb_dim = E;
        gn1_g = P.add(prefix + ".gn1.gamma", {cin});
        gn1_b = P.add(prefix + ".gn1.beta", {cin});
        conv1_w = P.add(prefix + ".conv1.weight", {cout, cin, 3, 3});
        conv1_b = P.add(prefix + ".conv1.bias", {cout});
        emb_w = P.add(prefix + ".emb.weight", {cout, E});
        emb_b = P.add(prefix + ".emb.bias", {cout});
        gn2_g = P.add(prefix + ".gn2.gamma", {cout});
        gn2_b = P.add(prefix + ".gn2.beta", {cout});
        conv2_w = P.add(prefix + ".conv2.weight", {cout, cout, 3, 3});
        conv2_b = P.add(prefix + ".conv2.bias", {cout});
        if (cin != cout) {
            skip_w = P.add(prefix + ".skip.weight", {cout, cin});
            skip_b = P.add(prefix + ".skip.bias", {cout});
        }
    }

    nn::BTensor forward(const nn::ParamStore& P, const nn::BTensor& x,
                        const std::vector<double>& semb, Tape& t) const {
        t.x = x;
        t.a1 = nn::groupnorm_forward(P, gn1_g, gn1_b, x, t.g1);
        t.s1 = nn::silu_forward(t.a1);
        nn::BTensor h = nn::conv3x3_forward(P, conv1_w, conv1_b, t.s1);
        std::vector<double> eo = nn::linear_forward(P, emb_w, emb_b, semb, x.B);
        const int hw = h.H * h.W;
        for (int b = 0; b < h.B; ++b)
            for (int c = 0; c < cout; ++c) {
                const double e = eo[size_t(b) * cout + c];
                double* p = h.plane(b, c);
                for (int i = 0; i < hw; ++i) p[i] += e;
            }
        t.h = h;
        t.a2 = nn::groupnorm_forward(P, gn2_g, gn2_b, h, t.g2);
        t.s2 = nn::silu_forward(t.a2);
        nn::BTensor out = nn::conv3x3_forward(P, conv2_w, conv2_b, t.s2);
        if (skip_w >= 0) {
            nn::BTensor sk = nn::conv1x1_forward(P, skip_w, skip_b, x);
            for (size_t i = 0; i < out.numel(); ++i) out.v[i] += sk.v[i];
        } else {
            for (size_t i = 0; i < out.numel(); ++i) out.v[i] += x.v[i];
        }
        return out;
    }

    // returns grad wrt x; accumulates grad wrt semb into gsemb
    nn::BTensor backward(nn::ParamStore& P, const Tape& t, const nn::BTensor& gy,
                         const std::vector<double>& semb, std::vector<double>& gsemb) const {
        nn::BTensor gs2 = nn::conv3x3_backward(P, conv2_w, conv2_b, t.s2, gy);
        nn::BTensor ga2 = nn::silu_backward(t.a2, gs2);
        nn::BTensor gh = nn::groupnorm_backward(P, gn2_g, gn2_b, t.g2, ga2);
        // embedding projection: gradient is the spatial sum per (b, c)
        const int hw = gh.H * gh.W;
        std::vector<double> geo(size_t(gh.B) * cout, 0.0);
        for (int b = 0; b < gh.B; ++b)
            for (int c = 0; c < cout; ++c) {
                const double* p = gh.plane(b, c);
                double s = 0.0;
                for (int i = 0; i < hw; ++i) s += p[i];
                geo[size_t(b) * cout + c] = s;
            }
        std::vector<double> gse = nn::linear_backward(P, emb_w, emb_b, semb, geo, gh.B);
        for (size_t i = 0; i < gsemb.size(); ++i) gsemb[i] += gse[i];
        nn::BTensor gs1 = nn::conv3x3_backward(P, conv1_w, conv1_b, t.s1, gh);
        nn::BTensor ga1 = nn::silu_backward(t.a1, gs1);
        nn::BTensor gx = nn::groupnorm_backward(P, gn1_g, gn1_b, t.g1, ga1);
        if (skip_w >= 0) {
            nn::BTensor gsk = nn::conv1x1_backward(P, skip_w, skip_b, t.x, gy);
            for (size_t i = 0; i < gx.numel(); ++i) gx.v[i] += gsk.v[i];
        } else {
            for (size_t i = 0; i < gx.numel(); ++i) gx.v[i] += gy.v[i];
        }
        return gx;
    }
};

// Encoder-decoder denoiser. Raw network only: EDM preconditioning wraps it
// (see PreconditionedDenoiser / train_epoch).
class UNet {
public:
    UNet() = default;

    UNet(DenoiserConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        const int E = cfg_.noise_embedding_dim;
        const int Lv = cfg_.levels();
        emb_lin1_w_ = P_.add("emb.lin1.weight", {E, E});
        emb_lin1_b_ = P_.add("emb.lin1.bias", {E});
        emb_lin2_w_ = P_.add("emb.lin2.weight", {E, E});
        emb_lin2_b_ = P_.add("emb.lin2.bias", {E});
        conv_in_w_ = P_.add("conv_in.weight", {cfg_.channels_at(0), cfg_.in_channels, 3, 3});
        conv_in_b_ = P_.add("conv_in.bias", {cfg_.channels_at(0)});
        enc_.resize(size_t(Lv));
        for (int l = 0; l < Lv; ++l) {
            int prev = (l == 0) ? cfg_.channels_at(0) : cfg_.channels_at(l - 1);
            enc_[size_t(l)][0].build(P_, "enc" + std::to_string(l) + ".res0", prev,
                                     cfg_.channels_at(l), E);
            enc_[size_t(l)][1].build(P_, "enc" + std::to_string(l) + ".res1",
                                     cfg_.channels_at(l), cfg_.channels_at(l), E);
        }
        dec_.resize(size_t(Lv > 1 ? Lv - 1 : 0));
        for (int l = Lv - 2; l >= 0; --l) {
            dec_[size_t(l)][0].build(P_, "dec" + std::to_string(l) + ".res0",
                                     cfg_.channels_at(l + 1), cfg_.channels_at(l), E);
            dec_[size_t(l)][1].build(P_, "dec" + std::to_string(l) + ".res1",
                                     cfg_.channels_at(l), cfg_.channels_at(l), E);
        }
        gn_out_g_ = P_.add("out.gn.gamma", {cfg_.channels_at(0)});
        gn_out_b_ = P_.add("out.gn.beta", {cfg_.channels_at(0)});
        conv_out_w_ = P_.add("out.conv.weight", {cfg_.in_channels, cfg_.channels_at(0), 3, 3});
        conv_out_b_ = P_.add("out.conv.bias", {cfg_.in_channels});
        init_weights(init_seed);
    }

    struct Tape {
        std::vector<double> femb, e1, se1, emb, semb;
        nn::BTensor xin;
        std::vector<ResBlock::Tape> enc_tapes, dec_tapes;
        std::vector<nn::BTensor> pool_in;  // inputs of each avgpool (for shape)
        std::vector<nn::BTensor> skips;
        nn::BTensor a_out;
        nn::GroupNormCache g_out;
        nn::BTensor s_out;
        int B = 0;
    };

    nn::BTensor forward(const nn::BTensor& x, const std::vector<double>& c_noise,
                        Tape& t) const {
        check(x.C == cfg_.in_channels && x.H == cfg_.image_size && x.W == cfg_.image_size,
              "unet: input is " + std::to_string(x.C) + "x" + std::to_string(x.H) + "x" +
                  std::to_string(x.W) + ", config expects " + std::to_string(cfg_.in_channels) +
                  "x" + std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.image_size));
        check(int(c_noise.size()) == x.B, "unet: c_noise count mismatch");
        const int E = cfg_.noise_embedding_dim, B = x.B, Lv = cfg_.levels();
        t.B = B;

        // sinusoidal features of the noise level, then a 2-layer MLP
        t.femb.assign(size_t(B) * E, 0.0);
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < E / 2; ++i) {
                // log-spaced band chosen so the slowest pair spans the c_noise
                // range once and the fastest still varies smoothly across
                // adjacent training noise levels
                const double f = std::pow(2.0, 0.5 * double(i));
                t.femb[size_t(b) * E + 2 * i] = std::cos(c_noise[size_t(b)] * f);
                t.femb[size_t(b) * E + 2 * i + 1] = std::sin(c_noise[size_t(b)] * f);
            }
        t.e1 = nn::linear_forward(P_, emb_lin1_w_, emb_lin1_b_, t.femb, B);
        t.se1 = nn::silu_vec(t.e1);
        t.emb = nn::linear_forward(P_, emb_lin2_w_, emb_lin2_b_, t.se1, B);
        t.semb = nn::silu_vec(t.emb);

        t.xin = x;
        nn::BTensor h = nn::conv3x3_forward(P_, conv_in_w_, conv_in_b_, x);
        t.enc_tapes.assign(size_t(Lv) * 2, {});
        t.pool_in.assign(size_t(Lv > 1 ? Lv - 1 : 0), {});
        t.skips.assign(size_t(Lv), {});
        for (int l = 0; l < Lv; ++l) {
            if (l > 0) {
                t.pool_in[size_t(l - 1)] = h;
                h = nn::avgpool2_forward(h);
            }
            h = enc_[size_t(l)][0].forward(P_, h, t.semb, t.enc_tapes[size_t(l) * 2]);
            h = enc_[size_t(l)][1].forward(P_, h, t.semb, t.enc_tapes[size_t(l) * 2 + 1]);
            t.skips[size_t(l)] = h;
        }
        t.dec_tapes.assign(size_t(Lv > 1 ? Lv - 1 : 0) * 2, {});
        for (int l = Lv - 2; l >= 0; --l) {
            h = nn::upsample2_forward(h);
            h = dec_[size_t(l)][0].forward(P_, h, t.semb, t.dec_tapes[size_t(l) * 2]);
            for (size_t i = 0; i < h.numel(); ++i) h.v[i] += t.skips[size_t(l)].v[i];
            h = dec_[size_t(l)][1].forward(P_, h, t.semb, t.dec_tapes[size_t(l) * 2 + 1]);
        }
        t.a_out = nn::groupnorm_forward(P_, gn_out_g_, gn_out_b_, h, t.g_out);
        t.s_out = nn::silu_forward(t.a_out);
        return nn::conv3x3_forward(P_, conv_out_w_, conv_out_b_, t.s_out);
    }

    // Accumulates parameter gradients; input gradient is not needed by training.
    void backward(const Tape& t, const nn::BTensor& gy) {
        const int Lv = cfg_.levels(), B = t.B, E = cfg_.noise_embedding_dim;
        std::vector<double> gsemb(size_t(B) * E, 0.0);

        nn::BTensor gs = nn::conv3x3_backward(P_, conv_out_w_, conv_out_b_, t.s_out, gy);
        nn::BTensor ga = nn::silu_backward(t.a_out, gs);
        nn::BTensor gh = nn::groupnorm_backward(P_, gn_out_g_, gn_out_b_, t.g_out, ga);

        std::vector<nn::BTensor> gskips(size_t(Lv), nn::BTensor{});
        for (int l = 0; l <= Lv - 2; ++l) {
            gh = dec_[size_t(l)][1].backward(P_, t.dec_tapes[size_t(l) * 2 + 1], gh, t.semb,
                                             gsemb);
            gskips[size_t(l)] = gh;  // additive skip branch
            gh = dec_[size_t(l)][0].backward(P_, t.dec_tapes[size_t(l) * 2], gh, t.semb, gsemb);
            gh = nn::upsample2_backward(gh);
        }
        // gh now feeds the top of the encoder (level Lv-1 output)
        for (int l = Lv - 1; l >= 0; --l) {
            if (l <= Lv - 2)
                for (size_t i = 0; i < gh.numel(); ++i) gh.v[i] += gskips[size_t(l)].v[i];
            gh = enc_[size_t(l)][1].backward(P_, t.enc_tapes[size_t(l) * 2 + 1], gh, t.semb,
                                             gsemb);
            gh = enc_[size_t(l)][0].backward(P_, t.enc_tapes[size_t(l) * 2], gh, t.semb, gsemb);
            if (l > 0) gh = nn::avgpool2_backward(gh, t.pool_in[size_t(l - 1)].H,
                                                  t.pool_in[size_t(l - 1)].W);
        }
        nn::conv3x3_backward(P_, conv_in_w_, conv_in_b_, t.xin, gh);

        std::vector<double> gemb = detail::silu_vec_backward(t.emb, gsemb);
        std::vector<double> gse1 = nn::linear_backward(P_, emb_lin2_w_, emb_lin2_b_, t.se1,
                                                       gemb, B);
        std::vector<double> ge1 = detail::silu_vec_backward(t.e1, gse1);
        nn::linear_backward(P_, emb_lin1_w_, emb_lin1_b_, t.femb, ge1, B);
    }

    const DenoiserConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return P_; }
    const nn::ParamStore& params() const { return P_; }

private:
    void init_weights(uint64_t seed) {
        Rng rng(seed);
        for (auto& p : P_.all()) {
            if (p.name.find("gamma") != std::string::npos) {
                std::fill(p.value.begin(), p.value.end(), 1.0);
            } else if (p.name.find("bias") != std::string::npos ||
                       p.name.find("beta") != std::string::npos) {
                // stays zero
            } else if (p.name == "out.conv.weight") {
                // zero-init final layer: raw output 0 => D(x;sigma) = c_skip*x at init
            } else {
                size_t fan_in = 1;
                for (size_t d = 1; d < p.shape.size(); ++d) fan_in *= size_t(p.shape[d]);
                const double std = 1.0 / std::sqrt(double(fan_in));
                for (double& v : p.value) v = std * rng.normal();
            }
        }
    }

    DenoiserConfig cfg_;
    nn::ParamStore P_;
    int emb_lin1_w_ = -1, emb_lin1_b_ = -1, emb_lin2_w_ = -1, emb_lin2_b_ = -1;
    int conv_in_w_ = -1, conv_in_b_ = -1;
    std::vector<std::array<ResBlock, 2>> enc_, dec_;
    int gn_out_g_ = -1, gn_out_b_ = -1, conv_out_w_ = -1, conv_out_b_ = -1;
};

// ScoreModel adapter: applies EDM preconditioning around the raw network.
class PreconditionedDenoiser : public ScoreModel {
public:
    PreconditionedDenoiser(const UNet& net, double sigma_data)
        : net_(net), sigma_data_(sigma_data) {}

    ImageTensor denoise(const ImageTensor& x, double sigma) const override {
        const auto pc = preconditioning_for(sigma, sigma_data_);
        nn::BTensor in(1, x.channels, x.height, x.width);
        for (size_t i = 0; i < x.numel(); ++i) in.v[i] = pc.c_in * x.values[i];
        UNet::Tape tape;
        nn::BTensor f = net_.forward(in, {pc.c_noise}, tape);
        ImageTensor out(x.channels, x.height, x.width);
        for (size_t i = 0; i < out.numel(); ++i)
            out.values[i] = pc.c_skip * x.values[i] + pc.c_out * f.v[i];
        return out;
    }

private:
    const UNet& net_;
    double sigma_data_;
};

// One pass over the batches: per item draw sigma (log-normal) and noise,
// take the preconditioned denoising loss, AdamW step per batch.
inline double train_epoch(UNet& net, nn::AdamW& opt, const std::vector<nn::BTensor>& batches,
                          const DiffusionConfig& dcfg, uint64_t seed) {
    check(!batches.empty(), "train_epoch: no batches");
    dcfg.validate();
    double loss_sum = 0.0;
    for (size_t ib = 0; ib < batches.size(); ++ib) {
        const nn::BTensor& x0 = batches[ib];
        const int B = x0.B;
        const size_t item = size_t(x0.C) * x0.H * x0.W;
        Rng rng(derive_seed(seed, ib));

        std::vector<double> sigma(size_t(B), 0.0), cnoise(size_t(B), 0.0);
        nn::BTensor noisy = x0, input(x0.B, x0.C, x0.H, x0.W);
        for (int b = 0; b < B; ++b) {
            sigma[size_t(b)] = sample_sigma_for_training(dcfg, rng);
            const auto pc = preconditioning_for(sigma[size_t(b)], dcfg.sigma_data);
            cnoise[size_t(b)] = pc.c_noise;
            double* np = &noisy.v[size_t(b) * item];
            double* ip = &input.v[size_t(b) * item];
            for (size_t i = 0; i < item; ++i) {
                np[i] += sigma[size_t(b)] * rng.normal();
                ip[i] = pc.c_in * np[i];
            }
        }

        UNet::Tape tape;
        nn::BTensor f = net.forward(input, cnoise, tape);

        double batch_loss = 0.0;
        nn::BTensor gf(x0.B, x0.C, x0.H, x0.W);
        for (int b = 0; b < B; ++b) {
            const auto pc = preconditioning_for(sigma[size_t(b)], dcfg.sigma_data);
            const double lam = loss_weight(sigma[size_t(b)], dcfg.sigma_data);
            const double* np = &noisy.v[size_t(b) * item];
            const double* xp = &x0.v[size_t(b) * item];
            const double* fp = &f.v[size_t(b) * item];
            double* gp = &gf.v[size_t(b) * item];
            double se = 0.0;
            const double gscale = lam * 2.0 * pc.c_out / (double(item) * B);
            for (size_t i = 0; i < item; ++i) {
                const double d = pc.c_skip * np[i] + pc.c_out * fp[i];
                const double e = d - xp[i];
                se += e * e;
                gp[i] = gscale * e;
            }
            batch_loss += lam * se / double(item);
        }
        batch_loss /= B;
        if (!std::isfinite(batch_loss))
            throw RuntimeFailure("train_epoch: non-finite loss at batch " + std::to_string(ib));
        loss_sum += batch_loss;

        net.params().zero_grad();
        net.backward(tape, gf);
        net.params().check_finite_grads();
        opt.step(net.params());
    }
    return loss_sum / double(batches.size());
}

// ------------------------------------------------------------------ checkpoints

// File: magic TSDM, u32 version, length-prefixed key=value config text,
// u32 record count, per-parameter records (name, dtype, shape, raw LE f64),
// trailing CRC32 of everything before it.

namespace detail {

inline void put_u32(std::string& buf, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    buf.append(b, 4);
}

inline uint32_t get_u32(const std::string& buf, size_t& pos) {
    if (pos + 4 > buf.size()) throw RuntimeFailure("checkpoint: truncated file");
    uint32_t v = uint32_t(uint8_t(buf[pos])) | uint32_t(uint8_t(buf[pos + 1])) << 8 |
                 uint32_t(uint8_t(buf[pos + 2])) << 16 | uint32_t(uint8_t(buf[pos + 3])) << 24;
    pos += 4;
    return v;
}

inline void append_record(std::string& buf, const std::string& name,
                          const std::vector<int>& shape, const std::vector<double>& data) {
    put_u32(buf, uint32_t(name.size()));
    buf += name;
    buf += char(0);  // dtype tag: f64 little-endian
    put_u32(buf, uint32_t(shape.size()));
    for (int d : shape) put_u32(buf, uint32_t(d));
    static_assert(sizeof(double) == 8);
    buf.append(reinterpret_cast<const char*>(data.data()), data.size() * 8);
}

struct Record {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

inline Record read_record(const std::string& buf, size_t& pos) {
    Record r;
    uint32_t nl = get_u32(buf, pos);
    if (pos + nl > buf.size()) throw RuntimeFailure("checkpoint: truncated file");
    r.name = buf.substr(pos, nl);
    pos += nl;
    if (pos >= buf.size()) throw RuntimeFailure("checkpoint: truncated file");
    if (buf[pos] != 0) throw RuntimeFailure("checkpoint: unknown dtype tag");
    ++pos;
    uint32_t nd = get_u32(buf, pos);
    size_t n = 1;
    r.shape.resize(nd);
    for (uint32_t i = 0; i < nd; ++i) {
        r.shape[i] = int(get_u32(buf, pos));
        n *= size_t(r.shape[i]);
    }
    if (pos + n * 8 > buf.size()) throw RuntimeFailure("checkpoint: truncated file");
    r.data.resize(n);
    std::memcpy(r.data.data(), buf.data() + pos, n * 8);
    pos += n * 8;
    return r;
}

}  // namespace detail

using ConfigMap = std::map<std::string, std::string>;

inline void save_checkpoint(const UNet& net, const nn::AdamW& opt, const ConfigMap& cfg,
                            const std::string& path) {
    std::string buf;
    buf += "TSDM";
    detail::put_u32(buf, 1);  // format version
    std::string cfg_text;
    ConfigMap full = cfg;
    full["opt.step"] = std::to_string(opt.step_count());
    for (const auto& [k, v] : full) cfg_text += k + "=" + v + "\n";
    detail::put_u32(buf, uint32_t(cfg_text.size()));
    buf += cfg_text;

    const auto& P = net.params();
    detail::put_u32(buf, uint32_t(P.count() * 3));
    for (size_t i = 0; i < P.count(); ++i) {
        const auto& p = P[int(i)];
        detail::append_record(buf, p.name, p.shape, p.value);
        detail::append_record(buf, "opt.m." + p.name, p.shape, opt.first_moments()[i]);
        detail::append_record(buf, "opt.v." + p.name, p.shape, opt.second_moments()[i]);
    }
    uint32_t crc = uint32_t(crc32(0, reinterpret_cast<const Bytef*>(buf.data()),
                                  uInt(buf.size())));
    detail::put_u32(buf, crc);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("checkpoint: cannot write " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw RuntimeFailure("checkpoint: write failed for " + path);
}

struct Checkpoint {
    ConfigMap config;
    std::vector<detail::Record> records;

    const detail::Record& find(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return r;
        throw RuntimeFailure("checkpoint: missing record " + name);
    }
};

inline Checkpoint load_checkpoint_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("checkpoint: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    if (buf.size() < 12 || buf.compare(0, 4, "TSDM") != 0)
        throw RuntimeFailure("checkpoint: not a TSDM file: " + path);
    uint32_t stored_crc;
    {
        size_t p = buf.size() - 4;
        stored_crc = detail::get_u32(buf, p);
    }
    uint32_t crc = uint32_t(crc32(0, reinterpret_cast<const Bytef*>(buf.data()),
                                  uInt(buf.size() - 4)));
    if (crc != stored_crc)
        throw RuntimeFailure("checkpoint: CRC mismatch, file is corrupt: " + path);

    size_t pos = 4;
    uint32_t version = detail::get_u32(buf, pos);
    if (version != 1)
        throw RuntimeFailure("checkpoint: unsupported format version " + std::to_string(version));
    uint32_t cfg_len = detail::get_u32(buf, pos);
    if (pos + cfg_len > buf.size()) throw RuntimeFailure("checkpoint: truncated file");
    std::string cfg_text = buf.substr(pos, cfg_len);
    pos += cfg_len;

    Checkpoint ck;
    std::istringstream cs(cfg_text);
    std::string line;
    while (std::getline(cs, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) ck.config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    uint32_t nrec = detail::get_u32(buf, pos);
    for (uint32_t i = 0; i < nrec; ++i) ck.records.push_back(detail::read_record(buf, pos));
    return ck;
}

// Rebuilds network + optimizer state; cfg/diffusion fields come from the config block.
inline void restore_from_checkpoint(const Checkpoint& ck, UNet& net, nn::AdamW& opt) {
    auto& P = net.params();
    opt.reset(P);
    for (size_t i = 0; i < P.count(); ++i) {
        auto& p = P[int(i)];
        const auto& r = ck.find(p.name);
        if (r.shape != p.shape)
            throw ShapeError("checkpoint: shape mismatch for parameter " + p.name);
        p.value = r.data;
        opt.first_moments()[i] = ck.find("opt.m." + p.name).data;
        opt.second_moments()[i] = ck.find("opt.v." + p.name).data;
    }
    auto it = ck.config.find("opt.step");
    if (it != ck.config.end()) opt.set_step_count(std::stol(it->second));
}

}  // namespace tsimg
