#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "tsimg/core.hpp"

namespace tsimg::nn {

// Batched activation tensor, B x C x H x W row-major.
struct BTensor {
    int B = 0, C = 0, H = 0, W = 0;
    std::vector<double> v;

    BTensor() = default;
    BTensor(int b, int c, int h, int w) : B(b), C(c), H(h), W(w), v(size_t(b) * c * h * w, 0.0) {}

    double* plane(int b, int c) { return v.data() + (size_t(b) * C + c) * H * W; }
    const double* plane(int b, int c) const { return v.data() + (size_t(b) * C + c) * H * W; }
    size_t numel() const { return v.size(); }
    bool same_shape(const BTensor& o) const {
        return B == o.B && C == o.C && H == o.H && W == o.W;
    }
};

struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;

    size_t numel() const { return value.size(); }
};

class ParamStore {
public:
    int add(std::string name, std::vector<int> shape) {
        size_t n = 1;
        for (int d : shape) n *= size_t(d);
        Param p;
        p.name = std::move(name);
        p.shape = std::move(shape);
        p.value.assign(n, 0.0);
        p.grad.assign(n, 0.0);
        params_.push_back(std::move(p));
        return int(params_.size()) - 1;
    }

    Param& operator[](int id) { return params_[size_t(id)]; }
    const Param& operator[](int id) const { return params_[size_t(id)]; }
    size_t count() const { return params_.size(); }

    size_t total_parameters() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_)
            std::fill(p.grad.begin(), p.grad.end(), 0.0);
    }

    void check_finite_grads() const {
        for (const auto& p : params_)
            if (!all_finite(p.grad))
                throw RuntimeFailure("non-finite gradient in parameter " + p.name);
    }

    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }

private:
    std::vector<Param> params_;
};

// ------------------------------------------------------------------ conv 3x3, pad 1

inline BTensor conv3x3_forward(const ParamStore& P, int wid, int bid, const BTensor& x) {
    const Param& wp = P[wid];
    const int cout = wp.shape[0], cin = wp.shape[1];
    check(cin == x.C, "conv3x3: channel mismatch");
    BTensor y(x.B, cout, x.H, x.W);
    const int H = x.H, W = x.W;
    for (int b = 0; b < x.B; ++b)
        for (int co = 0; co < cout; ++co) {
            double* out = y.plane(b, co);
            const double bias = P[bid].value[size_t(co)];
            for (int i = 0; i < H * W; ++i) out[i] = bias;
            for (int ci = 0; ci < cin; ++ci) {
                const double* in = x.plane(b, ci);
                const double* w9 = &wp.value[(size_t(co) * cin + ci) * 9];
                for (int kh = 0; kh < 3; ++kh)
                    for (int kw = 0; kw < 3; ++kw) {
                        const double wv = w9[kh * 3 + kw];
                        if (wv == 0.0) continue;
                        const int dh = kh - 1, dw = kw - 1;
                        const int h0 = std::max(0, -dh), h1 = std::min(H, H - dh);
                        const int w0 = std::max(0, -dw), w1 = std::min(W, W - dw);
                        for (int h = h0; h < h1; ++h) {
                            double* orow = out + size_t(h) * W;
                            const double* irow = in + size_t(h + dh) * W + dw;
                            for (int w = w0; w < w1; ++w) orow[w] += wv * irow[w];
                        }
                    }
            }
        }
    return y;
}

inline BTensor conv3x3_backward(ParamStore& P, int wid, int bid, const BTensor& x,
                                const BTensor& gy) {
    Param& wp = P[wid];
    const int cout = wp.shape[0], cin = wp.shape[1];
    const int H = x.H, W = x.W;
    BTensor gx(x.B, x.C, H, W);
    for (int b = 0; b < x.B; ++b)
        for (int co = 0; co < cout; ++co) {
            const double* go = gy.plane(b, co);
            double bsum = 0.0;
            for (int i = 0; i < H * W; ++i) bsum += go[i];
            P[bid].grad[size_t(co)] += bsum;
            for (int ci = 0; ci < cin; ++ci) {
                const double* in = x.plane(b, ci);
                double* gi = gx.plane(b, ci);
                double* gw9 = &wp.grad[(size_t(co) * cin + ci) * 9];
                const double* w9 = &wp.value[(size_t(co) * cin + ci) * 9];
                for (int kh = 0; kh < 3; ++kh)
                    for (int kw = 0; kw < 3; ++kw) {
                        const int dh = kh - 1, dw = kw - 1;
                        const int h0 = std::max(0, -dh), h1 = std::min(H, H - dh);
                        const int w0 = std::max(0, -dw), w1 = std::min(W, W - dw);
                        const double wv = w9[kh * 3 + kw];
                        double acc = 0.0;
                        for (int h = h0; h < h1; ++h) {
                            const double* grow = go + size_t(h) * W;
                            const double* irow = in + size_t(h + dh) * W + dw;
                            double* girow = gi + size_t(h + dh) * W + dw;
                            for (int w = w0; w < w1; ++w) {
                                acc += grow[w] * irow[w];
                                girow[w] += wv * grow[w];
                            }
                        }
                        gw9[kh * 3 + kw] += acc;
                    }
            }
        }
    return gx;
}

// ------------------------------------------------------------------ conv 1x1

inline BTensor conv1x1_forward(const ParamStore& P, int wid, int bid, const BTensor& x) {
    const Param& wp = P[wid];
    const int cout = wp.shape[0], cin = wp.shape[1];
    check(cin == x.C, "conv1x1: channel mismatch");
    BTensor y(x.B, cout, x.H, x.W);
    const int hw = x.H * x.W;
    for (int b = 0; b < x.B; ++b)
        for (int co = 0; co < cout; ++co) {
            double* out = y.plane(b, co);
            const double bias = P[bid].value[size_t(co)];
            for (int i = 0; i < hw; ++i) out[i] = bias;
            for (int ci = 0; ci < cin; ++ci) {
                const double wv = wp.value[size_t(co) * cin + ci];
                const double* in = x.plane(b, ci);
                for (int i = 0; i < hw; ++i) out[i] += wv * in[i];
            }
        }
    return y;
}

inline BTensor conv1x1_backward(ParamStore& P, int wid, int bid, const BTensor& x,
                                const BTensor& gy) {
    Param& wp = P[wid];
    const int cout = wp.shape[0], cin = wp.shape[1];
    const int hw = x.H * x.W;
    BTensor gx(x.B, x.C, x.H, x.W);
    for (int b = 0; b < x.B; ++b)
        for (int co = 0; co < cout; ++co) {
            const double* go = gy.plane(b, co);
            double bsum = 0.0;
            for (int i = 0; i < hw; ++i) bsum += go[i];
            P[bid].grad[size_t(co)] += bsum;
            for (int ci = 0; ci < cin; ++ci) {
                const double* in = x.plane(b, ci);
                double* gi = gx.plane(b, ci);
                const double wv = wp.value[size_t(co) * cin + ci];
                double acc = 0.0;
                for (int i = 0; i < hw; ++i) {
                    acc += go[i] * in[i];
                    gi[i] += wv * go[i];
                }
                wp.grad[size_t(co) * cin + ci] += acc;
            }
        }
    return gx;
}

// ------------------------------------------------------------------ group norm

struct GroupNormCache {
    BTensor xhat;
    std::vector<double> invstd;  // per (b, group)
};

inline int groupnorm_groups(int channels) {
    int g = std::min(32, channels);
    while (channels % g != 0) --g;
    return g;
}

inline BTensor groupnorm_forward(const ParamStore& P, int gid, int bid, const BTensor& x,
                                 GroupNormCache& cache) {
    const int C = x.C, G = groupnorm_groups(C), cg = C / G, hw = x.H * x.W;
    const size_t gsize = size_t(cg) * hw;
    const double eps = 1e-5;
    BTensor y(x.B, C, x.H, x.W);
    cache.xhat = BTensor(x.B, C, x.H, x.W);
    cache.invstd.assign(size_t(x.B) * G, 0.0);
    for (int b = 0; b < x.B; ++b)
        for (int g = 0; g < G; ++g) {
            const double* in = x.plane(b, g * cg);
            double mean = 0.0;
            for (size_t i = 0; i < gsize; ++i) mean += in[i];
            mean /= double(gsize);
            double var = 0.0;
            for (size_t i = 0; i < gsize; ++i) {
                double d = in[i] - mean;
                var += d * d;
            }
            var /= double(gsize);
            const double inv = 1.0 / std::sqrt(var + eps);
            cache.invstd[size_t(b) * G + g] = inv;
            double* xh = cache.xhat.plane(b, g * cg);
            double* out = y.plane(b, g * cg);
            for (int c = 0; c < cg; ++c) {
                const double gamma = P[gid].value[size_t(g) * cg + c];
                const double beta = P[bid].value[size_t(g) * cg + c];
                for (int i = 0; i < hw; ++i) {
                    double h = (in[size_t(c) * hw + i] - mean) * inv;
                    xh[size_t(c) * hw + i] = h;
                    out[size_t(c) * hw + i] = gamma * h + beta;
                }
            }
        }
    return y;
}

inline BTensor groupnorm_backward(ParamStore& P, int gid, int bid, const GroupNormCache& cache,
                                  const BTensor& gy) {
    const int C = gy.C, G = groupnorm_groups(C), cg = C / G, hw = gy.H * gy.W;
    const size_t gsize = size_t(cg) * hw;
    BTensor gx(gy.B, C, gy.H, gy.W);
    for (int b = 0; b < gy.B; ++b)
        for (int g = 0; g < G; ++g) {
            const double* xh = cache.xhat.plane(b, g * cg);
            const double* go = gy.plane(b, g * cg);
            const double inv = cache.invstd[size_t(b) * G + g];
            // param grads + the two reduction terms
            double sum_gh = 0.0, sum_gh_xh = 0.0;
            for (int c = 0; c < cg; ++c) {
                const double gamma = P[gid].value[size_t(g) * cg + c];
                double dgam = 0.0, dbet = 0.0;
                for (int i = 0; i < hw; ++i) {
                    const double gov = go[size_t(c) * hw + i];
                    const double xhv = xh[size_t(c) * hw + i];
                    dgam += gov * xhv;
                    dbet += gov;
                    sum_gh += gamma * gov;
                    sum_gh_xh += gamma * gov * xhv;
                }
                P[gid].grad[size_t(g) * cg + c] += dgam;
                P[bid].grad[size_t(g) * cg + c] += dbet;
            }
            const double mean_gh = sum_gh / double(gsize);
            const double mean_gh_xh = sum_gh_xh / double(gsize);
            double* gi = gx.plane(b, g * cg);
            for (int c = 0; c < cg; ++c) {
                const double gamma = P[gid].value[size_t(g) * cg + c];
                for (int i = 0; i < hw; ++i) {
                    const double gh = gamma * go[size_t(c) * hw + i];
                    gi[size_t(c) * hw + i] =
                        inv * (gh - mean_gh - xh[size_t(c) * hw + i] * mean_gh_xh);
                }
            }
        }
    return gx;
}

// ------------------------------------------------------------------ SiLU

inline BTensor silu_forward(const BTensor& x) {
    BTensor y = x;
    for (double& v : y.v) v = v / (1.0 + std::exp(-v));
    return y;
}

inline BTensor silu_backward(const BTensor& x, const BTensor& gy) {
    BTensor gx(x.B, x.C, x.H, x.W);
    for (size_t i = 0; i < x.numel(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x.v[i]));
        gx.v[i] = gy.v[i] * s * (1.0 + x.v[i] * (1.0 - s));
    }
    return gx;
}

inline std::vector<double> silu_vec(const std::vector<double>& x) {
    std::vector<double> y = x;
    for (double& v : y) v = v / (1.0 + std::exp(-v));
    return y;
}

// ------------------------------------------------------------------ linear (vector batch)

// x: B x din flattened; weight [dout, din]
inline std::vector<double> linear_forward(const ParamStore& P, int wid, int bid,
                                          const std::vector<double>& x, int B) {
    const Param& wp = P[wid];
    const int dout = wp.shape[0], din = wp.shape[1];
    std::vector<double> y(size_t(B) * dout);
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < dout; ++o) {
            double s = P[bid].value[size_t(o)];
            const double* wrow = &wp.value[size_t(o) * din];
            const double* xi = &x[size_t(b) * din];
            for (int i = 0; i < din; ++i) s += wrow[i] * xi[i];
            y[size_t(b) * dout + o] = s;
        }
    return y;
}

inline std::vector<double> linear_backward(ParamStore& P, int wid, int bid,
                                           const std::vector<double>& x,
                                           const std::vector<double>& gy, int B) {
    Param& wp = P[wid];
    const int dout = wp.shape[0], din = wp.shape[1];
    std::vector<double> gx(size_t(B) * din, 0.0);
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < dout; ++o) {
            const double g = gy[size_t(b) * dout + o];
            P[bid].grad[size_t(o)] += g;
            double* gwrow = &wp.grad[size_t(o) * din];
            const double* wrow = &wp.value[size_t(o) * din];
            const double* xi = &x[size_t(b) * din];
            double* gxi = &gx[size_t(b) * din];
            for (int i = 0; i < din; ++i) {
                gwrow[i] += g * xi[i];
                gxi[i] += g * wrow[i];
            }
        }
    return gx;
}

// ------------------------------------------------------------------ resampling

inline BTensor avgpool2_forward(const BTensor& x) {
    check(x.H % 2 == 0 && x.W % 2 == 0, "avgpool2: odd spatial dims");
    BTensor y(x.B, x.C, x.H / 2, x.W / 2);
    for (int b = 0; b < x.B; ++b)
        for (int c = 0; c < x.C; ++c) {
            const double* in = x.plane(b, c);
            double* out = y.plane(b, c);
            for (int h = 0; h < y.H; ++h)
                for (int w = 0; w < y.W; ++w) {
                    const double* p = in + size_t(2 * h) * x.W + 2 * w;
                    out[size_t(h) * y.W + w] = 0.25 * (p[0] + p[1] + p[x.W] + p[x.W + 1]);
                }
        }
    return y;
}

inline BTensor avgpool2_backward(const BTensor& gy, int H, int W) {
    BTensor gx(gy.B, gy.C, H, W);
    for (int b = 0; b < gy.B; ++b)
        for (int c = 0; c < gy.C; ++c) {
            const double* go = gy.plane(b, c);
            double* gi = gx.plane(b, c);
            for (int h = 0; h < gy.H; ++h)
                for (int w = 0; w < gy.W; ++w) {
                    const double g = 0.25 * go[size_t(h) * gy.W + w];
                    double* p = gi + size_t(2 * h) * W + 2 * w;
                    p[0] += g;
                    p[1] += g;
                    p[W] += g;
                    p[W + 1] += g;
                }
        }
    return gx;
}

inline BTensor upsample2_forward(const BTensor& x) {
    BTensor y(x.B, x.C, x.H * 2, x.W * 2);
    for (int b = 0; b < x.B; ++b)
        for (int c = 0; c < x.C; ++c) {
            const double* in = x.plane(b, c);
            double* out = y.plane(b, c);
            for (int h = 0; h < x.H; ++h)
                for (int w = 0; w < x.W; ++w) {
                    const double v = in[size_t(h) * x.W + w];
                    double* p = out + size_t(2 * h) * y.W + 2 * w;
                    p[0] = v;
                    p[1] = v;
                    p[y.W] = v;
                    p[y.W + 1] = v;
                }
        }
    return y;
}

inline BTensor upsample2_backward(const BTensor& gy) {
    BTensor gx(gy.B, gy.C, gy.H / 2, gy.W / 2);
    for (int b = 0; b < gy.B; ++b)
        for (int c = 0; c < gy.C; ++c) {
            const double* go = gy.plane(b, c);
            double* gi = gx.plane(b, c);
            for (int h = 0; h < gx.H; ++h)
                for (int w = 0; w < gx.W; ++w) {
                    const double* p = go + size_t(2 * h) * gy.W + 2 * w;
                    gi[size_t(h) * gx.W + w] = p[0] + p[1] + p[gy.W] + p[gy.W + 1];
                }
        }
    return gx;
}

// ------------------------------------------------------------------ AdamW

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay; moment buffers mirror the parameter store.
class AdamW {
public:
    AdamW() = default;
    AdamW(const ParamStore& P, AdamWConfig cfg) : cfg_(cfg) { reset(P); }

    void reset(const ParamStore& P) {
        m_.clear();
        v_.clear();
        for (const auto& p : P.all()) {
            m_.emplace_back(p.numel(), 0.0);
            v_.emplace_back(p.numel(), 0.0);
        }
        step_ = 0;
    }

    void step(ParamStore& P) {
        check(m_.size() == P.count(), "AdamW: state does not mirror parameter store");
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
        for (size_t i = 0; i < P.count(); ++i) {
            Param& p = P[int(i)];
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < p.numel(); ++j) {
                const double g = p.grad[j];
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
                const double mh = m[j] / bc1;
                const double vh = v[j] / bc2;
                p.value[j] -= cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) +
                                         cfg_.weight_decay * p.value[j]);
            }
        }
    }

    const AdamWConfig& config() const { return cfg_; }
    AdamWConfig& config() { return cfg_; }
    long step_count() const { return step_; }
    void set_step_count(long s) { step_ = s; }
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }

private:
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    long step_ = 0;
};

}  // namespace tsimg::nn
