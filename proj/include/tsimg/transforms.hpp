#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <vector>

#include "tsimg/series.hpp"

namespace tsimg {

// C x H x W real image, the diffusion domain object. `aux` carries the
// transform bookkeeping needed for exact inversion (STFT scale, GAF ranges).
struct ImageTensor {
    int channels = 0, height = 0, width = 0;
    std::vector<double> values;
    std::vector<double> aux;

    ImageTensor() = default;
    ImageTensor(int C, int H, int W)
        : channels(C), height(H), width(W), values(size_t(C) * H * W, 0.0) {}

    double& at(int c, int h, int w) { return values[(size_t(c) * height + h) * width + w]; }
    double at(int c, int h, int w) const { return values[(size_t(c) * height + h) * width + w]; }
    size_t numel() const { return values.size(); }
};

struct ImageMask {
    int channels = 0, height = 0, width = 0;
    std::vector<uint8_t> observed;  // 1 = observed

    ImageMask() = default;
    ImageMask(int C, int H, int W, bool all_observed = true)
        : channels(C), height(H), width(W), observed(size_t(C) * H * W, all_observed ? 1 : 0) {}

    uint8_t& at(int c, int h, int w) { return observed[(size_t(c) * height + h) * width + w]; }
    uint8_t at(int c, int h, int w) const { return observed[(size_t(c) * height + h) * width + w]; }
};

enum class TransformKind { DelayEmbedding, Stft, Folding, Gaf };

inline const char* transform_kind_name(TransformKind k) {
    switch (k) {
        case TransformKind::DelayEmbedding: return "delay-embedding";
        case TransformKind::Stft: return "stft";
        case TransformKind::Folding: return "folding";
        case TransformKind::Gaf: return "gaf";
    }
    return "?";
}

inline TransformKind transform_kind_from_name(const std::string& s) {
    if (s == "delay-embedding") return TransformKind::DelayEmbedding;
    if (s == "stft") return TransformKind::Stft;
    if (s == "folding") return TransformKind::Folding;
    if (s == "gaf") return TransformKind::Gaf;
    throw ValidationError("unknown transform kind: " + s);
}

// Which ts2img map plus its parameters; together with (L, K) this fully
// determines both directions.
struct TransformSpec {
    TransformKind kind = TransformKind::DelayEmbedding;
    int L = 0, K = 0;
    int n = 8;          // delay embedding column dimension
    int m = 3;          // delay embedding skip
    int n_fft = 63;     // STFT window size (odd)
    int hop_length = 23;
    int target_h = 0;   // 0 = natural size
    int target_w = 0;
    int gaf_max_len = 1024;
};

namespace detail {

// Delay embedding column count: Eq-style q = ceil((L-n)/m) plus one extra
// column so every time index < L lands in at least one cell.
inline int de_columns(int L, int n, int m) {
    int q = (L - n + m - 1) / m;  // ceil((L-n)/m), L >= n
    if (q < 0) q = 0;
    return q + 1;
}

// Pre-interpolation length for STFT on short inputs: the smallest
// (L-1)*r + 1 >= n_fft with integer rate r, so original samples sit
// exactly on the upsampled grid and the inverse can read them back.
inline int stft_upsampled_length(int L, int n_fft) {
    if (L >= n_fft) return L;
    check(L >= 2, "stft: L must be >= 2 to pre-interpolate");
    int r = (n_fft - 1 + L - 2) / (L - 1);  // ceil((n_fft-1)/(L-1))
    return (L - 1) * r + 1;
}

inline int stft_frames(int Lp, int hop) { return 1 + Lp / hop; }

}  // namespace detail

// Output dims are a pure function of the spec; never runs the transform.
struct ImageShape {
    int C, H, W;
};

inline ImageShape output_shape(const TransformSpec& s) {
    check(s.L >= 1 && s.K >= 1, "TransformSpec: L and K must be positive");
    int C = 0, H = 0, W = 0;
    switch (s.kind) {
        case TransformKind::DelayEmbedding: {
            check(s.n >= 1 && s.m >= 1, "delay-embedding: n and m must be positive");
            check(s.n <= s.L && s.m <= s.L, "delay-embedding: require 1 <= m, n <= L (n=" +
                                                std::to_string(s.n) + ", m=" + std::to_string(s.m) +
                                                ", L=" + std::to_string(s.L) + ")");
            C = s.K;
            H = s.n;
            W = detail::de_columns(s.L, s.n, s.m);
            break;
        }
        case TransformKind::Stft: {
            check(s.n_fft >= 3 && s.n_fft % 2 == 1, "stft: n_fft must be a positive odd integer >= 3");
            check(s.hop_length >= 1 && s.hop_length <= s.n_fft,
                  "stft: require 1 <= hop_length <= n_fft");
            int Lp = detail::stft_upsampled_length(s.L, s.n_fft);
            C = 2 * s.K;
            H = s.n_fft / 2 + 1;
            W = detail::stft_frames(Lp, s.hop_length);
            break;
        }
        case TransformKind::Folding: {
            check(s.target_h >= 1 && s.target_w >= 1, "folding: target_size is required");
            check(size_t(s.target_h) * s.target_w >= size_t(s.L),
                  "folding: target_size " + std::to_string(s.target_h) + "x" +
                      std::to_string(s.target_w) + " too small for L=" + std::to_string(s.L));
            return {s.K, s.target_h, s.target_w};
        }
        case TransformKind::Gaf: {
            check(s.L <= s.gaf_max_len, "gaf: L=" + std::to_string(s.L) +
                                            " exceeds configured maximum " +
                                            std::to_string(s.gaf_max_len));
            C = s.K;
            H = W = s.L;
            break;
        }
    }
    if (s.target_h > 0 || s.target_w > 0) {
        check(s.target_h >= H && s.target_w >= W,
              std::string(transform_kind_name(s.kind)) + ": target_size " +
                  std::to_string(s.target_h) + "x" + std::to_string(s.target_w) +
                  " smaller than natural size " + std::to_string(H) + "x" + std::to_string(W));
        H = s.target_h;
        W = s.target_w;
    }
    return {C, H, W};
}

namespace detail {

inline void require_series_match(const TimeSeries& x, const TransformSpec& s) {
    if (x.length != s.L || x.features != s.K)
        throw ShapeError("transform: series is " + std::to_string(x.length) + "x" +
                         std::to_string(x.features) + " but spec expects " + std::to_string(s.L) +
                         "x" + std::to_string(s.K));
}

inline void require_image_match(const ImageTensor& img, const TransformSpec& s) {
    auto sh = output_shape(s);
    if (img.channels != sh.C || img.height != sh.H || img.width != sh.W)
        throw ShapeError("transform: image is " + std::to_string(img.channels) + "x" +
                         std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " but spec expects " + std::to_string(sh.C) + "x" + std::to_string(sh.H) +
                         "x" + std::to_string(sh.W));
}

}  // namespace detail

// ---------------------------------------------------------------- delay embedding

inline ImageTensor delay_embed(const TimeSeries& x, const TransformSpec& spec) {
    check(spec.kind == TransformKind::DelayEmbedding, "delay_embed: wrong spec kind");
    detail::require_series_match(x, spec);
    auto sh = output_shape(spec);
    ImageTensor img(sh.C, sh.H, sh.W);
    const int q = detail::de_columns(spec.L, spec.n, spec.m);
    for (int k = 0; k < spec.K; ++k)
        for (int j = 0; j < q; ++j)
            for (int r = 0; r < spec.n; ++r) {
                long t = long(j) * spec.m + r;
                if (t < spec.L) img.at(k, r, j) = x.at(int(t), k);
            }
    return img;
}

inline TimeSeries delay_embed_inverse(const ImageTensor& img, const TransformSpec& spec) {
    check(spec.kind == TransformKind::DelayEmbedding, "delay_embed_inverse: wrong spec kind");
    detail::require_image_match(img, spec);
    TimeSeries x(spec.L, spec.K);
    const int q = detail::de_columns(spec.L, spec.n, spec.m);
    for (int k = 0; k < spec.K; ++k)
        for (int t = 0; t < spec.L; ++t) {
            // columns j with 0 <= t - j*m < n
            int j_lo = std::max(0, (t - spec.n + spec.m) / spec.m);  // ceil((t-n+1)/m)
            if (long(j_lo) * spec.m < long(t) - spec.n + 1) ++j_lo;
            int j_hi = std::min(q - 1, t / spec.m);
            double sum = 0.0, first = 0.0;
            int cnt = 0;
            bool all_same = true;
            for (int j = j_lo; j <= j_hi; ++j) {
                int r = t - j * spec.m;
                if (r >= 0 && r < spec.n) {
                    double v = img.at(k, r, j);
                    if (cnt == 0)
                        first = v;
                    else if (v != first)
                        all_same = false;
                    sum += v;
                    ++cnt;
                }
            }
            check(cnt > 0, "delay_embed_inverse: time index " + std::to_string(t) + " uncovered");
            // identical overlaps reproduce the input bit for bit; otherwise average
            x.at(t, k) = all_same ? first : sum / cnt;
        }
    return x;
}

// ---------------------------------------------------------------- STFT

namespace detail {

inline std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
    return w;
}

// reflect padding index (no edge repetition)
inline int reflect_index(int i, int L) {
    while (i < 0 || i >= L) {
        if (i < 0) i = -i;
        if (i >= L) i = 2 * L - 2 - i;
    }
    return i;
}

inline std::vector<double> upsample_linear_integer_rate(const std::vector<double>& x, int Lp) {
    const int L = int(x.size());
    if (Lp == L) return x;
    const int r = (Lp - 1) / (L - 1);
    std::vector<double> y(Lp);
    for (int j = 0; j < Lp; ++j) {
        int t0 = j / r;
        int off = j % r;
        y[j] = (off == 0) ? x[t0] : x[t0] + (x[t0 + 1] - x[t0]) * (double(off) / r);
    }
    return y;
}

}  // namespace detail

inline ImageTensor stft_forward(const TimeSeries& x, const TransformSpec& spec) {
    check(spec.kind == TransformKind::Stft, "stft_forward: wrong spec kind");
    detail::require_series_match(x, spec);
    auto sh = output_shape(spec);
    const int n_fft = spec.n_fft, hop = spec.hop_length;
    const int Lp = detail::stft_upsampled_length(spec.L, n_fft);
    const int n_bins = n_fft / 2 + 1;
    const int n_frames = detail::stft_frames(Lp, hop);
    const int pad = n_fft / 2;
    const auto win = detail::hann_window(n_fft);

    ImageTensor img(sh.C, sh.H, sh.W);
    // precompute DFT twiddles
    std::vector<double> cos_t(size_t(n_bins) * n_fft), sin_t(size_t(n_bins) * n_fft);
    for (int b = 0; b < n_bins; ++b)
        for (int t = 0; t < n_fft; ++t) {
            double a = -2.0 * M_PI * b * t / n_fft;
            cos_t[size_t(b) * n_fft + t] = std::cos(a);
            sin_t[size_t(b) * n_fft + t] = std::sin(a);
        }

    for (int k = 0; k < spec.K; ++k) {
        std::vector<double> ch(spec.L);
        for (int t = 0; t < spec.L; ++t) ch[t] = x.at(t, k);
        ch = detail::upsample_linear_integer_rate(ch, Lp);
        std::vector<double> frame(n_fft);
        for (int f = 0; f < n_frames; ++f) {
            for (int t = 0; t < n_fft; ++t) {
                int idx = detail::reflect_index(f * hop - pad + t, Lp);
                frame[t] = win[t] * ch[idx];
            }
            for (int b = 0; b < n_bins; ++b) {
                double re = 0.0, im = 0.0;
                const double* ct = &cos_t[size_t(b) * n_fft];
                const double* st = &sin_t[size_t(b) * n_fft];
                for (int t = 0; t < n_fft; ++t) {
                    re += frame[t] * ct[t];
                    im += frame[t] * st[t];
                }
                img.at(2 * k, b, f) = re;
                img.at(2 * k + 1, b, f) = im;
            }
        }
    }
    // symmetric max-abs normalization to [-1, 1]; scale stored for the inverse
    double scale = 0.0;
    for (double v : img.values) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
    for (double& v : img.values) v /= scale;
    img.aux = {scale};
    return img;
}

inline TimeSeries stft_inverse(const ImageTensor& img, const TransformSpec& spec) {
    check(spec.kind == TransformKind::Stft, "stft_inverse: wrong spec kind");
    detail::require_image_match(img, spec);
    check(!img.aux.empty(), "stft_inverse: stored normalization scale is missing");
    const int n_fft = spec.n_fft, hop = spec.hop_length;
    const int Lp = detail::stft_upsampled_length(spec.L, n_fft);
    const int n_bins = n_fft / 2 + 1;
    const int n_frames = detail::stft_frames(Lp, hop);
    const int pad = n_fft / 2;
    const auto win = detail::hann_window(n_fft);
    const double scale = img.aux[0];

    // overlap-add denominator (window-square normalization over padded support)
    const int padded = Lp + 2 * pad;
    std::vector<double> denom(padded, 0.0);
    for (int f = 0; f < n_frames; ++f)
        for (int t = 0; t < n_fft; ++t) denom[f * hop + t] += win[t] * win[t];
    for (int i = pad; i < pad + Lp; ++i)
        if (denom[i] < 1e-8)
            throw ValidationError("stft_inverse: non-invertible window configuration "
                                  "(overlap-add coverage below 1e-8; hop_length too large)");

    std::vector<double> cos_t(size_t(n_fft) * n_bins), sin_t(size_t(n_fft) * n_bins);
    for (int t = 0; t < n_fft; ++t)
        for (int b = 0; b < n_bins; ++b) {
            double a = 2.0 * M_PI * b * t / n_fft;
            cos_t[size_t(t) * n_bins + b] = std::cos(a);
            sin_t[size_t(t) * n_bins + b] = std::sin(a);
        }

    TimeSeries out(spec.L, spec.K);
    std::vector<double> acc(padded), frame(n_fft);
    for (int k = 0; k < spec.K; ++k) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int f = 0; f < n_frames; ++f) {
            // inverse real DFT with Hermitian symmetry: bins 1..n_bins-1 count twice
            for (int t = 0; t < n_fft; ++t) {
                double s = 0.0;
                const double* ct = &cos_t[size_t(t) * n_bins];
                const double* st = &sin_t[size_t(t) * n_bins];
                for (int b = 0; b < n_bins; ++b) {
                    double re = img.at(2 * k, b, f) * scale;
                    double im = img.at(2 * k + 1, b, f) * scale;
                    double term = re * ct[b] - im * st[b];
                    s += (b == 0) ? term : 2.0 * term;
                }
                frame[t] = s / n_fft;
            }
            for (int t = 0; t < n_fft; ++t) acc[f * hop + t] += win[t] * frame[t];
        }
        std::vector<double> rec(Lp);
        for (int i = 0; i < Lp; ++i) rec[i] = acc[pad + i] / denom[pad + i];
        if (Lp == spec.L) {
            for (int t = 0; t < spec.L; ++t) out.at(t, k) = rec[t];
        } else {
            const int r = (Lp - 1) / (spec.L - 1);
            for (int t = 0; t < spec.L; ++t) out.at(t, k) = rec[size_t(t) * r];
        }
    }
    return out;
}

// ---------------------------------------------------------------- folding

inline ImageTensor fold(const TimeSeries& x, const TransformSpec& spec) {
    check(spec.kind == TransformKind::Folding, "fold: wrong spec kind");
    detail::require_series_match(x, spec);
    auto sh = output_shape(spec);
    ImageTensor img(sh.C, sh.H, sh.W);
    for (int k = 0; k < spec.K; ++k)
        for (int t = 0; t < spec.L; ++t) img.at(k, t / sh.W, t % sh.W) = x.at(t, k);
    return img;
}

inline TimeSeries unfold(const ImageTensor& img, const TransformSpec& spec) {
    check(spec.kind == TransformKind::Folding, "unfold: wrong spec kind");
    detail::require_image_match(img, spec);
    TimeSeries x(spec.L, spec.K);
    for (int k = 0; k < spec.K; ++k)
        for (int t = 0; t < spec.L; ++t) x.at(t, k) = img.at(k, t / img.width, t % img.width);
    return x;
}

// ---------------------------------------------------------------- Gramian angular field

// Rescales each channel to [0,1] before arccos so the diagonal inverse has an
// unambiguous (nonnegative) root. aux stores per-channel (min, max).
inline ImageTensor gaf_forward(const TimeSeries& x, const TransformSpec& spec) {
    check(spec.kind == TransformKind::Gaf, "gaf_forward: wrong spec kind");
    detail::require_series_match(x, spec);
    auto sh = output_shape(spec);
    ImageTensor img(sh.C, sh.H, sh.W);
    img.aux.resize(2 * size_t(spec.K));
    std::vector<double> phi(spec.L);
    for (int k = 0; k < spec.K; ++k) {
        double lo = x.at(0, k), hi = x.at(0, k);
        for (int t = 1; t < spec.L; ++t) {
            lo = std::min(lo, x.at(t, k));
            hi = std::max(hi, x.at(t, k));
        }
        img.aux[2 * k] = lo;
        img.aux[2 * k + 1] = hi;
        double range = hi - lo;
        for (int t = 0; t < spec.L; ++t) {
            double u = (range > 0.0) ? (x.at(t, k) - lo) / range : 1.0;
            phi[t] = std::acos(std::clamp(u, 0.0, 1.0));
        }
        for (int i = 0; i < spec.L; ++i)
            for (int j = 0; j < spec.L; ++j) img.at(k, i, j) = std::cos(phi[i] + phi[j]);
    }
    return img;
}

inline TimeSeries gaf_inverse(const ImageTensor& img, const TransformSpec& spec) {
    check(spec.kind == TransformKind::Gaf, "gaf_inverse: wrong spec kind");
    detail::require_image_match(img, spec);
    check(img.aux.size() == 2 * size_t(spec.K), "gaf_inverse: stored channel ranges missing");
    TimeSeries x(spec.L, spec.K);
    for (int k = 0; k < spec.K; ++k) {
        double lo = img.aux[2 * k], hi = img.aux[2 * k + 1];
        for (int t = 0; t < spec.L; ++t) {
            // G[t][t] = cos(2*phi_t) = 2*cos^2(phi_t) - 1
            double u = std::sqrt(std::clamp((1.0 + img.at(k, t, t)) / 2.0, 0.0, 1.0));
            x.at(t, k) = (hi > lo) ? u * (hi - lo) + lo : lo;
        }
    }
    return x;
}

// ---------------------------------------------------------------- mask projection

// Per-(timestep, feature) observedness for conditional tasks.
struct TimeMask {
    int length = 0, features = 0;
    std::vector<uint8_t> observed;  // 1 = value known

    TimeMask() = default;
    TimeMask(int L, int K, bool all_observed = true)
        : length(L), features(K), observed(size_t(L) * K, all_observed ? 1 : 0) {}

    uint8_t& at(int t, int k) { return observed[size_t(t) * features + k]; }
    uint8_t at(int t, int k) const { return observed[size_t(t) * features + k]; }
};

// Pixel is observed iff its mapped time index is observed; padded pixels
// carry no information and count as observed.
inline ImageMask project_time_mask(const TimeMask& mask, const TransformSpec& spec) {
    if (spec.kind != TransformKind::DelayEmbedding && spec.kind != TransformKind::Folding)
        throw ValidationError(std::string("project_time_mask: unsupported transform kind '") +
                              transform_kind_name(spec.kind) +
                              "' (pixel-timestep correspondence requires delay-embedding or folding)");
    if (mask.length != spec.L || mask.features != spec.K)
        throw ShapeError("project_time_mask: mask shape mismatch");
    auto sh = output_shape(spec);
    ImageMask im(sh.C, sh.H, sh.W, true);
    if (spec.kind == TransformKind::DelayEmbedding) {
        const int q = detail::de_columns(spec.L, spec.n, spec.m);
        for (int k = 0; k < spec.K; ++k)
            for (int j = 0; j < q; ++j)
                for (int r = 0; r < spec.n; ++r) {
                    long t = long(j) * spec.m + r;
                    if (t < spec.L && !mask.at(int(t), k)) im.at(k, r, j) = 0;
                }
    } else {
        for (int k = 0; k < spec.K; ++k)
            for (int t = 0; t < spec.L; ++t)
                if (!mask.at(t, k)) im.at(k, t / sh.W, t % sh.W) = 0;
    }
    return im;
}

// ---------------------------------------------------------------- dispatch + debug IO

inline ImageTensor ts2img(const TimeSeries& x, const TransformSpec& spec) {
    switch (spec.kind) {
        case TransformKind::DelayEmbedding: return delay_embed(x, spec);
        case TransformKind::Stft: return stft_forward(x, spec);
        case TransformKind::Folding: return fold(x, spec);
        case TransformKind::Gaf: return gaf_forward(x, spec);
    }
    throw ValidationError("ts2img: bad kind");
}

inline TimeSeries img2ts(const ImageTensor& img, const TransformSpec& spec) {
    switch (spec.kind) {
        case TransformKind::DelayEmbedding: return delay_embed_inverse(img, spec);
        case TransformKind::Stft: return stft_inverse(img, spec);
        case TransformKind::Folding: return unfold(img, spec);
        case TransformKind::Gaf: return gaf_inverse(img, spec);
    }
    throw ValidationError("img2ts: bad kind");
}

// Debug image file: magic TSIM, u32 C/H/W little-endian, f32 row-major.
inline void write_image_debug(const ImageTensor& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out.write("TSIM", 4);
    uint32_t dims[3] = {uint32_t(img.channels), uint32_t(img.height), uint32_t(img.width)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> f(img.values.begin(), img.values.end());
    out.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.size() * sizeof(float)));
    if (!out) throw RuntimeFailure("write failed for " + path);
}

inline ImageTensor read_image_debug(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    char magic[4];
    uint32_t dims[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || std::memcmp(magic, "TSIM", 4) != 0)
        throw ParseError("not a TSIM image file: " + path);
    ImageTensor img{int(dims[0]), int(dims[1]), int(dims[2])};
    std::vector<float> f(img.numel());
    in.read(reinterpret_cast<char*>(f.data()), std::streamsize(f.size() * sizeof(float)));
    if (!in) throw ParseError("truncated TSIM image file: " + path);
    std::copy(f.begin(), f.end(), img.values.begin());
    return img;
}

}  // namespace tsimg
