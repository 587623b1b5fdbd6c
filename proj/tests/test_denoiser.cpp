#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "tsimg/denoiser.hpp"

using namespace tsimg;

namespace {

DenoiserConfig tiny_cfg() {
    DenoiserConfig cfg;
    cfg.base_channels = 4;
    cfg.channel_multipliers = {1, 2};
    cfg.in_channels = 1;
    cfg.image_size = 4;
    cfg.noise_embedding_dim = 8;
    return cfg;
}

nn::BTensor random_input(int B, int C, int H, int W, uint64_t seed) {
    nn::BTensor x(B, C, H, W);
    Rng rng(seed);
    rng.fill_normal(x.v);
    return x;
}

// scalar loss sum_i w_i * f_i with fixed random weights; returns (loss, gy)
double weighted_loss(const nn::BTensor& f, const std::vector<double>& w) {
    double l = 0.0;
    for (size_t i = 0; i < f.numel(); ++i) l += w[i] * f.v[i];
    return l;
}

}  // namespace

TEST_CASE("network output has the same shape as its input") {
    UNet net(tiny_cfg(), 1);
    auto x = random_input(2, 1, 4, 4, 2);
    UNet::Tape t;
    auto f = net.forward(x, {0.1, -0.3}, t);
    CHECK(f.B == 2);
    CHECK(f.C == 1);
    CHECK(f.H == 4);
    CHECK(f.W == 4);
}

TEST_CASE("zero-initialized output layer makes the denoiser return c_skip * x") {
    UNet net(tiny_cfg(), 3);
    const double sd = 0.5;
    PreconditionedDenoiser model(net, sd);
    ImageTensor x(1, 4, 4);
    Rng rng(4);
    rng.fill_normal(x.values);
    const double sigma = 0.8;
    auto d = model.denoise(x, sigma);
    const auto pc = preconditioning_for(sigma, sd);
    for (size_t i = 0; i < x.numel(); ++i)
        CHECK(d.values[i] == doctest::Approx(pc.c_skip * x.values[i]).epsilon(1e-12));
}

TEST_CASE("parameter count of the reference config is frozen") {
    DenoiserConfig cfg;
    cfg.base_channels = 8;
    cfg.channel_multipliers = {1, 2};
    cfg.in_channels = 1;
    cfg.image_size = 8;
    cfg.noise_embedding_dim = 32;
    UNet net(cfg, 0);
    CHECK(net.params().total_parameters() == 18305u);
}

TEST_CASE("analytic gradients match central finite differences") {
    UNet net(tiny_cfg(), 11);
    auto& P = net.params();
    Rng prng(21);
    for (auto& p : P.all())
        for (auto& v : p.value) v += prng.uniform(-0.1, 0.1);  // break zero-init/symmetry

    auto x = random_input(2, 1, 4, 4, 22);
    std::vector<double> cn = {0.2, -0.5};
    UNet::Tape t0;
    auto f0 = net.forward(x, cn, t0);
    std::vector<double> w(f0.numel());
    Rng wrng(23);
    for (auto& v : w) v = wrng.uniform(-1.0, 1.0);

    nn::BTensor gy(f0.B, f0.C, f0.H, f0.W);
    std::copy(w.begin(), w.end(), gy.v.begin());
    P.zero_grad();
    net.backward(t0, gy);

    // h = 1e-3 picks up GroupNorm third-derivative truncation error (~2e-3);
    // 1e-4 stays well above double-precision roundoff for this loss scale
    const double h = 1e-4;
    double worst = 0.0;
    for (auto& p : P.all())
        for (size_t j = 0; j < p.numel(); ++j) {
            const double keep = p.value[j];
            p.value[j] = keep + h;
            UNet::Tape tp;
            double lp = weighted_loss(net.forward(x, cn, tp), w);
            p.value[j] = keep - h;
            UNet::Tape tm;
            double lm = weighted_loss(net.forward(x, cn, tm), w);
            p.value[j] = keep;
            const double fd = (lp - lm) / (2.0 * h);
            const double g = p.grad[j];
            const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-4});
            worst = std::max(worst, rel);
        }
    CHECK(worst < 1e-3);
}

TEST_CASE("zero output gradient yields exactly zero parameter gradients") {
    UNet net(tiny_cfg(), 31);
    auto x = random_input(1, 1, 4, 4, 32);
    UNet::Tape t;
    auto f = net.forward(x, {0.4}, t);
    net.params().zero_grad();
    nn::BTensor gy(f.B, f.C, f.H, f.W);  // all zeros
    net.backward(t, gy);
    for (const auto& p : net.params().all())
        for (double g : p.grad) CHECK(g == 0.0);
}

TEST_CASE("doubling the loss doubles every gradient") {
    UNet net(tiny_cfg(), 41);
    auto& P = net.params();
    Rng prng(42);
    for (auto& p : P.all())
        for (auto& v : p.value) v += prng.uniform(-0.1, 0.1);
    auto x = random_input(1, 1, 4, 4, 43);
    UNet::Tape t;
    auto f = net.forward(x, {-0.2}, t);
    nn::BTensor gy(f.B, f.C, f.H, f.W);
    Rng grng(44);
    grng.fill_normal(gy.v);

    P.zero_grad();
    net.backward(t, gy);
    std::vector<std::vector<double>> g1;
    for (const auto& p : P.all()) g1.push_back(p.grad);

    for (auto& v : gy.v) v *= 2.0;
    P.zero_grad();
    UNet::Tape t2;
    net.forward(x, {-0.2}, t2);
    net.backward(t2, gy);
    size_t i = 0;
    for (const auto& p : P.all()) {
        for (size_t j = 0; j < p.numel(); ++j) CHECK(p.grad[j] == 2.0 * g1[i][j]);
        ++i;
    }
}

TEST_CASE("zero learning rate leaves weights bitwise unchanged") {
    UNet net(tiny_cfg(), 51);
    nn::AdamW opt(net.params(), {0.0, 0.1});
    std::vector<std::vector<double>> before;
    for (const auto& p : net.params().all()) before.push_back(p.value);
    std::vector<nn::BTensor> batches = {random_input(4, 1, 4, 4, 52)};
    train_epoch(net, opt, batches, DiffusionConfig{}, 53);
    size_t i = 0;
    for (const auto& p : net.params().all()) CHECK(p.value == before[i++]);
}

TEST_CASE("a linear scalar denoiser learns the analytic optimum") {
    // model D(x; sigma) = a*x on data N(0, s^2): quadrature over the
    // log-normal sigma law gives a* = E[lam s^2] / E[lam (s^2 + sigma^2)]
    const double s = 0.5;
    DiffusionConfig cfg;
    double num = 0.0, den = 0.0;
    const int Q = 4000;
    for (int i = 0; i < Q; ++i) {
        double z = -8.0 + 16.0 * (i + 0.5) / Q;
        double wgt = std::exp(-0.5 * z * z);
        double sg = std::exp(cfg.p_mean + cfg.p_std * z);
        double lam = loss_weight(sg, cfg.sigma_data);
        num += wgt * lam * s * s;
        den += wgt * lam * (s * s + sg * sg);
    }
    const double a_star = num / den;

    // full-batch gradient descent on a fixed Monte-Carlo sample
    const int N = 400000;
    Rng rng(61);
    std::vector<double> lam(N), x0(N), y(N);
    for (int i = 0; i < N; ++i) {
        double sg = sample_sigma_for_training(cfg, rng);
        lam[size_t(i)] = loss_weight(sg, cfg.sigma_data);
        x0[size_t(i)] = s * rng.normal();
        y[size_t(i)] = x0[size_t(i)] + sg * rng.normal();
    }
    double a = 0.0;
    for (int it = 0; it < 400; ++it) {
        double g = 0.0, curv = 0.0;
        for (int i = 0; i < N; ++i) {
            g += lam[size_t(i)] * (a * y[size_t(i)] - x0[size_t(i)]) * y[size_t(i)];
            curv += lam[size_t(i)] * y[size_t(i)] * y[size_t(i)];
        }
        a -= g / curv;  // normalized step; converges in a few iterations
    }
    CHECK(std::abs(a - a_star) < 0.02 * a_star);
}

TEST_CASE("same seed gives identical epoch losses") {
    auto run = [] {
        UNet net(tiny_cfg(), 71);
        nn::AdamW opt(net.params(), {1e-3, 0.0});
        std::vector<nn::BTensor> batches = {random_input(4, 1, 4, 4, 72),
                                            random_input(4, 1, 4, 4, 73)};
        return train_epoch(net, opt, batches, DiffusionConfig{}, 74);
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint save/load round trips bitwise") {
    UNet net(tiny_cfg(), 81);
    nn::AdamW opt(net.params(), {1e-3, 0.01});
    std::vector<nn::BTensor> batches = {random_input(4, 1, 4, 4, 82)};
    train_epoch(net, opt, batches, DiffusionConfig{}, 83);

    ConfigMap cfg;
    cfg["note"] = "unit test";
    save_checkpoint(net, opt, cfg, "tmp_ckpt.tsdm");
    auto ck = load_checkpoint_raw("tmp_ckpt.tsdm");
    CHECK(ck.config.at("note") == "unit test");

    UNet net2(tiny_cfg(), 999);  // different init, will be overwritten
    nn::AdamW opt2(net2.params(), {1e-3, 0.01});
    restore_from_checkpoint(ck, net2, opt2);
    for (size_t i = 0; i < net.params().count(); ++i)
        CHECK(net2.params()[int(i)].value == net.params()[int(i)].value);

    // continuing both models must produce identical losses (optimizer state restored)
    double l1 = train_epoch(net, opt, batches, DiffusionConfig{}, 84);
    double l2 = train_epoch(net2, opt2, batches, DiffusionConfig{}, 84);
    CHECK(l1 == l2);
    std::remove("tmp_ckpt.tsdm");
}

TEST_CASE("truncated checkpoint is a corrupt-file error") {
    UNet net(tiny_cfg(), 91);
    nn::AdamW opt(net.params(), {1e-3, 0.0});
    save_checkpoint(net, opt, {}, "tmp_trunc.tsdm");
    {
        std::ifstream in("tmp_trunc.tsdm", std::ios::binary);
        std::string data((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out("tmp_trunc.tsdm", std::ios::binary);
        out.write(data.data(), std::streamsize(data.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint_raw("tmp_trunc.tsdm"), RuntimeFailure);
    std::remove("tmp_trunc.tsdm");
}

TEST_CASE("resumed training matches the uninterrupted run") {
    std::vector<nn::BTensor> batches = {random_input(4, 1, 4, 4, 101),
                                        random_input(4, 1, 4, 4, 102)};
    const uint64_t base = 103;

    UNet full(tiny_cfg(), 104);
    nn::AdamW fopt(full.params(), {1e-3, 0.0});
    double full_loss = 0.0;
    for (int e = 0; e < 4; ++e)
        full_loss = train_epoch(full, fopt, batches, DiffusionConfig{}, derive_seed(base, e));

    UNet part(tiny_cfg(), 104);
    nn::AdamW popt(part.params(), {1e-3, 0.0});
    for (int e = 0; e < 2; ++e)
        train_epoch(part, popt, batches, DiffusionConfig{}, derive_seed(base, e));
    save_checkpoint(part, popt, {}, "tmp_resume.tsdm");

    UNet res(tiny_cfg(), 105);
    nn::AdamW ropt(res.params(), {1e-3, 0.0});
    restore_from_checkpoint(load_checkpoint_raw("tmp_resume.tsdm"), res, ropt);
    double res_loss = 0.0;
    for (int e = 2; e < 4; ++e)
        res_loss = train_epoch(res, ropt, batches, DiffusionConfig{}, derive_seed(base, e));

    CHECK(std::abs(res_loss - full_loss) < 1e-6);
    std::remove("tmp_resume.tsdm");
}

TEST_CASE("config validation rejects impossible shapes") {
    auto cfg = tiny_cfg();
    cfg.image_size = 5;  // not divisible for 2 levels
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = tiny_cfg();
    cfg.noise_embedding_dim = 7;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = tiny_cfg();
    cfg.channel_multipliers.clear();
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
