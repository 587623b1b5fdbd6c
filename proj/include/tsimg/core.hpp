#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsimg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input/contract violations (bad config, bad file, bad shape).
struct ValidationError : Error {
    using Error::Error;
};

// Failures that occur while processing valid inputs (NaN mid-run, corrupt file).
struct RuntimeFailure : Error {
    using Error::Error;
};

struct ShapeError : ValidationError {
    using ValidationError::ValidationError;
};

struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

// Deterministic RNG used everywhere a seed appears in the public API.
// mt19937_64 has a fully specified sequence; the normal/uniform mappings
// below are hand-rolled so draws do not depend on the standard library's
// unspecified distribution algorithms.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return (gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // integer in [0, n)
    uint64_t below(uint64_t n) {
        // rejection sampling, unbiased
        uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = gen_();
        } while (v >= lim);
        return v % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    void fill_normal(std::vector<double>& v) {
        for (double& x : v) x = normal();
    }

    uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stable per-stream seed derivation (splitmix64 finalizer).
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace tsimg
