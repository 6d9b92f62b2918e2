#pragma once
#include <cstdint>
#include <cmath>

namespace evapsim {

// Self-contained PRNG stack so that streams are byte-identical across
// platforms and standard-library versions (std::normal_distribution is
// implementation-defined, which would break run reproducibility).

inline std::uint64_t splitmix64_step(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based stream derivation: mixing (seed, index) through splitmix64
// gives independent child seeds; adding more children never perturbs
// earlier ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    std::uint64_t a = splitmix64_step(s);
    std::uint64_t b = splitmix64_step(s);
    return a ^ (b << 1);
}

// xoshiro256++ (Blackman & Vigna)
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64_step(sm);
        have_gauss_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1) with 53-bit resolution
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0,1], safe as log() argument
    double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (polar form avoided: trig form is
    // branch-free and equally reproducible)
    double gauss() {
        if (have_gauss_) { have_gauss_ = false; return cached_; }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_gauss_ = true;
        return r * std::cos(a);
    }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // Lemire-style rejection to avoid modulo bias
        std::uint64_t x = next_u64();
        __uint128_t m = (__uint128_t)x * n;
        std::uint64_t l = (std::uint64_t)m;
        if (l < n) {
            std::uint64_t t = (0 - n) % n;
            while (l < t) {
                x = next_u64();
                m = (__uint128_t)x * n;
                l = (std::uint64_t)m;
            }
        }
        return (std::uint64_t)(m >> 64);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
    bool have_gauss_ = false;
    double cached_ = 0.0;
};

} // namespace evapsim
