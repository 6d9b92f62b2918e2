#include "evapsim/multiband.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "evapsim/constants.hpp"
#include "evapsim/rng.hpp"

namespace evapsim {
namespace {

constexpr int MAX_INDEX = 4000;  // quadruple-overlap index cap

constexpr double LN_RENORM = 575.6462732485114;  // ln 1e250

// Oscillator eigenfunctions g_j(u) (Hermite polynomials with the Gaussian
// and normalization folded in, orthonormal on the line), carried as
// (ln|g_j|, sign).  The plain value e^{-u^2/2} underflows for |u| > 38 while
// the functions near the classical turning point are O(1), so the upward
// recurrence
//   g_0 = pi^{-1/4} e^{-u^2/2},  g_{j+1} = u sqrt(2/(j+1)) g_j - sqrt(j/(j+1)) g_{j-1}
// runs on a renormalized mantissa with a shared log-scale.
struct HermiteLn {
    std::vector<double> lnmag;  // -HUGE_VAL at an exact zero
    std::vector<signed char> sgn;
};

void hermite_fn_sweep(double u, int jmax, HermiteLn& h) {
    h.lnmag.assign(std::size_t(jmax) + 1, -HUGE_VAL);
    h.sgn.assign(std::size_t(jmax) + 1, 0);
    auto put = [&](int j, double m, double L) {
        if (m != 0.0) {
            h.lnmag[std::size_t(j)] = std::log(std::abs(m)) + L;
            h.sgn[std::size_t(j)] = m < 0.0 ? -1 : 1;
        }
    };
    double L = -0.5 * u * u;
    double m0 = std::pow(pi, -0.25), m1 = u * std::sqrt(2.0) * m0;
    put(0, m0, L);
    if (jmax >= 1) put(1, m1, L);
    for (int j = 1; j < jmax; ++j) {
        double m2 = u * std::sqrt(2.0 / (j + 1)) * m1 - std::sqrt(double(j) / (j + 1)) * m0;
        double big = std::max(std::abs(m1), std::abs(m2));
        if (big > 1e250) {
            m1 *= 1e-250; m2 *= 1e-250; L += LN_RENORM;
        } else if (big > 0.0 && big < 1e-250) {
            m1 *= 1e250; m2 *= 1e250; L -= LN_RENORM;
        }
        put(j + 1, m2, L);
        m0 = m1;
        m1 = m2;
    }
}

// Gauss-Hermite rule for weight e^{-t^2}: nodes t_i plus the log-weight
// shifted by +t_i^2 (Christoffel form ln w_i + t_i^2 = -ln sum_{j<K} g_j(t_i)^2),
// which is the numerically safe combination: the raw weights underflow while
// the polynomial integrand overflows, but their product is tame.
struct GhRule {
    std::vector<double> t;
    std::vector<double> lnw_shift;
};

GhRule build_gh_rule(int K) {
    double R = std::sqrt(2.0 * K + 1.0);
    std::vector<double> c1(std::size_t(K), 0.0), c2(std::size_t(K), 0.0);
    for (int j = 1; j < K; ++j) {
        c1[std::size_t(j)] = std::sqrt(2.0 / (j + 1));
        c2[std::size_t(j)] = std::sqrt(double(j) / (j + 1));
    }
    // sign of g_K via the renormalized recurrence (the overall positive
    // prefactor and log-scale drop out of the sign)
    auto sign_at = [&](double t) -> int {
        if (K == 0) return 1;
        double m0 = 1.0, m1 = t * std::sqrt(2.0);
        for (int j = 1; j < K; ++j) {
            double m2 = t * c1[std::size_t(j)] * m1 - c2[std::size_t(j)] * m0;
            double big = std::max(std::abs(m1), std::abs(m2));
            if (big > 1e250) {
                m1 *= 1e-250; m2 *= 1e-250;
            } else if (big > 0.0 && big < 1e-250) {
                m1 *= 1e250; m2 *= 1e250;
            }
            m0 = m1;
            m1 = m2;
        }
        return m1 > 0.0 ? 1 : (m1 < 0.0 ? -1 : 0);
    };
    std::vector<double> roots;
    if (K % 2 == 1) roots.push_back(0.0);
    double h = pi / (4.0 * R);
    double t0 = 0.5 * h;
    int s0 = sign_at(t0);
    for (double t1 = t0 + h; t0 < R + 1.0; t0 = t1, t1 += h) {
        int s1 = sign_at(t1);
        if (s0 == 0) roots.push_back(t0);
        else if (s0 * s1 < 0) {
            double a = t0, b = t1;
            int sa = s0;
            for (int it = 0; it < 60; ++it) {
                double m = 0.5 * (a + b);
                int sm = sign_at(m);
                if (sa * sm <= 0) b = m;
                else a = m;
            }
            roots.push_back(0.5 * (a + b));
        }
        s0 = s1;
    }
    if (int(roots.size()) != (K + 1) / 2)
        throw std::logic_error("gauss-hermite rule: root scan miscounted");
    GhRule r;
    HermiteLn hl;
    for (double x : roots) {
        hermite_fn_sweep(x, K - 1, hl);
        double M = -HUGE_VAL;
        for (int j = 0; j < K; ++j) M = std::max(M, hl.lnmag[std::size_t(j)]);
        double s2 = 0.0;
        for (int j = 0; j < K; ++j)
            if (hl.sgn[std::size_t(j)] != 0)
                s2 += std::exp(2.0 * (hl.lnmag[std::size_t(j)] - M));
        double lw = -(2.0 * M + std::log(s2));
        r.t.push_back(x);
        r.lnw_shift.push_back(lw);
        if (x > 0.0) {
            r.t.push_back(-x);
            r.lnw_shift.push_back(lw);
        }
    }
    return r;
}

std::mutex gh_mutex;
const GhRule& gh_rule(int K) {
    static std::unordered_map<int, GhRule> cache;
    std::lock_guard<std::mutex> lk(gh_mutex);
    auto it = cache.find(K);
    if (it == cache.end()) it = cache.emplace(K, build_gh_rule(K)).first;
    return it->second;
}

struct LnVal {
    double ln = -HUGE_VAL;
    double sg = 0.0;
};

// g_n' g_m - g_n g_m' = sqrt(2n) g_{n-1} g_m - sqrt(2m) g_n g_{m-1};
// the Gaussian-derivative cross terms cancel in the combination
LnVal wg_factor(const HermiteLn& h, int a, int b) {
    double lnA = -HUGE_VAL, lnB = -HUGE_VAL, sA = 0.0, sB = 0.0;
    if (a > 0 && h.sgn[std::size_t(a) - 1] != 0 && h.sgn[std::size_t(b)] != 0) {
        lnA = 0.5 * std::log(2.0 * a) + h.lnmag[std::size_t(a) - 1] + h.lnmag[std::size_t(b)];
        sA = h.sgn[std::size_t(a) - 1] * h.sgn[std::size_t(b)];
    }
    if (b > 0 && h.sgn[std::size_t(a)] != 0 && h.sgn[std::size_t(b) - 1] != 0) {
        lnB = 0.5 * std::log(2.0 * b) + h.lnmag[std::size_t(a)] + h.lnmag[std::size_t(b) - 1];
        sB = h.sgn[std::size_t(a)] * h.sgn[std::size_t(b) - 1];
    }
    double M = std::max(lnA, lnB);
    if (M == -HUGE_VAL) return {};
    double w = sA * std::exp(lnA - M) - sB * std::exp(lnB - M);
    if (w == 0.0) return {};
    return {std::log(std::abs(w)) + M, w < 0.0 ? -1.0 : 1.0};
}

// shared evaluation core: integral over u of a product of oscillator
// eigenfunctions (Is) or of two antisymmetric first-derivative pairs (Ip),
// by Gauss-Hermite in the stretched variable t = sqrt(2) u
double gh_integral(int K, int n, int m, int p, int q, bool wronskian) {
    const GhRule& rule = gh_rule(K);
    int jmax = std::max(std::max(n, m), std::max(p, q));
    HermiteLn hl;
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.t.size(); ++i) {
        double u = rule.t[i] / std::sqrt(2.0);
        hermite_fn_sweep(u, jmax, hl);
        double lnF = 0.0, sign = 1.0;
        if (!wronskian) {
            bool zero = false;
            for (int v : {n, m, p, q}) {
                if (hl.sgn[std::size_t(v)] == 0) { zero = true; break; }
                lnF += hl.lnmag[std::size_t(v)];
                if (hl.sgn[std::size_t(v)] < 0) sign = -sign;
            }
            if (zero) continue;
        } else {
            LnVal f1 = wg_factor(hl, n, m), f2 = wg_factor(hl, p, q);
            if (f1.sg == 0.0 || f2.sg == 0.0) continue;
            lnF = f1.ln + f2.ln;
            sign = f1.sg * f2.sg;
        }
        acc += sign * std::exp(rule.lnw_shift[i] + lnF);
    }
    return acc / std::sqrt(2.0);
}

void check_indices(int n, int m, int p, int q) {
    for (int v : {n, m, p, q})
        if (v < 0 || v > MAX_INDEX)
            throw std::invalid_argument("hermite overlap: index out of [0, 4000]");
}

int resolve_nodes(int n, int m, int p, int q, int nodes) {
    int S = n + m + p + q;
    int need = 2 * S + 1;
    if (nodes == 0) return need + 2;
    if (nodes < need)
        throw std::invalid_argument("hermite overlap: node count below exactness threshold");
    return nodes;
}

std::uint64_t pack4(int a, int b, int c, int d) {
    return (std::uint64_t(a) << 48) | (std::uint64_t(b) << 32) | (std::uint64_t(c) << 16) |
           std::uint64_t(d);
}

std::mutex memo_mutex;

} // namespace

double hermite_integral_Is(int n, int m, int p, int q, int nodes) {
    check_indices(n, m, p, q);
    if ((n + m + p + q) % 2 != 0) return 0.0;  // odd integrand
    int K = resolve_nodes(n, m, p, q, nodes);
    if (nodes != 0) return gh_integral(K, n, m, p, q, false);
    int idx[4] = {n, m, p, q};
    std::sort(idx, idx + 4);  // the quadruple product is permutation symmetric
    std::uint64_t key = pack4(idx[0], idx[1], idx[2], idx[3]);
    static std::unordered_map<std::uint64_t, double> memo;
    {
        std::lock_guard<std::mutex> lk(memo_mutex);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
    }
    double v = gh_integral(K, idx[0], idx[1], idx[2], idx[3], false);
    std::lock_guard<std::mutex> lk(memo_mutex);
    memo.emplace(key, v);
    return v;
}

double hermite_integral_Ip(int n, int m, int p, int q, int nodes) {
    check_indices(n, m, p, q);
    if (n == m || p == q) return 0.0;  // antisymmetric pair vanishes
    if ((n + m + p + q) % 2 != 0) return 0.0;
    int K = resolve_nodes(n, m, p, q, nodes);
    if (nodes != 0) return gh_integral(K, n, m, p, q, true);
    double sign = 1.0;
    if (n > m) { std::swap(n, m); sign = -sign; }
    if (p > q) { std::swap(p, q); sign = -sign; }
    if (p < n || (p == n && q < m)) { std::swap(n, p); std::swap(m, q); }
    std::uint64_t key = pack4(n, m, p, q);
    static std::unordered_map<std::uint64_t, double> memo;
    {
        std::lock_guard<std::mutex> lk(memo_mutex);
        auto it = memo.find(key);
        if (it != memo.end()) return sign * it->second;
    }
    double v = gh_integral(K, n, m, p, q, true);
    std::lock_guard<std::mutex> lk(memo_mutex);
    memo.emplace(key, v);
    return sign * v;
}

namespace {

void check_trap(const ModeRegister& reg) {
    if (!(reg.mass > 0.0)) throw std::invalid_argument("mode register: mass must be > 0");
    if (!(reg.omega_r > 0.0)) throw std::invalid_argument("mode register: omega_r must be > 0");
    if (!(reg.omega_z > reg.omega_r))
        throw std::invalid_argument("mode register: omega_z must exceed omega_r");
    if (!(reg.bp3 >= 0.0)) throw std::invalid_argument("mode register: bp3 must be >= 0");
}

void check_mode(const Mode& a) {
    if (a.nx < 0 || a.ny < 0 || a.nz < 0)
        throw std::invalid_argument("mode register: negative mode index");
}

std::uint64_t mode_key(const Mode& a) {
    return (std::uint64_t(a.nx) << 42) | (std::uint64_t(a.ny) << 21) | std::uint64_t(a.nz);
}

} // namespace

double pair_rate(const Mode& a, const Mode& b, const ModeRegister& reg) {
    check_trap(reg);
    check_mode(a);
    check_mode(b);
    if (a == b)
        throw std::invalid_argument("pair rate: identical fermions cannot share a mode triple");
    double a_rho = std::sqrt(hbar / (reg.mass * reg.omega_r));
    double pref = 3.0 * std::sqrt(2.0 * pi) * reg.bp3 *
                  std::sqrt(reg.omega_r * reg.omega_z) / (a_rho * a_rho * a_rho);
    double Isx = hermite_integral_Is(a.nx, b.nx, a.nx, b.nx);
    double Isy = hermite_integral_Is(a.ny, b.ny, a.ny, b.ny);
    double Isz = hermite_integral_Is(a.nz, b.nz, a.nz, b.nz);
    double Ipx = hermite_integral_Ip(a.nx, b.nx, a.nx, b.nx);
    double Ipy = hermite_integral_Ip(a.ny, b.ny, a.ny, b.ny);
    double Ipz = hermite_integral_Ip(a.nz, b.nz, a.nz, b.nz);
    // one term per axis carrying the antisymmetric overlap, weighted by
    // omega_axis/omega_r; for n_z = m_z the last term vanishes and the
    // intra-band form remains
    double g = pref * (Ipx * Isy * Isz + Isx * Ipy * Isz +
                       (reg.omega_z / reg.omega_r) * Isx * Isy * Ipz);
    if (!(g >= 0.0)) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "pair rate: negative rate for (%d,%d,%d)x(%d,%d,%d): %g", a.nx, a.ny,
                      a.nz, b.nx, b.ny, b.nz, g);
        throw std::logic_error(buf);
    }
    return g;
}

RateCache::RateCache(const ModeRegister& reg) {
    check_trap(reg);
    n_ = reg.modes.size();
    if (reg.rho.size() != n_)
        throw std::invalid_argument("mode register: modes/rho size mismatch");
    std::unordered_set<std::uint64_t> seen;
    for (std::size_t i = 0; i < n_; ++i) {
        check_mode(reg.modes[i]);
        if (!(reg.rho[i] >= 0.0 && reg.rho[i] <= 1.0))
            throw std::invalid_argument("mode register: rho outside [0, 1]");
        if (!seen.insert(mode_key(reg.modes[i])).second)
            throw std::invalid_argument("mode register: duplicate mode triple");
    }
    g_.assign(n_ * (n_ - 1) / 2, 0.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j)
            g_[k++] = pair_rate(reg.modes[i], reg.modes[j], reg);
}

double RateCache::rate(std::size_t i, std::size_t j) const {
    if (i >= n_ || j >= n_) throw std::invalid_argument("rate cache: index out of range");
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    return g_[i * (2 * n_ - i - 1) / 2 + (j - i - 1)];
}

std::vector<std::size_t> init_band_populations(std::size_t N, double T, double omega_z,
                                               int n_max) {
    if (n_max < 1) throw std::invalid_argument("band populations: n_max must be >= 1");
    if (!(T > 0.0)) throw std::invalid_argument("band populations: T must be > 0");
    if (!(omega_z > 0.0)) throw std::invalid_argument("band populations: omega_z must be > 0");
    std::vector<std::size_t> counts(std::size_t(n_max), 0);
    double x = std::exp(-hbar * omega_z / (k_B * T));
    std::size_t placed = 0;
    for (int a = 0; a + 1 < n_max; ++a) {
        auto c = std::size_t(std::llround(double(N) * (1.0 - x) * std::pow(x, a)));
        c = std::min(c, N - placed);
        counts[std::size_t(a)] = c;
        placed += c;
    }
    counts[std::size_t(n_max) - 1] = N - placed;  // cutoff rule: tail into the top band
    return counts;
}

ModeRegister init_mode_register(std::size_t N, double T, int n_max, double omega_r,
                                double omega_z, double mass, double bp3,
                                std::uint64_t seed) {
    ModeRegister reg;
    reg.omega_r = omega_r;
    reg.omega_z = omega_z;
    reg.mass = mass;
    reg.bp3 = bp3;
    check_trap(reg);
    if (N == 0) throw std::invalid_argument("mode register: need at least one molecule");
    std::vector<std::size_t> counts = init_band_populations(N, T, omega_z, n_max);
    double xr = std::exp(-hbar * omega_r / (k_B * T));
    Rng rng(seed);
    auto geometric = [&]() {
        double u = rng.uniform_pos();
        double v = std::floor(std::log(u) / std::log(xr));
        return int(std::min(v, double((1 << 21) - 1)));
    };
    std::unordered_set<std::uint64_t> seen;
    long budget = 10000 * long(N) + 1000;
    for (int band = 0; band < n_max; ++band) {
        for (std::size_t c = 0; c < counts[std::size_t(band)]; ++c) {
            for (;;) {
                if (--budget < 0)
                    throw std::runtime_error("mode register: mode space saturated, cannot "
                                             "place distinct triples");
                Mode m{geometric(), geometric(), band};
                if (seen.insert(mode_key(m)).second) {
                    reg.modes.push_back(m);
                    break;
                }
            }
        }
    }
    reg.rho.assign(N, 1.0);
    return reg;
}

MultibandSeries evolve_master_equation(const ModeRegister& reg, const RateCache& cache,
                                       double dt_out, double t_end) {
    std::size_t n = reg.modes.size();
    if (cache.size() != n || reg.rho.size() != n)
        throw std::invalid_argument("master equation: register/cache size mismatch");
    if (!(dt_out > 0.0)) throw std::invalid_argument("master equation: dt_out must be > 0");
    if (!(t_end >= 0.0)) throw std::invalid_argument("master equation: t_end must be >= 0");
    std::vector<double> rho = reg.rho;
    for (double r : rho)
        if (!(r >= 0.0 && r <= 1.0))
            throw std::invalid_argument("master equation: initial rho outside [0, 1]");

    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    auto rhs = [&](const std::vector<double>& r, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += cache.rate(i, j) * r[j];
            out[i] = -r[i] * s;
        }
    };
    MultibandSeries se;
    auto record = [&](double t) {
        double N = 0.0, W = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            N += rho[i];
            W += (reg.modes[i].nx + reg.modes[i].ny) * rho[i];
        }
        se.t.push_back(t);
        se.N.push_back(N);
        se.T.push_back(N > 1e-300 ? hbar * reg.omega_r * W / (N * k_B) : 0.0);
    };
    record(0.0);
    double t = 0.0;
    long k_rec = 1;
    const std::uint64_t max_steps = 20'000'000ULL;
    std::uint64_t steps = 0;
    while (t < t_end * (1.0 - 1e-12)) {
        if (++steps > max_steps) throw std::runtime_error("master equation: step budget exhausted");
        double next_rec = std::min(double(k_rec) * dt_out, t_end);
        rhs(rho, k1);
        double r = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            r = std::max(r, std::abs(k1[i]) / std::max(rho[i], 1e-12));
        double dt = r > 0.0 ? 1e-3 / r : (next_rec - t);
        dt = std::min(dt, next_rec - t);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = rho[i] + 0.5 * dt * k1[i];
        rhs(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = rho[i] + 0.5 * dt * k2[i];
        rhs(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = rho[i] + dt * k3[i];
        rhs(tmp, k4);
        for (std::size_t i = 0; i < n; ++i) {
            rho[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if (rho[i] < -1e-9 || rho[i] > 1.0 + 1e-9)
                throw std::runtime_error("master equation: survival probability left [0, 1]");
            rho[i] = std::min(std::max(rho[i], 0.0), 1.0);
        }
        t += dt;
        if (t >= next_rec * (1.0 - 1e-12)) {
            record(next_rec);
            ++k_rec;
        }
    }
    return se;
}

MultibandResult run_multiband_experiment(const MultibandParams& p) {
    if (p.N0 < 2) throw std::invalid_argument("multiband: need at least two molecules");
    if (!(p.T0 > 0.0)) throw std::invalid_argument("multiband: T0 must be > 0");
    if (p.n_max < 1) throw std::invalid_argument("multiband: n_max must be >= 1");
    if (!(p.nu_r > 0.0 && p.nu_z > p.nu_r))
        throw std::invalid_argument("multiband: need nu_z > nu_r > 0");
    if (!(p.mass > 0.0)) throw std::invalid_argument("multiband: mass must be > 0");
    if (!(p.bp3 >= 0.0)) throw std::invalid_argument("multiband: bp3 must be >= 0");
    if (!(p.t_end > 0.0)) throw std::invalid_argument("multiband: t_end must be > 0");
    if (p.n_out < 1) throw std::invalid_argument("multiband: n_out must be >= 1");
    if (p.draws < 1) throw std::invalid_argument("multiband: draws must be >= 1");

    double wr = 2.0 * pi * p.nu_r, wz = 2.0 * pi * p.nu_z;
    double dt_out = p.t_end / p.n_out;
    std::size_t n_pts = std::size_t(p.n_out) + 1;
    std::vector<MultibandSeries> series(std::size_t(p.draws));

    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("EVAPSIM_WORKERS")) {
        long w = std::strtol(env, nullptr, 10);
        if (w >= 1) workers = unsigned(w);
    }
    workers = std::min<unsigned>(workers, unsigned(p.draws));

    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    auto work = [&]() {
        try {
            for (;;) {
                std::size_t d = next.fetch_add(1);
                if (d >= std::size_t(p.draws)) return;
                ModeRegister reg = init_mode_register(p.N0, p.T0, p.n_max, wr, wz, p.mass,
                                                      p.bp3, derive_seed(p.seed, d));
                RateCache cache(reg);
                series[d] = evolve_master_equation(reg, cache, dt_out, p.t_end);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(err_mutex);
            if (!err) err = std::current_exception();
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
    for (const auto& s : series)
        if (s.t.size() != n_pts)
            throw std::logic_error("multiband: draw produced a mismatched output grid");

    MultibandResult res;
    res.n_max = p.n_max;
    for (std::size_t k = 0; k < n_pts; ++k) {
        double mN = 0.0, mT = 0.0;
        for (const auto& s : series) {
            mN += s.N[k];
            mT += s.T[k];
        }
        mN /= p.draws;
        mT /= p.draws;
        double vN = 0.0, vT = 0.0;
        for (const auto& s : series) {
            vN += (s.N[k] - mN) * (s.N[k] - mN);
            vT += (s.T[k] - mT) * (s.T[k] - mT);
        }
        double den = double(p.draws) * std::max(p.draws - 1, 1);
        res.t.push_back(series[0].t[k]);
        res.N_mean.push_back(mN);
        res.N_se.push_back(std::sqrt(vN / den));
        res.T_mean.push_back(mT);
        res.T_se.push_back(std::sqrt(vT / den));
    }
    return res;
}

void MultibandResult::write_csv(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    std::fprintf(f, "t_s,N_mean,N_stderr,T_nK_mean,T_nK_stderr,bands\n");
    for (std::size_t k = 0; k < t.size(); ++k)
        std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", t[k], N_mean[k], N_se[k],
                     T_mean[k] / nK, T_se[k] / nK, n_max);
    std::fclose(f);
}

double bp3_from_cross_section(double sigma_re, double E_col, double mass) {
    if (!(sigma_re >= 0.0)) throw std::invalid_argument("bp3: cross-section must be >= 0");
    if (!(E_col > 0.0)) throw std::invalid_argument("bp3: collision energy must be > 0");
    if (!(mass > 0.0)) throw std::invalid_argument("bp3: mass must be > 0");
    double k = std::sqrt(mass * E_col) / hbar;
    return sigma_re / (12.0 * pi * k);
}

} // namespace evapsim
