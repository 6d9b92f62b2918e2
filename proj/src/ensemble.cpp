#include "evapsim/ensemble.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "evapsim/constants.hpp"
#include "evapsim/special.hpp"

namespace evapsim {

void ParticleEnsemble::reserve(std::size_t n) {
    x.reserve(n); y.reserve(n); vx.reserve(n); vy.reserve(n); id.reserve(n);
    if (dim == 3) { z.reserve(n); vz.reserve(n); }
}

void ParticleEnsemble::add(double px, double py, double pz,
                           double wx, double wy, double wz) {
    x.push_back(px); y.push_back(py); vx.push_back(wx); vy.push_back(wy);
    if (dim == 3) { z.push_back(pz); vz.push_back(wz); }
    id.push_back(next_id++);
}

void ParticleEnsemble::remove_swap(std::size_t i, RemovalReason reason) {
    if (keep_removed) {
        removed.push_back({id[i], x[i], y[i], dim == 3 ? z[i] : 0.0,
                           vx[i], vy[i], dim == 3 ? vz[i] : 0.0, reason});
    }
    if (reason == RemovalReason::Evaporated) ++n_evaporated; else ++n_reacted;
    std::size_t last = x.size() - 1;
    x[i] = x[last]; y[i] = y[last]; vx[i] = vx[last]; vy[i] = vy[last]; id[i] = id[last];
    if (dim == 3) { z[i] = z[last]; vz[i] = vz[last]; }
    x.pop_back(); y.pop_back(); vx.pop_back(); vy.pop_back(); id.pop_back();
    if (dim == 3) { z.pop_back(); vz.pop_back(); }
}

ParticleEnsemble sample_boltzmann(const TrapPotential& trap, double mass,
                                  const std::array<double, 3>& T_axis, std::size_t N,
                                  std::uint64_t seed) {
    if (!trap.harmonic())
        throw std::invalid_argument("sample_boltzmann: gaussian trap requires sample_truncated");
    if (N == 0) throw std::invalid_argument("sample_boltzmann: N must be >= 1");
    if (!(mass > 0.0)) throw std::invalid_argument("sample_boltzmann: mass must be > 0");
    int d = trap.dim();
    for (int i = 0; i < d; ++i)
        if (!(T_axis[i] > 0.0)) throw std::invalid_argument("sample_boltzmann: T must be > 0");

    ParticleEnsemble ens;
    ens.dim = d;
    ens.mass = mass;
    ens.reserve(N);
    Rng rng(seed);
    double sx[3], sv[3];
    for (int i = 0; i < d; ++i) {
        sv[i] = std::sqrt(k_B * T_axis[i] / mass);
        sx[i] = sv[i] / trap.omega[i];
    }
    for (std::size_t n = 0; n < N; ++n) {
        double px = sx[0] * rng.gauss();
        double py = sx[1] * rng.gauss();
        double pz = (d == 3) ? sx[2] * rng.gauss() : 0.0;
        double wx = sv[0] * rng.gauss();
        double wy = sv[1] * rng.gauss();
        double wz = (d == 3) ? sv[2] * rng.gauss() : 0.0;
        ens.add(px, py, pz, wx, wy, wz);
    }
    return ens;
}

ParticleEnsemble sample_boltzmann(const TrapPotential& trap, double mass, double T,
                                  std::size_t N, std::uint64_t seed) {
    return sample_boltzmann(trap, mass, {T, T, T}, N, seed);
}

namespace {

ParticleEnsemble sample_truncated_gaussian2d(const TrapPotential& trap, double mass,
                                             double T, double eps_t, std::size_t N,
                                             std::uint64_t seed) {
    // Exact inverse-CDF sampling in the potential value V:
    //   p(V) dV ∝ e^{-V/tau} (1 - e^{-(eps_t - V)/tau}) / (1 - V/U0) dV,  V in [0, eps_t]
    // (the last factor is the 2D radial Jacobian r dr/dV of the gaussian bowl);
    // then an angle, then kinetic energy from the truncated 2D Maxwell law.
    const double U0 = trap.depth;
    if (!(eps_t <= U0))
        throw std::invalid_argument("sample_truncated: gaussian trap needs eps_t <= depth");
    const double tau = k_B * T;
    const double w2 = trap.omega[0] * trap.omega[0];

    const int M = 4096;
    std::vector<double> cdf(M + 1, 0.0);
    auto dens = [&](double V) {
        double tail = -std::expm1(-(eps_t - V) / tau);      // 1 - e^{-(eps_t-V)/tau}
        double jac = (V < U0) ? 1.0 / (1.0 - V / U0) : 0.0; // cancels against tail at V=U0
        if (V >= U0) {                                      // limit value when eps_t == U0
            return std::exp(-V / tau) * U0 / tau;
        }
        return std::exp(-V / tau) * tail * jac;
    };
    const double hV = eps_t / M;
    double prev = dens(0.0);
    for (int i = 1; i <= M; ++i) {
        double cur = dens(i * hV);
        cdf[i] = cdf[i - 1] + 0.5 * hV * (prev + cur);
        prev = cur;
    }
    double total = cdf[M];
    if (!(total > 0.0)) throw std::invalid_argument("sample_truncated: degenerate gaussian cut");
    for (auto& v : cdf) v /= total;
    cdf[M] = 1.0;

    ParticleEnsemble ens;
    ens.dim = 2;
    ens.mass = mass;
    ens.reserve(N);
    Rng rng(seed);
    int j = 0;
    for (std::size_t n = 0; n < N; ++n) {
        double u = rng.uniform();
        // invert the tabulated CDF (binary search: draws are not sorted)
        int lo = 0, hi = M;
        while (hi - lo > 1) { int mid = (lo + hi) / 2; (cdf[mid] <= u ? lo : hi) = mid; }
        double t = (cdf[hi] > cdf[lo]) ? (u - cdf[lo]) / (cdf[hi] - cdf[lo]) : 0.0;
        double V = (lo + t) * hV;
        double r2 = -(2.0 * U0 / (mass * w2)) * std::log1p(-std::min(V / U0, 1.0 - 1e-15));
        double r = std::sqrt(r2);
        double ang = rng.uniform(0.0, 2.0 * pi);
        // kinetic energy below the local ceiling eps_t - V
        double cap = -std::expm1(-(eps_t - V) / tau);
        double K = -tau * std::log1p(-rng.uniform() * cap);
        double v = std::sqrt(2.0 * K / mass);
        double vang = rng.uniform(0.0, 2.0 * pi);
        ens.add(r * std::cos(ang), r * std::sin(ang), 0.0,
                v * std::cos(vang), v * std::sin(vang), 0.0);
    }
    return ens;
}

} // namespace

ParticleEnsemble sample_truncated(const TrapPotential& trap, double mass, double T,
                                  double eps_t, std::size_t N, std::uint64_t seed) {
    if (!(eps_t > 0.0)) throw std::invalid_argument("sample_truncated: eps_t must be > 0");
    if (N == 0) throw std::invalid_argument("sample_truncated: N must be >= 1");
    if (!trap.harmonic())
        return sample_truncated_gaussian2d(trap, mass, T, eps_t, N, seed);

    // closed-form acceptance of the rejection sampler: P(eps < eps_t) for a
    // d-dimensional harmonic Boltzmann gas
    double eta = eps_t / (k_B * T);
    double accept = trap.dim() == 2 ? gamma_low2(eta) : 0.5 * gamma_low3(eta);
    if (accept < 1e-6)
        throw std::invalid_argument("sample_truncated: acceptance probability below 1e-6");

    int d = trap.dim();
    ParticleEnsemble ens;
    ens.dim = d;
    ens.mass = mass;
    ens.reserve(N);
    Rng rng(seed);
    double sx[3], sv[3];
    for (int i = 0; i < d; ++i) {
        sv[i] = std::sqrt(k_B * T / mass);
        sx[i] = sv[i] / trap.omega[i];
    }
    while (ens.n_alive() < N) {
        double px = sx[0] * rng.gauss();
        double py = sx[1] * rng.gauss();
        double pz = (d == 3) ? sx[2] * rng.gauss() : 0.0;
        double wx = sv[0] * rng.gauss();
        double wy = sv[1] * rng.gauss();
        double wz = (d == 3) ? sv[2] * rng.gauss() : 0.0;
        double eps = 0.5 * mass * (wx * wx + wy * wy + wz * wz) + trap.potential(mass, px, py, pz);
        if (eps < eps_t) ens.add(px, py, pz, wx, wy, wz);
    }
    return ens;
}

MacroState macro_state(const ParticleEnsemble& ens, const TrapPotential& trap) {
    MacroState st;
    std::size_t N = ens.n_alive();
    if (N == 0) return st;
    st.empty = false;
    st.N = N;
    int d = ens.dim;
    double m = ens.mass;
    double exi[3] = {0, 0, 0};  // per-axis kinetic + harmonic potential
    double E = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double zz = (d == 3) ? ens.z[i] : 0.0;
        exi[0] += 0.5 * m * (ens.vx[i] * ens.vx[i] +
                             trap.omega[0] * trap.omega[0] * ens.x[i] * ens.x[i]);
        exi[1] += 0.5 * m * (ens.vy[i] * ens.vy[i] +
                             trap.omega[1] * trap.omega[1] * ens.y[i] * ens.y[i]);
        if (d == 3)
            exi[2] += 0.5 * m * (ens.vz[i] * ens.vz[i] +
                                 trap.omega[2] * trap.omega[2] * zz * zz);
        E += ens.kinetic(i) + trap.potential(m, ens.x[i], ens.y[i], zz);
    }
    for (int i = 0; i < d; ++i) st.T[i] = exi[i] / (N * k_B);
    st.E = E;
    st.T_eff = E / (double(d) * N * k_B);
    if (st.T_eff > 0.0) {
        double occ = 1.0;
        for (int i = 0; i < d; ++i) occ *= hbar * trap.omega[i] / (k_B * st.T_eff);
        st.Omega = double(N) * occ;
    } else {
        st.Omega = 0.0;  // zero-temperature marker
    }
    return st;
}

double collision_rate_gamma(const TrapPotential& trap, double mass, double T,
                            double lambda, double N) {
    if (lambda < 0.0) throw std::invalid_argument("collision_rate_gamma: lambda must be >= 0");
    if (!(T > 0.0)) throw std::invalid_argument("collision_rate_gamma: T must be > 0");
    return 0.25 * N * lambda * trap.omega[0] * trap.omega[1] *
           std::sqrt(mass / (pi * k_B * T));
}

double collision_rate_gamma_3d(const TrapPotential& trap, double mass, double T,
                               double sigma, double N) {
    if (sigma < 0.0) throw std::invalid_argument("collision_rate_gamma_3d: sigma must be >= 0");
    if (!(T > 0.0)) throw std::invalid_argument("collision_rate_gamma_3d: T must be > 0");
    return sigma * N * mass * trap.omega[0] * trap.omega[1] * trap.omega[2] /
           (2.0 * pi * pi * k_B * T);
}

void write_ensemble_csv(const ParticleEnsemble& ens, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    if (ens.dim == 3) std::fprintf(f, "id,x,y,z,vx,vy,vz,alive\n");
    else std::fprintf(f, "id,x,y,vx,vy,alive\n");
    for (std::size_t i = 0; i < ens.n_alive(); ++i) {
        if (ens.dim == 3)
            std::fprintf(f, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,1\n",
                         (unsigned long long)ens.id[i], ens.x[i], ens.y[i], ens.z[i],
                         ens.vx[i], ens.vy[i], ens.vz[i]);
        else
            std::fprintf(f, "%llu,%.17g,%.17g,%.17g,%.17g,1\n",
                         (unsigned long long)ens.id[i], ens.x[i], ens.y[i],
                         ens.vx[i], ens.vy[i]);
    }
    for (const auto& r : ens.removed) {
        if (ens.dim == 3)
            std::fprintf(f, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,0\n",
                         (unsigned long long)r.id, r.x, r.y, r.z, r.vx, r.vy, r.vz);
        else
            std::fprintf(f, "%llu,%.17g,%.17g,%.17g,%.17g,0\n",
                         (unsigned long long)r.id, r.x, r.y, r.vx, r.vy);
    }
    std::fclose(f);
}

} // namespace evapsim
