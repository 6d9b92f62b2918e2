#include "evapsim/tb_kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "evapsim/special.hpp"

namespace evapsim {

namespace {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
using Quad = boost::math::quadrature::gauss_kronrod<double, 15>;
using QuadFine = boost::math::quadrature::gauss_kronrod<double, 31>;

// Kernel grid end.  Beyond h = H_MAX the below-cut kernels sit on their
// h -> infinity limits and the promotion kernels carry weight e^{-h} < 1e-27.
constexpr double H_MAX = 64.0;
// e^{-v} tail cut of the shell integrals (relative error ~e^{-50} poly).
constexpr double V_CAP = 50.0;

// ---- pair kernels over reduced energies -------------------------------
//
// At fixed pair position (potential V each) write the centre-of-mass and
// relative kinetic energies in units of kT as p and r.  The thermal pair
// measure with the |v1 - v2| flux folded in is
//     2D:  dp dr sqrt(r) e^{-p-r}            3D:  dp dr sqrt(p) r e^{-p-r}
// (momentum shells are flat in energy per 2D particle, ~sqrt(k) in 3D; the
// flux contributes the extra sqrt(r)).  Individual kinetic energies before
// and after the collision are M +- R cos(angle), M = (p+r)/2, R = sqrt(pr),
// and the cut "both partners below eps_t" reads |cos| <= w with
// w = (h - M)/R, h = (eps_t - 2V)/kT.  The collision redraws the angle
// isotropically, so every indicator reduces to an angular fraction:
//
//            both below (incoming)   labeled escaper (outgoing)
//     2D     1 - 2a/pi               a/pi,         a = acos(min(w,1))
//     3D     min(w,1)                (1 - w)/2     (cos uniform on [-1,1])
//
// For p + r < h the cut is inactive; that part integrates to incomplete
// gamma functions.  The remainder h < s < 2h (s = p + r) is parametrised by
// s = h + v and the momentum split u = (p - r)/s, giving w = rho/sqrt(1-u^2)
// with rho = (h-v)/(h+v).  The u-integrals then depend on rho alone and are
// tabulated once; the escaper condition confines them to u < u* = sqrt(1-rho^2).

double ang_open(double w) { return std::acos(std::min(1.0, w)); }   // a in [0, pi/2]

// closed forms of int_{u*}^{1} wt(u) du where the cut is inactive (w >= 1)
double tail2(double us) {
    return (2.0 / 3.0) * (2.0 * std::sqrt(2.0)
                          + std::pow(1.0 - us, 1.5) - std::pow(1.0 + us, 1.5));
}
double tail3_anti(double u) {
    return (4.0 / 3.0) * std::pow(1.0 + u, 1.5) - (2.0 / 5.0) * std::pow(1.0 + u, 2.5)
         - (4.0 / 3.0) * std::pow(1.0 - u, 1.5) + (2.0 / 5.0) * std::pow(1.0 - u, 2.5);
}
double tail3(double us) { return tail3_anti(1.0) - tail3_anti(us); }

struct RhoTables {
    Spline rate, evN, evE;   // inner u-integrals vs rho on [0,1]
};

RhoTables build_rho_tables(int dim) {
    const int M = 2049;
    const double dr = 1.0 / double(M - 1);
    std::vector<double> jr(M), jn(M), je(M);
    for (int i = 0; i < M; ++i) {
        double rho = double(i) * dr;
        double us = std::sqrt(std::max(0.0, 1.0 - rho * rho));
        double p_rate = 0.0, p_evN = 0.0, p_evE = 0.0;
        if (us > 0.0) {
            auto wfun = [rho](double u) { return rho / std::sqrt((1.0 - u) * (1.0 + u)); };
            if (dim == 2) {
                auto wt = [](double u) { return std::sqrt(1.0 - u) + std::sqrt(1.0 + u); };
                p_rate = QuadFine::integrate([&](double u) {
                    return wt(u) * (1.0 - 2.0 * ang_open(wfun(u)) / pi);
                }, 0.0, us, 10, 1e-10);
                p_evN = QuadFine::integrate([&](double u) {
                    double a = ang_open(wfun(u));
                    return wt(u) * (1.0 - 2.0 * a / pi) * (a / pi);
                }, 0.0, us, 10, 1e-10);
                p_evE = QuadFine::integrate([&](double u) {
                    double a = ang_open(wfun(u));
                    return wt(u) * (1.0 - 2.0 * a / pi)
                         * (a + std::sqrt((1.0 - u) * (1.0 + u)) * std::sin(a)) / pi;
                }, 0.0, us, 10, 1e-10);
            } else {
                auto wt = [](double u) {
                    return (1.0 - u) * std::sqrt(1.0 + u) + (1.0 + u) * std::sqrt(1.0 - u);
                };
                p_rate = QuadFine::integrate([&](double u) {
                    return wt(u) * wfun(u);
                }, 0.0, us, 10, 1e-10);
                p_evN = QuadFine::integrate([&](double u) {
                    double w = wfun(u);
                    return wt(u) * w * 0.5 * (1.0 - w);
                }, 0.0, us, 10, 1e-10);
                p_evE = QuadFine::integrate([&](double u) {
                    double w = wfun(u);
                    return wt(u) * w * (0.5 * (1.0 - w)
                         + 0.25 * std::sqrt((1.0 - u) * (1.0 + u)) * (1.0 - w * w));
                }, 0.0, us, 10, 1e-10);
            }
        }
        jr[i] = p_rate + (dim == 2 ? tail2(us) : tail3(us));
        jn[i] = p_evN;
        je[i] = p_evE;
    }
    return {Spline(jr.data(), jr.size(), 0.0, dr),
            Spline(jn.data(), jn.size(), 0.0, dr),
            Spline(je.data(), je.size(), 0.0, dr)};
}

struct DimTables {
    Spline G_rate, G_rateE;   // below-cut kernels (gamma part + shell correction)
    Spline C_evN, C_evE;      // e^{+h}-scaled promotion kernels
    double rate_inf = 0.0, rateE_inf = 0.0;
};

DimTables build_dim_tables(int dim) {
    RhoTables R = build_rho_tables(dim);
    const int NH = 2049;
    const double dh = H_MAX / double(NH - 1);
    const double c = dim == 2 ? 0.5 / std::sqrt(2.0) : 0.25 / std::sqrt(2.0);
    const double pw = dim == 2 ? 1.5 : 2.5;   // measure power of s = h + v
    std::vector<double> cr(NH, 0.0), cre(NH, 0.0), cn(NH, 0.0), ce(NH, 0.0);
    for (int k = 1; k < NH; ++k) {
        double h = double(k) * dh;
        double vmax = std::min(h, V_CAP);
        auto rho_of = [h](double v) { return std::max(0.0, (h - v) / (h + v)); };
        double corr_r = c * Quad::integrate([&](double v) {
            return std::exp(-v) * std::pow(h + v, pw) * R.rate(rho_of(v));
        }, 0.0, vmax, 12, 1e-10);
        double corr_re = c * Quad::integrate([&](double v) {
            return std::exp(-v) * std::pow(h + v, pw + 1.0) * R.rate(rho_of(v));
        }, 0.0, vmax, 12, 1e-10);
        cn[k] = c * Quad::integrate([&](double v) {
            return std::exp(-v) * std::pow(h + v, pw) * R.evN(rho_of(v));
        }, 0.0, vmax, 12, 1e-10);
        ce[k] = c * Quad::integrate([&](double v) {
            return std::exp(-v) * std::pow(h + v, pw) * 0.5 * (h + v) * R.evE(rho_of(v));
        }, 0.0, vmax, 12, 1e-10);
        if (dim == 2) {
            cr[k] = (2.0 / 3.0) * boost::math::tgamma_lower(2.5, h) + std::exp(-h) * corr_r;
            cre[k] = (2.0 / 3.0) * boost::math::tgamma_lower(3.5, h) + std::exp(-h) * corr_re;
        } else {
            cr[k] = (4.0 / 15.0) * boost::math::tgamma_lower(3.5, h) + std::exp(-h) * corr_r;
            cre[k] = (4.0 / 15.0) * boost::math::tgamma_lower(4.5, h) + std::exp(-h) * corr_re;
        }
    }
    DimTables t;
    t.G_rate = Spline(cr.data(), cr.size(), 0.0, dh);
    t.G_rateE = Spline(cre.data(), cre.size(), 0.0, dh);
    t.C_evN = Spline(cn.data(), cn.size(), 0.0, dh);
    t.C_evE = Spline(ce.data(), ce.size(), 0.0, dh);
    t.rate_inf = dim == 2 ? (2.0 / 3.0) * std::tgamma(2.5) : (4.0 / 15.0) * std::tgamma(3.5);
    t.rateE_inf = dim == 2 ? (2.0 / 3.0) * std::tgamma(3.5) : (4.0 / 15.0) * std::tgamma(4.5);
    return t;
}

const DimTables& tables(int dim) {
    static const DimTables t2 = build_dim_tables(2);
    static const DimTables t3 = build_dim_tables(3);
    return dim == 2 ? t2 : t3;
}

void check_dim(int dim) {
    if (dim != 2 && dim != 3)
        throw std::invalid_argument("tb kinetics: dim must be 2 or 3");
}

double kern_rate(const DimTables& t, int dim, double h) {
    if (h <= 0.0) return 0.0;
    if (h >= H_MAX)
        return dim == 2 ? (2.0 / 3.0) * boost::math::tgamma_lower(2.5, h)
                        : (4.0 / 15.0) * boost::math::tgamma_lower(3.5, h);
    return t.G_rate(h);
}

double kern_rateE(const DimTables& t, int dim, double h) {
    if (h <= 0.0) return 0.0;
    if (h >= H_MAX)
        return dim == 2 ? (2.0 / 3.0) * boost::math::tgamma_lower(3.5, h)
                        : (4.0 / 15.0) * boost::math::tgamma_lower(4.5, h);
    return t.G_rateE(h);
}

// e^{+h}-scaled promotion kernels; true kernels carry the extra e^{-h}
double kern_CevN(const DimTables& t, double h) {
    if (h <= 0.0) return 0.0;
    return t.C_evN(std::min(h, H_MAX));
}
double kern_CevE(const DimTables& t, double h) {
    if (h <= 0.0) return 0.0;
    return t.C_evE(std::min(h, H_MAX));
}

// ---- position average -------------------------------------------------
//
// The pair sits at one point; averaging V over the trap adds
// int dx e^{-2V/kT} ~ int dx e^{-2x} (2D) or sqrt(x) e^{-2x} (3D), x = V/kT.
// Promotion integrands are written with e^{-hc} pulled out so the quadrature
// works on O(1) numbers.
struct OuterInts {
    double rate = 0.0, rateE = 0.0, evN = 0.0, evE = 0.0;
};

OuterInts outer_integrals(int dim, double hc, double tol) {
    const DimTables& t = tables(dim);
    // 3D: substitute x = y^2 so the sqrt(x) endpoint is polynomial
    auto integ = [&](auto f) {
        if (dim == 2) return Quad::integrate(f, 0.0, hc, 12, tol);
        return Quad::integrate([&](double y) {
            return 2.0 * y * y * f(y * y);
        }, 0.0, std::sqrt(hc), 12, tol);
    };
    OuterInts J;
    J.rate = integ([&](double x) {
        return std::exp(-2.0 * x) * kern_rate(t, dim, hc - x);
    });
    J.rateE = integ([&](double x) {
        return std::exp(-2.0 * x)
             * (2.0 * x * kern_rate(t, dim, hc - x) + kern_rateE(t, dim, hc - x));
    });
    double ehc = std::exp(-hc);
    J.evN = ehc * integ([&](double x) {
        return std::exp(-x) * kern_CevN(t, hc - x);
    });
    J.evE = ehc * integ([&](double x) {
        return std::exp(-x)
             * (x * kern_CevN(t, hc - x) + kern_CevE(t, hc - x));
    });
    return J;
}

// mean energy per molecule of the truncated state, in units of kT
double closure_mean(int dim, double ht) {
    return dim == 2 ? gamma_low3(ht) / gamma_low2(ht)
                    : gamma_low4(ht) / gamma_low3(ht);
}

void validate_config(const TbConfig& cfg) {
    check_dim(cfg.dim);
    if (!(cfg.mass > 0.0))
        throw std::invalid_argument("tb kinetics: mass must be positive");
    for (int i = 0; i < cfg.dim; ++i)
        if (!(cfg.omega[i] > 0.0))
            throw std::invalid_argument("tb kinetics: trap frequencies must be positive");
    if (!(cfg.lambda > 0.0))
        throw std::invalid_argument("tb kinetics: lambda must be positive");
    if (!(cfg.zeta >= 0.0))
        throw std::invalid_argument("tb kinetics: zeta must be >= 0");
    double eta_min = cfg.dim == 2 ? 1.5 : 4.0 / 3.0;   // E/N < eps_t * d/(d+1)
    if (!(cfg.eta > eta_min))
        throw std::invalid_argument("tb kinetics: eta below the dimensional minimum");
    if (!(cfg.dt >= 0.0))
        throw std::invalid_argument("tb kinetics: dt must be >= 0");
    if (!(cfg.quad_tol > 0.0 && cfg.quad_tol <= 1e-2))
        throw std::invalid_argument("tb kinetics: quad_tol out of range");
    if (cfg.record_stride < 1)
        throw std::invalid_argument("tb kinetics: record_stride must be >= 1");
}

void validate_state(const TbState& st) {
    if (!(st.N > 0.0) || !(st.E > 0.0) || !(st.eps_t > 0.0) || !(st.T > 0.0))
        throw std::invalid_argument("tb kinetics: state fields must be positive");
}

double solve_quasi_temperature(int dim, double N, double E, double eps_t, double T0) {
    double target = E / N;
    auto excess = [&](double T) {
        return k_B * T * closure_mean(dim, eps_t / (k_B * T)) - target;
    };
    // mean energy is strictly increasing in T at fixed cut
    double lo = 0.25 * T0, hi = 4.0 * T0;
    if (!(excess(lo) < 0.0) || !(excess(hi) > 0.0))
        throw std::runtime_error("tb kinetics: quasi-temperature not bracketed by [T/4, 4T]");
    for (int i = 0; i < 80; ++i) {
        double mid = 0.5 * (lo + hi);
        (excess(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct StepInfo {
    double events = 0.0;    // elastic collision events
    double spilled = 0.0;   // molecules removed by the forced ramp
    double evap = 0.0;      // molecules promoted over the cut by collisions
    double react = 0.0;     // molecules destroyed in reactions
};

TbState step_impl(const TbState& st, const TbConfig& cfg, StepInfo* info) {
    validate_state(st);
    if (!(cfg.dt > 0.0))
        throw std::invalid_argument("tb kinetics: step needs dt > 0");
    double tau = k_B * st.T;
    // 1) forced ramp eps_t -> eta E/N: spill the outer shell at fixed T and
    //    amplitude (distribution below the new cut is untouched)
    TbState mid = st;
    double cut = cfg.eta * st.E / st.N;
    if (cut < st.eps_t) {
        double ht = st.eps_t / tau, htn = cut / tau;
        if (cfg.dim == 2) {
            mid.N = st.N * gamma_low2(htn) / gamma_low2(ht);
            mid.E = st.E * gamma_low3(htn) / gamma_low3(ht);
        } else {
            mid.N = st.N * gamma_low3(htn) / gamma_low3(ht);
            mid.E = st.E * gamma_low4(htn) / gamma_low4(ht);
        }
        mid.eps_t = cut;
    }
    // 2) collisional losses over dt at the ramped cut
    TbRates r = tb_rates(mid, cfg);
    TbState out = mid;
    out.N = mid.N - cfg.dt * (r.Ndot_evap + r.Ndot_react);
    out.E = mid.E - cfg.dt * (r.Edot_evap + r.Edot_react);
    if (!(out.N > 0.0) || !(out.E > 0.0))
        throw std::runtime_error("tb kinetics: gas extinguished within one step; reduce dt");
    // 3) closure: re-solve the quasi-temperature for (N, E, eps_t)
    out.T = solve_quasi_temperature(cfg.dim, out.N, out.E, out.eps_t, mid.T);
    if (info) {
        info->events = 0.5 * r.gamma_ordered * cfg.dt;
        info->spilled = st.N - mid.N;
        info->evap = r.Ndot_evap * cfg.dt;
        info->react = r.Ndot_react * cfg.dt;
    }
    return out;
}

} // namespace

double tb_kernel_rate(int dim, double h) {
    check_dim(dim);
    return kern_rate(tables(dim), dim, h);
}

double tb_kernel_rate_energy(int dim, double h) {
    check_dim(dim);
    return kern_rateE(tables(dim), dim, h);
}

double tb_kernel_evap_count(int dim, double h) {
    check_dim(dim);
    if (h <= 0.0) return 0.0;
    return std::exp(-h) * kern_CevN(tables(dim), h);
}

double tb_kernel_evap_energy(int dim, double h) {
    check_dim(dim);
    if (h <= 0.0) return 0.0;
    return std::exp(-h) * kern_CevE(tables(dim), h);
}

TbRates tb_rates(const TbState& st, const TbConfig& cfg) {
    validate_config(cfg);
    validate_state(st);
    double tau = k_B * st.T;
    double hc = st.eps_t / tau;
    OuterInts J = outer_integrals(cfg.dim, hc, cfg.quad_tol);
    double scale;
    if (cfg.dim == 2) {
        double g = gamma_low2(hc);
        scale = cfg.lambda * st.N * st.N * cfg.omega[0] * cfg.omega[1]
              * std::sqrt(cfg.mass / tau) / (pi * g * g);
    } else {
        double g = gamma_low3(hc);
        scale = 16.0 * std::sqrt(2.0) * cfg.lambda * st.N * st.N * cfg.mass
              * cfg.omega[0] * cfg.omega[1] * cfg.omega[2]
              / (pi * pi * pi * tau * g * g);
    }
    TbRates r;
    r.gamma_ordered = scale * J.rate;
    r.Ndot_evap = scale * J.evN;
    r.Edot_evap = tau * scale * J.evE;
    // the ordered-pair measure counts each reacting pair twice, hence the 1/2
    // on the per-event pair energy; molecule loss is 2 per event and the two
    // factors cancel in Ndot
    r.Ndot_react = cfg.zeta * r.gamma_ordered;
    r.Edot_react = cfg.zeta * 0.5 * tau * scale * J.rateE;
    return r;
}

TbState tb_initial_state(const TbConfig& cfg, double N0, double T0) {
    validate_config(cfg);
    if (!(N0 > 0.0) || !(T0 > 0.0))
        throw std::invalid_argument("tb kinetics: N0 and T0 must be positive");
    double eps_t = solve_truncation_energy(cfg.dim, T0, cfg.eta);
    double tau = k_B * T0;
    return {N0, N0 * tau * closure_mean(cfg.dim, eps_t / tau), eps_t, T0};
}

TbState tb_step(const TbState& st, const TbConfig& cfg) {
    validate_config(cfg);
    return step_impl(st, cfg, nullptr);
}

TrajectoryRecord run_tb_trajectory(const TbConfig& cfg, double N0, double T0,
                                   double stop_frac) {
    validate_config(cfg);
    if (!(stop_frac > 0.0 && stop_frac < 1.0))
        throw std::invalid_argument("tb kinetics: stop_frac must be in (0,1)");
    TbState st = tb_initial_state(cfg, N0, T0);
    TbConfig c = cfg;
    if (c.dt == 0.0) {
        TbRates r0 = tb_rates(st, c);
        c.dt = 0.02 * st.N / r0.gamma_ordered;   // 2% of a per-molecule collision time
    }
    TrajectoryRecord rec;
    rec.dim = c.dim;
    double t = 0.0, events = 0.0, lost_evap = 0.0, lost_react = 0.0;
    auto record = [&](const TbState& s) {
        rec.t.push_back(t);
        rec.N.push_back(s.N);
        // report the temperature of the equal-(N, E) equilibrium gas, which is
        // what a kinetic thermometer on the particle ensemble would read
        double T_eq = s.E / (s.N * c.dim * k_B);
        rec.T.push_back(T_eq);
        rec.Tx.push_back(T_eq);
        rec.Ty.push_back(T_eq);
        if (c.dim == 3) rec.Tz.push_back(T_eq);
        double occ = 1.0;
        for (int i = 0; i < c.dim; ++i) occ *= hbar * c.omega[i] / (k_B * T_eq);
        rec.Omega.push_back(s.N * occ);
        rec.E.push_back(s.E);
        rec.n_elastic.push_back(std::uint64_t(std::llround(events)));
        rec.n_reactive.push_back(std::uint64_t(std::llround(lost_react)));
        rec.n_evap.push_back(std::uint64_t(std::llround(lost_evap)));
    };
    record(st);
    const std::uint64_t max_steps = 20'000'000ULL;
    std::uint64_t k = 0;
    while (st.N > stop_frac * N0) {
        if (++k > max_steps)
            throw std::runtime_error("tb kinetics: step budget exhausted");
        StepInfo info;
        st = step_impl(st, c, &info);
        t += c.dt;
        events += info.events;
        lost_evap += info.spilled + info.evap;
        lost_react += info.react;
        if (k % std::uint64_t(c.record_stride) == 0) record(st);
    }
    if (k % std::uint64_t(c.record_stride) != 0 || k == 0) record(st);
    return rec;
}

} // namespace evapsim
