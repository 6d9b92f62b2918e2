#pragma once
#include <array>

#include "evapsim/mc_engine.hpp"

namespace evapsim {

// Kinetic model of plain + forced evaporation for a harmonically trapped gas
// whose phase-space distribution stays a truncated Boltzmann,
//   f(x,p) = A exp(-eps/kT) Theta(eps_t - eps),  eps = p^2/2m + V(x).
// The macrostate is (N, E, eps_t); T is the quasi-temperature fixed by the
// closure E/N = kT gamma_{d+1}(eps_t/kT) / gamma_d(eps_t/kT) with gamma_k the
// lower incomplete gamma function (harmonic density of states ~ eps^{d-1}).
struct TbState {
    double N = 0.0;       // molecule number (real-valued)
    double E = 0.0;       // total energy, J
    double eps_t = 0.0;   // truncation energy, J
    double T = 0.0;       // quasi-temperature, K
};

struct TbConfig {
    int dim = 2;                        // 2 or 3
    double mass = 0.0;                  // kg
    std::array<double, 3> omega{};      // rad/s; omega[2] ignored in 2D
    double lambda = 0.0;                // energy-independent elastic cross section:
                                        // length (m) in 2D, area (m^2) in 3D
    double zeta = 0.0;                  // reactive/elastic collision-rate ratio
    double eta = 6.0;                   // forced cut: eps_t <- min(eps_t, eta E/N)
    double dt = 0.0;                    // step, s; 0 = auto (2% of a collision time)
    double quad_tol = 1e-8;             // relative tolerance of the rate quadratures
    int record_stride = 1;
};

// Instantaneous rates of the three collisional channels, all >= 0.
struct TbRates {
    double gamma_ordered = 0.0;   // ordered-pair elastic rate (= 2x event rate), 1/s
    double Ndot_evap = 0.0;       // molecules/s promoted above eps_t and lost
    double Edot_evap = 0.0;       // W carried away by them
    double Ndot_react = 0.0;      // molecules/s destroyed in two-body reactions
    double Edot_react = 0.0;      // W removed with the reacting pairs
};

// Dimensionless pair-rate kernels over the reduced total energy h = (eps_t - 2V)/kT
// at fixed pair position (exposed for validation).  With thermal weights
// e^{-(k1+k2)/kT} and the flux |v1 - v2|, in units where kT = m = 1:
//   rate        : both collision partners below the cut
//   rate_energy : same, weighted by (k1 + k2)/kT
//   evap_count  : outgoing pair straddles the cut (one partner above)
//   evap_energy : same, weighted by the kinetic energy of the escaping partner
double tb_kernel_rate(int dim, double h);
double tb_kernel_rate_energy(int dim, double h);
double tb_kernel_evap_count(int dim, double h);
double tb_kernel_evap_energy(int dim, double h);

TbRates tb_rates(const TbState& st, const TbConfig& cfg);

// State with temperature T0 and the self-consistent cut eps_t = eta * (E/N).
TbState tb_initial_state(const TbConfig& cfg, double N0, double T0);

// One forward-Euler step: ramp the cut down to eta E/N (spilling the outer
// energy shell), apply collisional losses over dt, re-solve the closure.
// Throws std::runtime_error if the gas extinguishes or the closure solve
// fails to bracket.
TbState tb_step(const TbState& st, const TbConfig& cfg);

// Integrate from (N0, T0) until N <= stop_frac * N0.  Record layout matches
// the particle-simulation trajectories (Tx = Ty = Tz = T; n_elastic counts
// collision events, n_evap / n_reactive count molecules lost).
TrajectoryRecord run_tb_trajectory(const TbConfig& cfg, double N0, double T0,
                                   double stop_frac);

} // namespace evapsim
