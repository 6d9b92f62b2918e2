#pragma once
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace evapsim {

// Mode-resolved two-body loss model for a pancake trap (tight harmonic axis
// omega_z on top of a transverse harmonic confinement omega_r).  Identical
// fermionic molecules are pinned to harmonic-oscillator mode triples
// (n_x, n_y, n_z) -- elastic redistribution is neglected, so a molecule keeps
// its modes for life and can be labelled by them.  P-wave two-body reactive
// collisions remove pairs at mode-dependent rates; with coherences dropped,
// each molecule keeps a survival probability rho_i evolving as
//   d rho_i / dt = -rho_i sum_{j != i} Gamma_ij rho_j.

struct Mode {
    int nx = 0, ny = 0, nz = 0;
    bool operator==(const Mode& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }
};

struct ModeRegister {
    double omega_r = 0.0;  // transverse trap frequency, rad/s
    double omega_z = 0.0;  // lattice-axis frequency, rad/s; must exceed omega_r
    double mass = 0.0;     // kg
    double bp3 = 0.0;      // p-wave inelastic scattering volume, m^3
    std::vector<Mode> modes;  // one triple per molecule; all distinct (Pauli)
    std::vector<double> rho;  // survival probabilities, in [0, 1]
};

// Quadruple-Hermite Gaussian overlaps (dimensionless):
//   Is = integral du e^{-2u^2} H_n H_m H_p H_q / (pi sqrt(2^{n+m+p+q} n!m!p!q!))
//   Ip = same prefactor with each H-pair replaced by the antisymmetric
//        combination H_n' H_m - H_n H_m' (and H_p' H_q - H_p H_q').
// Evaluated by Gauss-Hermite quadrature, exact for the polynomial integrand;
// nodes = 0 picks the smallest exact rule.  Stable for large indices (the
// Gaussian is folded into oscillator eigenfunctions and weights are combined
// in log space).  Values are memoized.
double hermite_integral_Is(int n, int m, int p, int q, int nodes = 0);
double hermite_integral_Ip(int n, int m, int p, int q, int nodes = 0);

// Two-body loss rate (1/s) of a mode pair.  One term per axis carrying the
// antisymmetric overlap, weighted by that axis's frequency over omega_r;
// for n_z = m_z the lattice-axis term vanishes identically (intra-band form).
// Throws std::invalid_argument for an identical pair of triples.
double pair_rate(const Mode& a, const Mode& b, const ModeRegister& reg);

// All pair rates of a register, built once and then read-only.
class RateCache {
  public:
    explicit RateCache(const ModeRegister& reg);
    double rate(std::size_t i, std::size_t j) const;  // symmetric; rate(i, i) = 0
    std::size_t size() const { return n_; }

  private:
    std::size_t n_ = 0;
    std::vector<double> g_;  // packed strict upper triangle
};

// Boltzmann band loads for the lattice axis: bands 0 .. n_max-2 get their
// weight from the full geometric distribution exp(-alpha hbar omega_z / kT);
// every remaining molecule is assigned to the top band n_max-1.
std::vector<std::size_t> init_band_populations(std::size_t N, double T, double omega_z,
                                               int n_max);

// Registers N molecules: lattice band per init_band_populations, transverse
// modes Boltzmann-drawn at T, duplicate triples resampled away.  rho = 1.
ModeRegister init_mode_register(std::size_t N, double T, int n_max, double omega_r,
                                double omega_z, double mass, double bp3,
                                std::uint64_t seed);

struct MultibandSeries {
    std::vector<double> t;  // s
    std::vector<double> N;  // sum of survival probabilities
    std::vector<double> T;  // K, transverse estimator sum hbar w_r (nx+ny) rho / (N kB)
};

// Integrates the survival probabilities to t_end with an adaptive RK4 (per
// step relative change kept below 1e-3), sampling every dt_out.  Throws if
// any rho leaves [0, 1] by more than 1e-9.
MultibandSeries evolve_master_equation(const ModeRegister& reg, const RateCache& cache,
                                       double dt_out, double t_end);

struct MultibandParams {
    std::size_t N0 = 0;
    double T0 = 0.0;        // K
    int n_max = 1;          // number of lattice bands kept
    double nu_r = 0.0;      // transverse frequency, Hz
    double nu_z = 0.0;      // lattice frequency, Hz
    double mass = 0.0;      // kg
    double bp3 = 0.0;       // m^3
    double t_end = 0.0;     // s
    int n_out = 64;         // output intervals
    int draws = 32;         // independent initial-condition draws
    std::uint64_t seed = 1;
};

struct MultibandResult {
    int n_max = 1;
    std::vector<double> t, N_mean, N_se, T_mean, T_se;
    void write_csv(const std::string& path) const;
};

// Ensemble average over independent draws (mean and standard error of N and
// T on a common grid).  Draws run in parallel; EVAPSIM_WORKERS overrides the
// worker count.  Deterministic for a given seed regardless of worker count.
MultibandResult run_multiband_experiment(const MultibandParams& p);

// Convention for mapping a reactive cross-section to the p-wave volume: the
// threshold p-wave inelastic cross-section of distinguishable partners is
// written sigma(k) = 12 pi k bp^3 and matched at the relative momentum of a
// pair colliding with energy E_col (k = sqrt(mass E_col) / hbar, reduced
// mass = mass/2).  The source model for the rates supplies no mapping of its
// own, so this is a documented choice, not ground truth.
double bp3_from_cross_section(double sigma_re, double E_col, double mass);

} // namespace evapsim
