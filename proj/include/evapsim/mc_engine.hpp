#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "evapsim/ensemble.hpp"
#include "evapsim/scattering.hpp"
#include "evapsim/trap.hpp"

namespace evapsim {

struct McConfig {
    double dt = 0.0;                 // s
    bool elastic_enabled = true;
    bool reactive_enabled = false;   // cross-section table must have a reactive mode
    bool evaporation_enabled = false;
    double eta = 0.0;                // constant-eta cut, > 1 when enabled
    int record_stride = 16;          // steps between trajectory samples
    std::uint64_t seed = 1;
    double alpha_3d = 0.0;           // 3D outgoing polar-angle exponent (cos^{2a})
};

struct TrajectoryRecord {
    int dim = 2;
    std::vector<double> t;           // s
    std::vector<double> N;
    std::vector<double> T;           // mean of per-axis temperatures, K
    std::vector<double> Tx, Ty, Tz;  // K (Tz empty in 2D)
    std::vector<double> Omega;
    std::vector<double> E;           // total energy, J
    std::vector<std::uint64_t> n_elastic;   // cumulative elastic events
    std::vector<std::uint64_t> n_reactive;  // cumulative molecules lost to reactions
    std::vector<std::uint64_t> n_evap;      // cumulative molecules evaporated

    void write_csv(const std::string& path) const;
};

// Event-driven hard-disk Monte Carlo on top of leapfrog free motion.
// A pair collides in a step iff its separation sweeps from outside to inside
// the contact diameter D = (lambda_el + lambda_re)/2 (2D) or sqrt(sigma/pi)
// (3D) during the step; the swept test keeps the event rate exact even when
// the per-step displacement is much larger than D.
class McEngine {
public:
    McEngine(ParticleEnsemble ens, const TrapPotential& trap, const McConfig& cfg,
             const CrossSectionTable& xsec);

    void step();
    void run(double t_end);

    const ParticleEnsemble& ensemble() const { return ens_; }
    ParticleEnsemble& ensemble() { return ens_; }
    const TrapPotential& trap() const { return trap_; }
    double time() const { return t_; }
    std::uint64_t n_elastic_events() const { return n_elastic_; }
    std::uint64_t steps_done() const { return steps_; }

    // record the current state into a trajectory
    void record(TrajectoryRecord& rec) const;

private:
    void drift();
    void collide();
    void evaporate();
    void pair_lambdas(double E_rel, double& lam_el, double& lam_re) const;

    ParticleEnsemble ens_;
    TrapPotential trap_;
    McConfig cfg_;
    CrossSectionTable xsec_;
    std::vector<AngleSampler> samplers_;   // one per cross-section row (2D)
    Rng rng_;
    double t_ = 0.0;
    std::uint64_t steps_ = 0;
    std::uint64_t n_elastic_ = 0;
    double v_max_ = 0.0;
    double v_rms_ = 0.0;
    double D_max_ = 0.0;                   // bound on the contact diameter
    bool const_D_ = false;
    double D_const_ = 0.0;

    // scratch for the uniform-grid pair scan; particles are scattered once
    // into cell-sorted packed records so pair tests touch contiguous memory
    struct PackedRec {
        double x, y, z, vx, vy, vz;
        std::uint32_t idx, pad;
    };
    std::vector<int> cell_count_;
    std::vector<int> cell_start_;
    std::vector<int> ranges_;              // per-particle covered cell index ranges
    std::vector<PackedRec> grec_;
    struct Cand { std::uint32_t i, j; };
    std::vector<Cand> cands_;
    std::vector<std::uint8_t> collided_;
    std::vector<std::uint32_t> dead_;
};

// Equal-mass elastic pair kinematics: centre-of-mass velocity and |v_rel|
// preserved exactly, relative velocity rotated by the sampled angle(s).
void elastic_rotate_2d(double phi, double& vix, double& viy, double& vjx, double& vjy);
void elastic_rotate_3d(double cos_theta, double psi, double& vix, double& viy, double& viz,
                       double& vjx, double& vjy, double& vjz);

// Constant-eta truncation: removes every particle with energy above
// eta * (mean energy of the current, generally nonequilibrium, ensemble).
std::size_t apply_evaporation_cut(ParticleEnsemble& ens, const TrapPotential& trap,
                                  double eta);

// --- named experiments ---------------------------------------------------

struct KappaEstimate {
    double kappa = 0.0;
    double kappa_stderr = 0.0;
    double tau = 0.0;          // 1/e time of the temperature-difference decay
    double tau_stderr = 0.0;
    double gamma = 0.0;        // measured per-molecule elastic collision rate
    bool fit_ok = false;
    double fit_r2 = 0.0;
    std::size_t fit_points = 0;
};

struct ThermalizationParams {
    TrapPotential trap;
    double mass = 0.0;
    double T = 0.0;            // hot-axis temperature
    double xi = 0.1;           // imbalance: cold axes at (1-xi) T
    AngularLaw law;            // 2D deflection law (alpha reused for 3D)
    double lambda = 0.0;       // constant cross-section (m in 2D, m^2 in 3D)
    std::size_t N = 0;
    std::uint64_t seed = 1;
    double dt_frac = 2e-3;     // dt as a fraction of the trap period
    double n_decay = 3.0;      // run length in units of the predicted tau
    int record_stride = 8;
};

KappaEstimate run_thermalization_experiment(const ThermalizationParams& p);

struct EvaporationParams {
    TrapPotential trap;
    double mass = 0.0;
    double T0 = 0.0;
    std::size_t N0 = 0;
    double eta = 4.0;
    double lambda = 0.0;             // constant elastic cross-section; 0 = use table
    AngularLaw law;                  // deflection law in constant-lambda mode
    bool use_builtin_table = false;  // energy-dependent KRb cross sections
    double zeta = 0.005;             // reactive-to-elastic ratio (constant mode)
    bool reactive_power_law = false; // lambda_re ∝ sqrt(E), anchored at zeta @ E_ref
    double E_ref = 0.0;              // joule; default 100 nK * k_B when 0
    double stop_frac = 0.1;
    double t_max = 0.0;              // 0 = no limit
    double dt_frac = 3e-3;
    std::uint64_t seed = 1;
    int record_stride = 16;
    double alpha_3d = 0.0;
};

TrajectoryRecord run_evaporation_trajectory(const EvaporationParams& p);

// self-consistent truncation energy: eps_t = eta * mean-energy(eps_t) for a
// harmonic-trap truncated Boltzmann state at temperature T
double solve_truncation_energy(int dim, double T, double eta);

struct AntievapParams {
    TrapPotential trap;
    double mass = 0.0;
    double T0 = 0.0;
    std::size_t N0 = 0;
    double lambda_re_ref = 0.0;   // reactive cross-section at E_ref
    double E_ref = 0.0;           // joule
    bool power_law = true;        // lambda_re ∝ sqrt(E); false = constant
    double stop_frac = 0.5;
    double dt_frac = 3e-3;
    std::uint64_t seed = 1;
    int record_stride = 16;
};

TrajectoryRecord run_antievaporation_experiment(const AntievapParams& p);

// mean energy removed per lost molecule, in units of k_B T, estimated from a
// trajectory by windowed differencing of E against N
double estimate_dE_dN_kT(const TrajectoryRecord& rec);

} // namespace evapsim
