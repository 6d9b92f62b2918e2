#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "evapsim/rng.hpp"
#include "evapsim/trap.hpp"

namespace evapsim {

enum class RemovalReason { Evaporated, Reacted };

// Structure-of-arrays particle store. Live particles are kept compact (index
// i < n_alive); removals swap the last live particle into the hole and log the
// removed one, so hot loops never branch on an alive flag while snapshots can
// still serialize dead particles with alive = 0.
struct ParticleEnsemble {
    int dim = 2;
    double mass = 0.0;
    std::vector<double> x, y, z;      // z unused when dim == 2
    std::vector<double> vx, vy, vz;
    std::vector<std::uint64_t> id;

    struct Removed {
        std::uint64_t id;
        double x, y, z, vx, vy, vz;
        RemovalReason reason;
    };
    std::vector<Removed> removed;     // populated only if keep_removed
    bool keep_removed = false;

    std::uint64_t n_evaporated = 0;   // molecules lost over the energy cut
    std::uint64_t n_reacted = 0;      // molecules lost to reactive collisions
    std::uint64_t next_id = 0;

    std::size_t n_alive() const { return x.size(); }

    void reserve(std::size_t n);
    void add(double px, double py, double pz, double wx, double wy, double wz);
    void remove_swap(std::size_t i, RemovalReason reason);

    double kinetic(std::size_t i) const {
        double v2 = vx[i] * vx[i] + vy[i] * vy[i];
        if (dim == 3) v2 += vz[i] * vz[i];
        return 0.5 * mass * v2;
    }
    double energy(std::size_t i, const TrapPotential& trap) const {
        return kinetic(i) + trap.potential(mass, x[i], y[i], dim == 3 ? z[i] : 0.0);
    }
};

struct MacroState {
    std::size_t N = 0;
    std::array<double, 3> T{0.0, 0.0, 0.0};  // per-axis temperature, K
    double T_eff = 0.0;                      // from mean energy, K
    double E = 0.0;                          // total energy, J
    double Omega = 0.0;                      // peak phase-space density
    bool empty = true;
};

ParticleEnsemble sample_boltzmann(const TrapPotential& trap, double mass,
                                  const std::array<double, 3>& T_axis, std::size_t N,
                                  std::uint64_t seed);
ParticleEnsemble sample_boltzmann(const TrapPotential& trap, double mass, double T,
                                  std::size_t N, std::uint64_t seed);

ParticleEnsemble sample_truncated(const TrapPotential& trap, double mass, double T,
                                  double eps_t, std::size_t N, std::uint64_t seed);

MacroState macro_state(const ParticleEnsemble& ens, const TrapPotential& trap);

// Mean elastic collision rate per molecule for an equilibrium gas with a
// constant (energy-independent) cross-section:
//   2D: gamma = N lambda w_x w_y sqrt(m / (pi k_B T)) / 4
//   3D: gamma = sigma N m w_x w_y w_z / (2 pi^2 k_B T)
double collision_rate_gamma(const TrapPotential& trap, double mass, double T,
                            double lambda, double N);
double collision_rate_gamma_3d(const TrapPotential& trap, double mass, double T,
                               double sigma, double N);

void write_ensemble_csv(const ParticleEnsemble& ens, const std::string& path);

} // namespace evapsim
