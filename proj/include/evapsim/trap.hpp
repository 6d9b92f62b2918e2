#pragma once
#include <array>
#include <cmath>
#include <stdexcept>

namespace evapsim {

enum class TrapKind { Harmonic2d, Harmonic3d, Gaussian2d };

// Trap potential. The gaussian2d form V(r) = U0 (1 - exp(-m w^2 r^2 / (2 U0)))
// reduces to the harmonic bowl (1/2) m w^2 r^2 as U0 -> infinity; its depth is
// finite, so equilibrium states only exist with a truncation energy <= U0.
struct TrapPotential {
    TrapKind kind = TrapKind::Harmonic2d;
    std::array<double, 3> omega{0.0, 0.0, 0.0};  // rad/s; omega[2] unused in 2D
    double depth = 0.0;                          // U0, joule (gaussian2d only)

    static TrapPotential harmonic2d(double wx, double wy) {
        check_omega(wx); check_omega(wy);
        TrapPotential t; t.kind = TrapKind::Harmonic2d; t.omega = {wx, wy, 0.0};
        return t;
    }
    static TrapPotential harmonic3d(double wx, double wy, double wz) {
        check_omega(wx); check_omega(wy); check_omega(wz);
        TrapPotential t; t.kind = TrapKind::Harmonic3d; t.omega = {wx, wy, wz};
        return t;
    }
    static TrapPotential gaussian2d(double w_r, double U0) {
        check_omega(w_r);
        if (!(U0 > 0.0)) throw std::invalid_argument("gaussian2d: depth must be > 0");
        TrapPotential t; t.kind = TrapKind::Gaussian2d; t.omega = {w_r, w_r, 0.0}; t.depth = U0;
        return t;
    }

    int dim() const { return kind == TrapKind::Harmonic3d ? 3 : 2; }
    bool harmonic() const { return kind != TrapKind::Gaussian2d; }

    double potential(double mass, double x, double y, double z = 0.0) const {
        switch (kind) {
            case TrapKind::Harmonic2d:
                return 0.5 * mass * (omega[0] * omega[0] * x * x + omega[1] * omega[1] * y * y);
            case TrapKind::Harmonic3d:
                return 0.5 * mass * (omega[0] * omega[0] * x * x + omega[1] * omega[1] * y * y +
                                     omega[2] * omega[2] * z * z);
            case TrapKind::Gaussian2d: {
                double r2 = x * x + y * y;
                return depth * (1.0 - std::exp(-0.5 * mass * omega[0] * omega[0] * r2 / depth));
            }
        }
        return 0.0;
    }

    void accel(double mass, double x, double y, double z,
               double& ax, double& ay, double& az) const {
        switch (kind) {
            case TrapKind::Harmonic2d:
                ax = -omega[0] * omega[0] * x;
                ay = -omega[1] * omega[1] * y;
                az = 0.0;
                return;
            case TrapKind::Harmonic3d:
                ax = -omega[0] * omega[0] * x;
                ay = -omega[1] * omega[1] * y;
                az = -omega[2] * omega[2] * z;
                return;
            case TrapKind::Gaussian2d: {
                double w2 = omega[0] * omega[0];
                double g = std::exp(-0.5 * mass * w2 * (x * x + y * y) / depth);
                ax = -w2 * x * g;
                ay = -w2 * y * g;
                az = 0.0;
                return;
            }
        }
    }

private:
    static void check_omega(double w) {
        if (!(w > 0.0)) throw std::invalid_argument("trap frequency must be > 0");
    }
};

} // namespace evapsim
