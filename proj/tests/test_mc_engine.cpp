#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "evapsim/constants.hpp"
#include "evapsim/mc_engine.hpp"
#include "evapsim/special.hpp"

using namespace evapsim;

namespace {
const double w0 = 2 * pi * 20.0;
const double T200 = 200.0 * nK;
// incommensurate frequency ratios: a perfectly isotropic harmonic trap is
// non-ergodic (every orbit shares one period), so collision-induced pair
// correlations never phase-mix away and the event rate decays below the
// molecular-chaos value.  Detuned axes restore mixing.
const double detune = 1.6180339887;   // golden ratio
const double detune_z = 1.4142135624; // sqrt(2)

// cross-section giving a target per-molecule collision rate in 2D; wxwy is
// the product of the two trap frequencies
double lambda_for_rate(double gamma, double N, double T, double wxwy) {
    return 4.0 * gamma / (N * wxwy * std::sqrt(mass_KRb / (pi * k_B * T)));
}
} // namespace

TEST_CASE("leapfrog: closed orbit and long-run energy conservation") {
    auto trap = TrapPotential::harmonic2d(w0, w0);
    ParticleEnsemble ens;
    ens.dim = 2;
    ens.mass = mass_KRb;
    double x0 = 1e-5, v0 = 2e-3;
    ens.add(x0, 0, 0, 0, v0, 0);
    McConfig cfg;
    cfg.dt = 1e-3 * 2 * pi / w0;
    cfg.elastic_enabled = false;
    CrossSectionTable xs = CrossSectionTable::constant(1e-12, AngularLaw::isotropic());
    McEngine eng(std::move(ens), trap, cfg, xs);

    double E0 = eng.ensemble().energy(0, trap);
    for (int s = 0; s < 1000; ++s) eng.step();  // one period
    CHECK(eng.ensemble().x[0] == doctest::Approx(x0).epsilon(1e-6));
    // leapfrog phase error per period ~ pi (w dt)^2 / 6 leaks ~1e-10 m into y
    CHECK(std::abs(eng.ensemble().y[0]) < 1e-9);

    double edrift = 0.0;
    for (int s = 0; s < 9000; ++s) {
        eng.step();
        edrift = std::max(edrift, std::abs(eng.ensemble().energy(0, trap) - E0) / E0);
    }
    CHECK(edrift < 1e-5);
}

TEST_CASE("free motion in the flat wing of a gaussian trap") {
    double U0 = 1e-25;  // joule; extremely shallow -> negligible force far out
    auto trap = TrapPotential::gaussian2d(w0, U0);
    ParticleEnsemble ens;
    ens.dim = 2;
    ens.mass = mass_KRb;
    double far = 1.0;  // metres: e^{-m w^2 r^2/(2U0)} underflows to 0 force
    ens.add(far, 0, 0, 1e-3, 5e-4, 0);
    McConfig cfg;
    cfg.dt = 1e-4;
    cfg.elastic_enabled = false;
    CrossSectionTable xs = CrossSectionTable::constant(1e-12, AngularLaw::isotropic());
    McEngine eng(std::move(ens), trap, cfg, xs);
    for (int s = 0; s < 100; ++s) eng.step();
    double t = 100 * cfg.dt;
    CHECK(eng.ensemble().x[0] == doctest::Approx(far + 1e-3 * t).epsilon(1e-14));
    CHECK(eng.ensemble().y[0] == doctest::Approx(5e-4 * t).epsilon(1e-14));
}

TEST_CASE("elastic pair kinematics: exact conservation and head-on exchange") {
    // head-on pair, deflection pi: velocities exchange exactly
    double vix = 3.0, viy = 0.0, vjx = -3.0, vjy = 0.0;
    elastic_rotate_2d(pi, vix, viy, vjx, vjy);
    CHECK(vix == doctest::Approx(-3.0).epsilon(1e-15));
    CHECK(vjx == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(std::abs(viy) < 1e-15);

    Rng rng(9);
    for (int k = 0; k < 200; ++k) {
        double a = rng.gauss(), b = rng.gauss(), c = rng.gauss(), d = rng.gauss();
        double phi = rng.uniform(0, 2 * pi);
        double px = a + c, py = b + d;
        double vr2 = (a - c) * (a - c) + (b - d) * (b - d);
        double ke = a * a + b * b + c * c + d * d;
        elastic_rotate_2d(phi, a, b, c, d);
        CHECK(a + c == doctest::Approx(px).epsilon(1e-13));
        CHECK(b + d == doctest::Approx(py).epsilon(1e-13));
        CHECK((a - c) * (a - c) + (b - d) * (b - d) == doctest::Approx(vr2).epsilon(1e-12));
        CHECK(a * a + b * b + c * c + d * d == doctest::Approx(ke).epsilon(1e-12));
    }
    for (int k = 0; k < 200; ++k) {
        double v[6];
        for (auto& w : v) w = rng.gauss();
        double px = v[0] + v[3], py = v[1] + v[4], pz = v[2] + v[5];
        double ke = 0;
        for (auto w : v) ke += w * w;
        double ct = rng.uniform(-1, 1), psi = rng.uniform(0, 2 * pi);
        elastic_rotate_3d(ct, psi, v[0], v[1], v[2], v[3], v[4], v[5]);
        CHECK(v[0] + v[3] == doctest::Approx(px).epsilon(1e-13));
        CHECK(v[1] + v[4] == doctest::Approx(py).epsilon(1e-13));
        CHECK(v[2] + v[5] == doctest::Approx(pz).epsilon(1e-13));
        double ke2 = 0;
        for (auto w : v) ke2 += w * w;
        CHECK(ke2 == doctest::Approx(ke).epsilon(1e-12));
    }
}

TEST_CASE("well-separated static pair never collides") {
    auto trap = TrapPotential::harmonic2d(w0, w0);
    ParticleEnsemble ens;
    ens.dim = 2;
    ens.mass = mass_KRb;
    double lam = 1e-6;
    ens.add(10e-6, 0, 0, 0, 0, 0);   // 10 D apart, D = lam/2
    ens.add(-10e-6 + lam, 0, 0, 0, 0, 0);
    McConfig cfg;
    cfg.dt = 1e-5;
    CrossSectionTable xs = CrossSectionTable::constant(lam, AngularLaw::isotropic());
    McEngine eng(std::move(ens), trap, cfg, xs);
    for (int s = 0; s < 50; ++s) eng.step();
    CHECK(eng.n_elastic_events() == 0);
}

TEST_CASE("equilibrium event rate matches the closed-form collision rate (2D)") {
    auto trap = TrapPotential::harmonic2d(w0, detune * w0);
    std::size_t N = 20'000;
    double gamma_target = 0.2 * w0;
    double lam = lambda_for_rate(gamma_target, double(N), T200, w0 * detune * w0);
    double gamma_pred = collision_rate_gamma(trap, mass_KRb, T200, lam, double(N));
    CHECK(gamma_pred == doctest::Approx(gamma_target).epsilon(1e-12));

    auto ens = sample_boltzmann(trap, mass_KRb, T200, N, 100);
    McConfig cfg;
    cfg.dt = 2e-3 * 2 * pi / w0;
    cfg.seed = 101;
    CrossSectionTable xs = CrossSectionTable::constant(lam, AngularLaw::isotropic());
    McEngine eng(std::move(ens), trap, cfg, xs);
    int steps = 2500;
    for (int s = 0; s < steps; ++s) eng.step();
    double t = eng.time();
    double gamma_meas = 2.0 * double(eng.n_elastic_events()) / (double(N) * t);
    CHECK(gamma_meas == doctest::Approx(gamma_pred).epsilon(0.05));
}

TEST_CASE("equilibrium event rate matches the closed-form collision rate (3D)") {
    auto trap = TrapPotential::harmonic3d(w0, detune * w0, detune_z * w0);
    std::size_t N = 20'000;
    double gamma_target = 0.2 * w0;
    double sigma = gamma_target * 2 * pi * pi * k_B * T200 /
                   (double(N) * mass_KRb * w0 * detune * w0 * detune_z * w0);
    double gamma_pred = collision_rate_gamma_3d(trap, mass_KRb, T200, sigma, double(N));
    CHECK(gamma_pred == doctest::Approx(gamma_target).epsilon(1e-12));

    auto ens = sample_boltzmann(trap, mass_KRb, T200, N, 200);
    McConfig cfg;
    cfg.dt = 2e-3 * 2 * pi / w0;
    cfg.seed = 202;
    CrossSectionTable xs = CrossSectionTable::constant(sigma, AngularLaw::isotropic());
    McEngine eng(std::move(ens), trap, cfg, xs);
    int steps = 2500;
    for (int s = 0; s < steps; ++s) eng.step();
    double gamma_meas = 2.0 * double(eng.n_elastic_events()) / (double(N) * eng.time());
    CHECK(gamma_meas == doctest::Approx(gamma_pred).epsilon(0.05));
}

TEST_CASE("total energy conserved through many collisions") {
    auto trap = TrapPotential::harmonic2d(w0, 1.3 * w0);
    std::size_t N = 2000;
    double lam = lambda_for_rate(0.3 * w0, double(N), T200, w0 * 1.3 * w0);
    auto ens = sample_boltzmann(trap, mass_KRb, T200, N, 7);
    McConfig cfg;
    cfg.dt = 2e-3 * 2 * pi / (1.3 * w0);
    cfg.seed = 8;
    CrossSectionTable xs = CrossSectionTable::constant(lam, AngularLaw::single_term(1.0));
    McEngine eng(std::move(ens), trap, cfg, xs);
    auto st0 = macro_state(eng.ensemble(), trap);
    for (int s = 0; s < 10'000; ++s) eng.step();
    auto st1 = macro_state(eng.ensemble(), trap);
    CHECK(eng.n_elastic_events() > 1000);
    CHECK(st1.E == doctest::Approx(st0.E).epsilon(1e-4));
    CHECK(eng.ensemble().n_alive() == N);  // no losses configured
}

TEST_CASE("determinism: identical seed and config give bit-identical output") {
    auto trap = TrapPotential::harmonic2d(w0, w0);
    auto make = [&]() {
        auto ens = sample_boltzmann(trap, mass_KRb, T200, 5000, 33);
        McConfig cfg;
        cfg.dt = 2e-3 * 2 * pi / w0;
        cfg.seed = 34;
        cfg.evaporation_enabled = true;
        cfg.eta = 3.0;
        CrossSectionTable xs =
            CrossSectionTable::constant(lambda_for_rate(0.3 * w0, 5000, T200, w0 * w0),
                                        AngularLaw::single_term(1.0));
        xs.set_constant_ratio(0.005);
        McConfig c2 = cfg;
        c2.reactive_enabled = true;
        McEngine eng(std::move(ens), trap, c2, xs);
        TrajectoryRecord rec;
        for (int s = 0; s < 300; ++s) {
            eng.step();
            if (s % 10 == 0) eng.record(rec);
        }
        return rec;
    };
    TrajectoryRecord a = make(), b = make();
    REQUIRE(a.t.size() == b.t.size());
    for (std::size_t i = 0; i < a.t.size(); ++i) {
        CHECK(a.N[i] == b.N[i]);
        CHECK(a.T[i] == b.T[i]);    // exact binary equality
        CHECK(a.E[i] == b.E[i]);
        CHECK(a.n_elastic[i] == b.n_elastic[i]);
    }
    // counters monotone, N non-increasing
    for (std::size_t i = 1; i < a.t.size(); ++i) {
        CHECK(a.N[i] <= a.N[i - 1]);
        CHECK(a.n_elastic[i] >= a.n_elastic[i - 1]);
        CHECK(a.n_reactive[i] >= a.n_reactive[i - 1]);
        CHECK(a.n_evap[i] >= a.n_evap[i - 1]);
    }
}

TEST_CASE("evaporation cut: hand-worked example and edge cases") {
    auto trap = TrapPotential::harmonic2d(w0, w0);
    ParticleEnsemble ens;
    ens.dim = 2;
    ens.mass = mass_KRb;
    // kinetic-only energies 1, 1, 10 in units of k_B * nK
    auto v_of = [&](double e_nK) { return std::sqrt(2.0 * e_nK * k_B * nK / mass_KRb); };
    ens.add(0, 0, 0, v_of(1), 0, 0);
    ens.add(0, 0, 0, 0, v_of(1), 0);
    ens.add(0, 0, 0, v_of(10), 0, 0);
    std::size_t removed = apply_evaporation_cut(ens, trap, 2.0);  // cut at 8 kB nK
    CHECK(removed == 1);
    CHECK(ens.n_alive() == 2);
    CHECK(ens.n_evaporated == 1);
    for (std::size_t i = 0; i < 2; ++i) CHECK(ens.energy(i, trap) < 2.0 * k_B * nK);

    // eta -> infinity removes nothing
    auto big = sample_boltzmann(trap, mass_KRb, T200, 1000, 3);
    CHECK(apply_evaporation_cut(big, trap, 1e9) == 0);

    // post-state predicate: max energy <= eta * old mean
    auto e2 = sample_boltzmann(trap, mass_KRb, T200, 10'000, 4);
    auto st = macro_state(e2, trap);
    double cut = 1.5 * st.E / double(st.N);
    apply_evaporation_cut(e2, trap, 1.5);
    for (std::size_t i = 0; i < e2.n_alive(); ++i) CHECK(e2.energy(i, trap) <= cut);
}

TEST_CASE("particle bookkeeping invariant under combined losses") {
    auto trap = TrapPotential::harmonic2d(w0, detune * w0);
    EvaporationParams p;
    p.trap = trap;
    p.mass = mass_KRb;
    p.T0 = T200;
    p.N0 = 4000;
    p.eta = 3.0;
    p.lambda = lambda_for_rate(0.3 * w0, 4000, T200, w0 * detune * w0);
    p.zeta = 0.01;
    p.stop_frac = 0.5;
    p.t_max = 100.0;
    p.seed = 55;
    TrajectoryRecord rec = run_evaporation_trajectory(p);
    for (std::size_t i = 0; i < rec.t.size(); ++i)
        CHECK(rec.N[i] + double(rec.n_reactive[i]) + double(rec.n_evap[i]) == double(p.N0));
    CHECK(rec.N.back() <= 0.5 * double(p.N0) + 1.0);
    CHECK(rec.n_reactive.back() % 2 == 0);  // reactions remove pairs
    CHECK(rec.n_reactive.back() > 0);
    CHECK(rec.n_evap.back() > 0);
}

TEST_CASE("nan velocities abort with diagnostics") {
    auto trap = TrapPotential::harmonic2d(w0, w0);
    auto ens = sample_boltzmann(trap, mass_KRb, T200, 10, 1);
    ens.vx[3] = std::nan("");
    McConfig cfg;
    cfg.dt = 1e-4;
    CrossSectionTable xs = CrossSectionTable::constant(1e-9, AngularLaw::isotropic());
    McEngine eng(std::move(ens), trap, cfg, xs);
    CHECK_THROWS_AS(eng.step(), std::runtime_error);
}

TEST_CASE("config validation") {
    auto trap = TrapPotential::harmonic2d(w0, w0);
    auto ens = sample_boltzmann(trap, mass_KRb, T200, 100, 1);
    CrossSectionTable xs = CrossSectionTable::constant(1e-9, AngularLaw::isotropic());
    McConfig bad;
    bad.dt = 0.0;
    CHECK_THROWS_AS(McEngine(ens, trap, bad, xs), std::invalid_argument);
    McConfig bade;
    bade.dt = 1e-4;
    bade.evaporation_enabled = true;
    bade.eta = 0.5;
    CHECK_THROWS_AS(McEngine(ens, trap, bade, xs), std::invalid_argument);
    // collision-resolved bound: enormous cross-section rejected
    McConfig badg;
    badg.dt = 1e-2;
    CrossSectionTable huge = CrossSectionTable::constant(1e-3, AngularLaw::isotropic());
    auto ens2 = sample_boltzmann(trap, mass_KRb, T200, 10'000, 2);
    CHECK_THROWS_AS(McEngine(ens2, trap, badg, huge), std::invalid_argument);
}

TEST_CASE("self-consistent truncation energy") {
    // fixed point: eta_t = eta * mean(eta_t) with the truncated-gamma mean
    double T = T200;
    for (double eta : {2.5, 4.0, 6.0}) {
        double eps = solve_truncation_energy(2, T, eta);
        double ht = eps / (k_B * T);
        double mean = gamma_low3(ht) / gamma_low2(ht);
        CHECK(ht == doctest::Approx(eta * mean).epsilon(1e-9));
        double eps3 = solve_truncation_energy(3, T, eta);
        double h3 = eps3 / (k_B * T);
        CHECK(h3 == doctest::Approx(eta * gamma_low4(h3) / gamma_low3(h3)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(solve_truncation_energy(2, T, 1.2), std::invalid_argument);
}

TEST_CASE("closed system sanity: no losses, no drift") {
    auto trap = TrapPotential::harmonic2d(w0, w0);
    EvaporationParams p;
    p.trap = trap;
    p.mass = mass_KRb;
    p.T0 = T200;
    p.N0 = 3000;
    p.eta = 50.0;  // cut far above every particle
    p.lambda = lambda_for_rate(0.3 * w0, 3000, T200, w0 * w0);
    p.zeta = 0.0;
    p.t_max = 0.3;
    p.seed = 77;
    TrajectoryRecord rec = run_evaporation_trajectory(p);
    CHECK(rec.N.back() == double(p.N0));
    CHECK(rec.T.back() == doctest::Approx(rec.T.front()).epsilon(0.02));
}

TEST_CASE("trajectory csv schema") {
    TrajectoryRecord rec;
    rec.dim = 2;
    rec.t = {0.0, 0.1};
    rec.N = {100, 90};
    rec.T = {2e-7, 1.9e-7};
    rec.Tx = {2e-7, 1.9e-7};
    rec.Ty = {2e-7, 1.9e-7};
    rec.Omega = {0.1, 0.12};
    rec.E = {1e-27, 9e-28};
    rec.n_elastic = {0, 50};
    rec.n_reactive = {0, 4};
    rec.n_evap = {0, 6};
    rec.write_csv("traj_tmp.csv");
    std::ifstream f("traj_tmp.csv");
    std::string header, row1, row2, extra;
    std::getline(f, header);
    CHECK(header == "t_s,N,T_nK,Tx_nK,Ty_nK,Omega,n_elastic,n_reactive,n_evap");
    CHECK(bool(std::getline(f, row1)));
    CHECK(bool(std::getline(f, row2)));
    CHECK(!std::getline(f, extra));
    CHECK(row2.substr(row2.size() - 6) == "50,4,6");
    std::remove("traj_tmp.csv");
}

TEST_CASE("thermalization smoke test: isotropic kappa in range") {
    ThermalizationParams p;
    p.trap = TrapPotential::harmonic2d(w0, detune * w0);
    p.mass = mass_KRb;
    p.T = T200;
    p.xi = 0.2;  // max imbalance: relaxation noise scales as 1/(xi sqrt(N))
    p.law = AngularLaw::isotropic();
    p.N = 20'000;
    p.lambda = lambda_for_rate(0.15 * w0, 20'000, T200, w0 * detune * w0);
    p.seed = 11;
    p.n_decay = 1.2;  // fit window ends at 0.5 r0 ~ 0.7 tau
    KappaEstimate est = run_thermalization_experiment(p);
    CHECK(est.fit_ok);
    CHECK(est.kappa == doctest::Approx(2.13).epsilon(0.2));
}
