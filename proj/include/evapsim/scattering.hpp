#pragma once
#include <string>
#include <vector>
#include "evapsim/rng.hpp"

namespace evapsim {

// Two-term angular collision law: density per radian
//   p(phi) = a cos^{2 alpha}(phi) + a' cos^{2 alpha'}(phi),  phi in [0, 2pi).
// Weights are chosen so the integral over a full turn is ~1; the overall
// cross-section magnitude lives in CrossSectionTable.
struct AngularLaw {
    double a = 1.0 / (2.0 * 3.14159265358979323846);
    double a_prime = 0.0;
    double alpha = 0.0;
    double alpha_prime = 0.0;

    AngularLaw() = default;
    AngularLaw(double a_, double ap_, double al_, double alp_);

    double eval(double phi) const;                 // density per radian
    double normalization_integral() const;         // a I(alpha) + a' I(alpha')
    bool is_normalized(double tol = 0.05) const;

    static AngularLaw isotropic() { return AngularLaw(1.0 / (2.0 * 3.14159265358979323846), 0.0, 0.0, 0.0); }
    static AngularLaw single_term(double alpha);   // normalized a cos^{2 alpha}
};

double eval_angular_law(const AngularLaw& law, double phi);

// Deterministic inverse-CDF sampler. The density is tabulated piecewise-
// linear on a fine phi grid and the quadratic cell CDF is inverted exactly,
// which stays unbiased even where the density touches zero (the inverse CDF
// has infinite slope there, so plain linear inversion would smear mass
// across the forbidden angles).
class AngleSampler {
public:
    explicit AngleSampler(const AngularLaw& law, int nodes = 65536);
    double sample(double u) const;                 // u in [0,1) -> phi in [0,2pi)
    double sample(Rng& rng) const { return sample(rng.uniform()); }
    double cdf(double phi) const;                  // for distribution tests
private:
    std::vector<double> p_;                        // density at uniform phi nodes
    std::vector<double> c_;                        // CDF at uniform phi nodes
    double h_;                                     // phi grid step
    int n_;
};

double sample_scattering_angle(const AngularLaw& law, double u);

// 3D outgoing direction: polar angle about the incoming relative-velocity
// axis with density ∝ cos^{2 alpha}(theta) over solid angle; closed-form
// inverse transform, azimuth uniform.
double sample_polar_cos_3d(double alpha, double u);  // returns cos(theta')

// Energy-dependent cross sections: log-log interpolation through tabulated
// points, threshold-law extrapolation below the table.
class CrossSectionTable {
public:
    enum class ReactiveMode { Unset, ConstantRatio, PowerLaw };

    static CrossSectionTable built_in();           // the four-point KRb table
    static CrossSectionTable load_csv(const std::string& path);
    static CrossSectionTable constant(double lambda_el_m, const AngularLaw& law);

    void set_constant_ratio(double zeta);
    void set_power_law(double zeta_ref, double E_ref);   // λ_re ∝ sqrt(E), anchored

    double total_elastic(double E_c) const;        // metres (2D) / m^2-style scale handled by caller
    double total_reactive(double E_c) const;
    const AngularLaw& angular_law_at(double E_c) const;  // nearest tabulated law in log E

    std::size_t size() const { return E_.size(); }
    double energy_at(std::size_t i) const { return E_[i]; }
    double elastic_at(std::size_t i) const { return lam_[i]; }
    const AngularLaw& law_at(std::size_t i) const { return laws_[i]; }

private:
    CrossSectionTable() = default;
    void push_row(double E_c, double lambda_el, const AngularLaw& law);
    void validate() const;
    std::vector<double> E_;       // collision energy, joule
    std::vector<double> lam_;     // elastic cross-section, metre
    std::vector<AngularLaw> laws_;
    ReactiveMode mode_ = ReactiveMode::Unset;
    double zeta_ = 0.0;           // constant-ratio mode
    double c_power_ = 0.0;        // power-law mode coefficient, metre/sqrt(joule)
};

// Closed-form thermalization collision numbers.
double kappa_single_2d(double alpha);                       // (16/15)(2a+2)
double kappa_two_term_2d(const AngularLaw& law);            // normalized-weight form
double kappa_3d(double alpha);                              // (5/6)(2a+3)

} // namespace evapsim
