#include "evapsim/scattering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "evapsim/constants.hpp"
#include "evapsim/special.hpp"

namespace evapsim {

AngularLaw::AngularLaw(double a_, double ap_, double al_, double alp_)
    : a(a_), a_prime(ap_), alpha(al_), alpha_prime(alp_) {
    if (a < 0.0 || a_prime < 0.0 || alpha < 0.0 || alpha_prime < 0.0)
        throw std::invalid_argument("AngularLaw: parameters must be non-negative");
    if (a + a_prime <= 0.0)
        throw std::invalid_argument("AngularLaw: at least one weight must be positive");
}

double AngularLaw::eval(double phi) const {
    return a * cos_pow2(phi, alpha) + a_prime * cos_pow2(phi, alpha_prime);
}

double AngularLaw::normalization_integral() const {
    return a * cos_pow_integral(alpha) + a_prime * cos_pow_integral(alpha_prime);
}

bool AngularLaw::is_normalized(double tol) const {
    return std::abs(normalization_integral() - 1.0) <= tol;
}

AngularLaw AngularLaw::single_term(double alpha) {
    return AngularLaw(1.0 / cos_pow_integral(alpha), 0.0, alpha, 0.0);
}

double eval_angular_law(const AngularLaw& law, double phi) { return law.eval(phi); }

AngleSampler::AngleSampler(const AngularLaw& law, int nodes) : n_(nodes) {
    if (nodes < 4096) throw std::invalid_argument("AngleSampler: need >= 4096 nodes");
    h_ = 2.0 * pi / n_;
    p_.resize(n_ + 1);
    c_.assign(n_ + 1, 0.0);
    for (int i = 0; i <= n_; ++i) p_[i] = law.eval(i * h_);
    for (int i = 1; i <= n_; ++i) c_[i] = c_[i - 1] + 0.5 * h_ * (p_[i - 1] + p_[i]);
    const double total = c_[n_];
    if (!(total > 0.0)) throw std::invalid_argument("AngleSampler: law integrates to zero");
    for (auto& v : c_) v /= total;
    for (auto& v : p_) v /= total;
    c_[n_] = 1.0;
}

double AngleSampler::sample(double u) const {
    if (u < 0.0 || u >= 1.0) u = std::min(std::max(u, 0.0), 0x1.fffffffffffffp-1);
    int k = int(std::upper_bound(c_.begin(), c_.end(), u) - c_.begin()) - 1;
    k = std::min(std::max(k, 0), n_ - 1);
    // invert the quadratic cell CDF c_k + p_k s + a s^2 / 2 exactly
    double d = u - c_[k];
    double a = (p_[k + 1] - p_[k]) / h_;
    double disc = p_[k] * p_[k] + 2.0 * a * d;
    double denom = p_[k] + std::sqrt(std::max(disc, 0.0));
    double s = denom > 0.0 ? 2.0 * d / denom : 0.5 * h_;
    return k * h_ + std::min(s, h_);
}

double AngleSampler::cdf(double phi) const {
    int k = std::min(std::max(int(phi / h_), 0), n_ - 1);
    double s = phi - k * h_;
    double a = (p_[k + 1] - p_[k]) / h_;
    return c_[k] + p_[k] * s + 0.5 * a * s * s;
}

double sample_scattering_angle(const AngularLaw& law, double u) {
    AngleSampler s(law);
    return s.sample(u);
}

double sample_polar_cos_3d(double alpha, double u) {
    // density over solid angle ∝ |cos t|^{2 alpha}; with c = cos t the CDF in c
    // is (1 + sign(c)|c|^{2 alpha + 1})/2, inverted in closed form
    double s = 2.0 * u - 1.0;
    double mag = std::pow(std::abs(s), 1.0 / (2.0 * alpha + 1.0));
    return s < 0.0 ? -mag : mag;
}

CrossSectionTable CrossSectionTable::built_in() {
    CrossSectionTable t;
    const double EnK = k_B * nK;
    t.push_row(1.0 * EnK, 0.38e-6 * cm, AngularLaw(0.31, 0.0005, 1.00, 2.19));
    t.push_row(10.0 * EnK, 3.67e-6 * cm, AngularLaw(0.27, 0.06, 1.00, 2.09));
    t.push_row(100.0 * EnK, 5.99e-6 * cm, AngularLaw(0.24, 0.21, 1.19, 7.03));
    t.push_row(1000.0 * EnK, 3.42e-6 * cm, AngularLaw(0.34, 0.40, 2.47, 26.40));
    t.validate();
    return t;
}

CrossSectionTable CrossSectionTable::constant(double lambda_el_m, const AngularLaw& law) {
    CrossSectionTable t;
    t.push_row(k_B * nK, lambda_el_m, law);
    t.push_row(1e6 * k_B * nK, lambda_el_m, law);
    t.validate();
    return t;
}

CrossSectionTable CrossSectionTable::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cross-section csv: cannot open " + path);
    CrossSectionTable t;
    std::string line;
    bool header_seen = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            std::string squashed;
            for (char ch : line) if (!isspace((unsigned char)ch)) squashed += ch;
            if (squashed != "E_c_nK,lambda_el_cm,a,a_prime,alpha,alpha_prime")
                throw std::runtime_error("cross-section csv: unexpected header at line " +
                                         std::to_string(lineno) + ": " + line);
            header_seen = true;
            continue;
        }
        std::stringstream ss(line);
        double v[6];
        char comma;
        for (int k = 0; k < 6; ++k) {
            if (!(ss >> v[k])) throw std::runtime_error("cross-section csv: bad row at line " + std::to_string(lineno));
            if (k < 5 && !(ss >> comma)) throw std::runtime_error("cross-section csv: bad row at line " + std::to_string(lineno));
        }
        t.push_row(v[0] * k_B * nK, v[1] * cm, AngularLaw(v[2], v[3], v[4], v[5]));
    }
    t.validate();
    return t;
}

void CrossSectionTable::push_row(double E_c, double lambda_el, const AngularLaw& law) {
    E_.push_back(E_c);
    lam_.push_back(lambda_el);
    laws_.push_back(law);
}

void CrossSectionTable::validate() const {
    if (E_.empty()) throw std::runtime_error("CrossSectionTable: empty table");
    for (std::size_t i = 0; i < E_.size(); ++i) {
        if (!(lam_[i] > 0.0) || !(E_[i] > 0.0))
            throw std::runtime_error("CrossSectionTable: energies and cross-sections must be positive");
        if (i > 0 && !(E_[i] > E_[i - 1]))
            throw std::runtime_error("CrossSectionTable: energies must be strictly increasing");
    }
}

void CrossSectionTable::set_constant_ratio(double zeta) {
    if (zeta < 0.0) throw std::invalid_argument("reactive ratio must be >= 0");
    mode_ = ReactiveMode::ConstantRatio;
    zeta_ = zeta;
}

void CrossSectionTable::set_power_law(double zeta_ref, double E_ref) {
    if (zeta_ref < 0.0 || !(E_ref > 0.0)) throw std::invalid_argument("bad power-law anchor");
    mode_ = ReactiveMode::PowerLaw;
    c_power_ = zeta_ref * total_elastic(E_ref) / std::sqrt(E_ref);
}

double CrossSectionTable::total_elastic(double E_c) const {
    if (!(E_c > 0.0)) throw std::invalid_argument("total_elastic: E_c must be > 0");
    if (E_.size() == 1) return lam_[0];
    if (E_c <= E_.front())
        return lam_.front() * std::pow(E_c / E_.front(), 1.5);
    std::size_t hi = std::upper_bound(E_.begin(), E_.end(), E_c) - E_.begin();
    if (hi >= E_.size()) hi = E_.size() - 1;       // hold last log-log slope
    std::size_t lo = hi - 1;
    double t = (std::log(E_c) - std::log(E_[lo])) / (std::log(E_[hi]) - std::log(E_[lo]));
    return std::exp(std::log(lam_[lo]) + t * (std::log(lam_[hi]) - std::log(lam_[lo])));
}

double CrossSectionTable::total_reactive(double E_c) const {
    switch (mode_) {
        case ReactiveMode::ConstantRatio: return zeta_ * total_elastic(E_c);
        case ReactiveMode::PowerLaw: return c_power_ * std::sqrt(E_c);
        case ReactiveMode::Unset: break;
    }
    throw std::runtime_error("CrossSectionTable: reactive mode not configured");
}

const AngularLaw& CrossSectionTable::angular_law_at(double E_c) const {
    // nearest tabulated row in log energy
    if (!(E_c > 0.0)) throw std::invalid_argument("angular_law_at: E_c must be > 0");
    std::size_t best = 0;
    double bestd = 1e300;
    for (std::size_t i = 0; i < E_.size(); ++i) {
        double d = std::abs(std::log(E_c / E_[i]));
        if (d < bestd) { bestd = d; best = i; }
    }
    return laws_[best];
}

double kappa_single_2d(double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("kappa_single_2d: alpha must be >= 0");
    return (16.0 / 15.0) * (2.0 * alpha + 2.0);
}

double kappa_two_term_2d(const AngularLaw& law) {
    double Ia = law.a * cos_pow_integral(law.alpha);
    double Ib = law.a_prime * cos_pow_integral(law.alpha_prime);
    double norm = Ia + Ib;
    if (!(norm > 0.0)) throw std::invalid_argument("kappa_two_term_2d: both weights zero");
    double w = Ia / norm, wp = Ib / norm;
    return (16.0 / 15.0) /
           (w / (2.0 * law.alpha + 2.0) + wp / (2.0 * law.alpha_prime + 2.0));
}

double kappa_3d(double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("kappa_3d: alpha must be >= 0");
    return (5.0 / 6.0) * (2.0 * alpha + 3.0);
}

} // namespace evapsim
