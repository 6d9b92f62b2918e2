#pragma once
#include <cmath>
#include <stdexcept>
#include "evapsim/constants.hpp"

namespace evapsim {

// I(x) = \int_0^{2pi} cos^{2x}(phi) dphi = 2 sqrt(pi) Gamma(x+1/2) / Gamma(x+1)
inline double cos_pow_integral(double x) {
    if (x < 0.0) throw std::invalid_argument("cos_pow_integral: exponent must be >= 0");
    return 2.0 * std::sqrt(pi) * std::exp(std::lgamma(x + 0.5) - std::lgamma(x + 1.0));
}

// cos^{2a}(phi) evaluated as (cos^2 phi)^a so non-integer a is well-defined
// for all phi (pow of a negative base would return NaN).
inline double cos_pow2(double phi, double a) {
    double c = std::cos(phi);
    double c2 = c * c;
    if (c2 <= 0.0) return (a == 0.0) ? 1.0 : 0.0;
    return std::pow(c2, a);
}

// Lower incomplete gamma of integer order: P_k(x) = \int_0^x t^{k-1} e^{-t} dt,
// evaluated in closed form (k = 2..4 is all the kinetics needs).
inline double gamma_low2(double x) { return 1.0 - (1.0 + x) * std::exp(-x); }
inline double gamma_low3(double x) { return 2.0 - (2.0 + x * (2.0 + x)) * std::exp(-x); }
inline double gamma_low4(double x) { return 6.0 - (6.0 + x * (6.0 + x * (3.0 + x))) * std::exp(-x); }

} // namespace evapsim
