#pragma once

namespace evapsim {

// SI values (CODATA 2018)
inline constexpr double hbar = 1.054571817e-34;   // J s
inline constexpr double k_B  = 1.380649e-23;      // J/K
inline constexpr double amu  = 1.66053906660e-27; // kg

// fermionic KRb molecule (40K + 87Rb)
inline constexpr double mass_KRb = (39.9639985 + 86.9091805) * amu;

inline constexpr double pi = 3.14159265358979323846;

// unit helpers
inline constexpr double nK = 1e-9;       // kelvin
inline constexpr double cm = 1e-2;       // metre

} // namespace evapsim
