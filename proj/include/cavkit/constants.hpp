#pragma once

// SI constants used across the library. CODATA-2018 exact/recommended values.

namespace cavkit::constants {

inline constexpr double c0      = 2.99792458e8;       // vacuum speed of light [m/s]
inline constexpr double hbar    = 1.054571817e-34;    // reduced Planck constant [J s]
inline constexpr double h       = 6.62607015e-34;     // Planck constant [J s]
inline constexpr double kB      = 1.380649e-23;       // Boltzmann constant [J/K]
inline constexpr double eps0    = 8.8541878128e-12;   // vacuum permittivity [F/m]
inline constexpr double qe      = 1.602176634e-19;    // elementary charge [C]
inline constexpr double a0      = 5.29177210903e-11;  // Bohr radius [m]
inline constexpr double dalton  = 1.66053906660e-27;  // unified atomic mass unit [kg]
inline constexpr double pi      = 3.14159265358979323846;

}  // namespace cavkit::constants
