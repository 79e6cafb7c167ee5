#pragma once

// Focused-Gaussian optical dipole trap: potential, depth, harmonic
// frequencies and the thermal atom-cloud profile they produce.

#include <cmath>
#include <stdexcept>
#include <string>

#include "cavkit/constants.hpp"

namespace cavkit {

struct GaussianBeam {
    double wavelength;    // m
    double waist;         // m, 1/e^2 radius in the focus plane
    double power;         // W
    double focus_height;  // m, beam axis height above the chip surface

    void validate() const {
        if (!(wavelength > 0.0) || !(waist > 0.0) || !(power > 0.0) || !(focus_height > 0.0))
            throw std::invalid_argument("GaussianBeam: all parameters must be strictly positive");
    }

    double angular_frequency() const { return 2.0 * constants::pi * constants::c0 / wavelength; }
};

// Paper-standard trapping beam: 800 nm, 15 um waist, 50 mW, 80 um above chip.
inline GaussianBeam standard_beam() { return GaussianBeam{800e-9, 15e-6, 50e-3, 80e-6}; }

struct AtomicSpecies {
    double mass;       // kg
    double omega_d1;   // rad/s, lower transition
    double omega_d2;   // rad/s, upper transition
    double gamma_d1;   // rad/s
    double gamma_d2;   // rad/s

    void validate() const {
        if (!(omega_d2 > omega_d1) || !(omega_d1 > 0.0) || !(gamma_d1 > 0.0) || !(gamma_d2 > 0.0) ||
            !(mass > 0.0))
            throw std::invalid_argument("AtomicSpecies: require omega_d2 > omega_d1 > 0 and positive widths/mass");
    }
};

// 87Rb with the D1/D2 constants used throughout: 377/384 THz, 5.75/6.07 MHz, 86.9 Da.
inline AtomicSpecies rubidium87() {
    const double twopi = 2.0 * constants::pi;
    return AtomicSpecies{86.9 * constants::dalton, twopi * 377e12, twopi * 384e12,
                         twopi * 5.75e6, twopi * 6.07e6};
}

inline double rayleigh_length(const GaussianBeam& beam) {
    beam.validate();
    return constants::pi * beam.waist * beam.waist / beam.wavelength;
}

// 1/e^2 radius at longitudinal offset y from the focus plane.
inline double beam_radius(const GaussianBeam& beam, double y) {
    const double lr = rayleigh_length(beam);
    return beam.waist * std::sqrt(1.0 + (y / lr) * (y / lr));
}

// Intensity at radial distance r from the axis and longitudinal offset y.
inline double intensity(const GaussianBeam& beam, double r, double y) {
    const double w = beam_radius(beam, y);
    const double peak = 2.0 * beam.power / (constants::pi * w * w);
    return peak * std::exp(-2.0 * r * r / (w * w));
}

namespace detail {

inline void reject_resonant(const GaussianBeam& beam, const AtomicSpecies& sp) {
    const double w = beam.angular_frequency();
    if (w == sp.omega_d1 || w == sp.omega_d2)
        throw std::domain_error("trap: laser frequency resonant with an atomic transition");
}

// Ground-state polarizability prefactor of the two-line model, in J per (W/m^2).
// Negative for red detuning; includes the counter-rotating terms of both lines.
inline double dipole_prefactor(const GaussianBeam& beam, const AtomicSpecies& sp) {
    reject_resonant(beam, sp);
    const double w = beam.angular_frequency();
    const double c2 = constants::c0 * constants::c0;
    const double w1 = sp.omega_d1, w2 = sp.omega_d2;
    const double t1 = sp.gamma_d1 / (w1 - w) + sp.gamma_d1 / (w1 + w);
    const double t2 = sp.gamma_d2 / (w2 - w) + sp.gamma_d2 / (w2 + w);
    return -constants::pi * c2 / (2.0 * w1 * w1 * w1) * t1
           - constants::pi * c2 / (w2 * w2 * w2) * t2;
}

}  // namespace detail

// Trap potential in J at (x, y, z), z measured from the chip surface.
inline double trap_potential(const GaussianBeam& beam, const AtomicSpecies& sp, double x,
                             double y, double z) {
    beam.validate();
    sp.validate();
    const double pref = detail::dipole_prefactor(beam, sp);
    const double zt = z - beam.focus_height;
    const double r = std::hypot(x, zt);
    return pref * intensity(beam, r, y);
}

// |U| at the trap center, in J.
inline double trap_depth(const GaussianBeam& beam, const AtomicSpecies& sp) {
    return std::abs(trap_potential(beam, sp, 0.0, 0.0, beam.focus_height));
}

struct TrapFrequencies {
    double radial;  // rad/s
    double axial;   // rad/s (beam propagation direction)
};

// Harmonic frequencies from the curvature of the Gaussian/Lorentzian profile:
// w_r = sqrt(4|U0| / (m w^2)), w_y = sqrt(2|U0| / (m lR^2)).
inline TrapFrequencies oscillation_frequencies(const GaussianBeam& beam, const AtomicSpecies& sp) {
    const double u0 = trap_depth(beam, sp);
    if (!(u0 > 0.0)) throw std::domain_error("oscillation_frequencies: zero trap depth");
    const double lr = rayleigh_length(beam);
    return TrapFrequencies{std::sqrt(4.0 * u0 / (sp.mass * beam.waist * beam.waist)),
                           std::sqrt(2.0 * u0 / (sp.mass * lr * lr))};
}

struct AtomCloud {
    double sigma_r;      // m
    double sigma_y;      // m
    double temperature;  // K
    double atom_count;
    bool harmonic_warning = false;  // set when T exceeds a tenth of the trap depth

    double diameter() const { return 6.0 * sigma_r; }  // d_Rb
    double length() const { return 6.0 * sigma_y; }    // l_Rb

    // Single-particle density, normalized to 1 over all space. Coordinates are
    // relative to the cloud center, radial r^2 = x^2 + zt^2.
    double density(double x, double y, double zt) const {
        const double twopi = 2.0 * constants::pi;
        const double norm = 1.0 / (std::pow(twopi, 1.5) * sigma_r * sigma_r * sigma_y);
        return norm * std::exp(-(x * x + zt * zt) / (2.0 * sigma_r * sigma_r)
                               - y * y / (2.0 * sigma_y * sigma_y));
    }
};

// Thermal cloud in the harmonic approximation, sigma_q^2 = kB T / (m w_q^2).
inline AtomCloud cloud_profile(const GaussianBeam& beam, const AtomicSpecies& sp,
                               double temperature, double atom_count) {
    if (!(temperature > 0.0)) throw std::invalid_argument("cloud_profile: temperature must be > 0");
    if (atom_count < 0.0) throw std::invalid_argument("cloud_profile: atom count must be >= 0");
    const double depth = trap_depth(beam, sp);
    if (constants::kB * temperature > depth)
        throw std::domain_error("cloud_profile: temperature exceeds trap depth, harmonic model invalid");
    const TrapFrequencies f = oscillation_frequencies(beam, sp);
    AtomCloud cloud;
    cloud.sigma_r = std::sqrt(constants::kB * temperature / (sp.mass * f.radial * f.radial));
    cloud.sigma_y = std::sqrt(constants::kB * temperature / (sp.mass * f.axial * f.axial));
    cloud.temperature = temperature;
    cloud.atom_count = atom_count;
    cloud.harmonic_warning = constants::kB * temperature > 0.1 * depth;
    return cloud;
}

}  // namespace cavkit
