#pragma once

// Laser-exposure budget for the superconductor: direct Gaussian-tail power on
// the chip, off-resonant photon scattering by the trapped atoms, and the
// inverse problems (critical chip width, minimum flip-chip plate distance).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "cavkit/beam_trap.hpp"
#include "cavkit/constants.hpp"

namespace cavkit {

struct ExposureBudget {
    double direct_power;     // W, Gaussian tail hitting one chip
    double scattering_rate;  // rad/s per atom
    double scattered_power;  // W, total re-scattered by the cloud
    double power_limit;      // W, acceptance threshold
};

// Default acceptance threshold for laser power on the superconductor.
inline constexpr double default_power_limit = 0.1e-9;  // W

// Power in the Gaussian tail below the surface line of a single chip of width
// l_ch under the beam axis at height z0: P/2 * erfc(sqrt(2) z0 / w(l_ch/2)).
inline double direct_power(const GaussianBeam& beam, double z0, double chip_width) {
    beam.validate();
    if (!(z0 > 0.0)) throw std::invalid_argument("direct_power: z0 must be > 0");
    if (chip_width < 0.0) throw std::invalid_argument("direct_power: chip width must be >= 0");
    const double we = beam_radius(beam, 0.5 * chip_width);
    return 0.5 * beam.power * std::erfc(std::sqrt(2.0) * z0 / we);
}

// Photon scattering rate at radial/longitudinal offset (r, y), rad/s per
// atom; defaults to the trap center where the intensity is maximal.
inline double scattering_rate(const GaussianBeam& beam, const AtomicSpecies& sp, double r = 0.0,
                              double y = 0.0) {
    beam.validate();
    sp.validate();
    detail::reject_resonant(beam, sp);
    const double w = beam.angular_frequency();
    const double c2 = constants::c0 * constants::c0;
    const double w1 = sp.omega_d1, w2 = sp.omega_d2;
    const double t1 = sp.gamma_d1 / (w1 - w) + sp.gamma_d1 / (w1 + w);
    const double t2 = sp.gamma_d2 / (w2 - w) + sp.gamma_d2 / (w2 + w);
    const double r1 = w / w1, r2 = w / w2;
    const double per_intensity =
        constants::pi * c2 / (2.0 * constants::hbar * w1 * w1 * w1) * r1 * r1 * r1 * t1 * t1 +
        constants::pi * c2 / (constants::hbar * w2 * w2 * w2) * r2 * r2 * r2 * t2 * t2;
    return per_intensity * intensity(beam, r, y);
}

inline double scattered_power(const GaussianBeam& beam, const AtomicSpecies& sp,
                              double atom_count) {
    if (atom_count < 0.0) throw std::invalid_argument("scattered_power: atom count must be >= 0");
    return constants::hbar * beam.angular_frequency() * scattering_rate(beam, sp) * atom_count;
}

// Standoff ratio r = z0/w_e at which the single-chip tail power equals
// power_limit. Bisection on log(P_dir), which is nearly linear in r^2.
inline double standoff_ratio(const GaussianBeam& beam, double power_limit) {
    beam.validate();
    if (!(power_limit > 0.0)) throw std::invalid_argument("standoff_ratio: power limit must be > 0");
    const double target = 2.0 * power_limit / beam.power;  // erfc(sqrt(2) r) = target
    if (target >= 1.0) return 0.0;                         // no standoff needed
    auto logp = [](double r) { return std::log(std::erfc(std::sqrt(2.0) * r)); };
    const double lt = std::log(target);
    double lo = 0.0, hi = 10.0;
    if (logp(hi) > lt) throw std::domain_error("standoff_ratio: limit below resolvable tail");
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (logp(mid) > lt ? lo : hi) = mid;
        if (hi - lo < 1e-6 * hi) break;
    }
    return 0.5 * (lo + hi);
}

// Largest chip width keeping the single-chip tail power at or below the limit,
// for a beam axis at height z0. Empty when even a zero-width chip exceeds it.
inline std::optional<double> critical_chip_width(const GaussianBeam& beam, double z0,
                                                 double power_limit) {
    if (!(z0 > 0.0)) throw std::invalid_argument("critical_chip_width: z0 must be > 0");
    const double re = standoff_ratio(beam, power_limit);
    if (re <= 0.0) return std::numeric_limits<double>::infinity();  // limit above P/2
    // The tail power stays below the limit while w(l_ch/2) <= z0/re. The beam
    // radius is smallest at the focus, so z0/re < w_dp admits no width at all.
    const double ratio = z0 / (re * beam.waist);
    if (ratio < 1.0) return std::nullopt;  // no safe width at this height
    const double lr = rayleigh_length(beam);
    return 2.0 * lr * std::sqrt(ratio * ratio - 1.0);
}

// Minimum flip-chip plate distance d = 2 r_e w_dp for a vanishing chip width.
// The limit applies to a single chip's intercepted power, cf. standoff_ratio.
inline double min_plate_distance(const GaussianBeam& beam, double power_limit) {
    return 2.0 * standoff_ratio(beam, power_limit) * beam.waist;
}

// One row of the flip-chip layout table: plate distance d fixes the plate
// width a = d, plate length l = max(2d, 250 um), the 45-degree tapered chip
// width l_ch = l + a + 250 um, and the critical chip width at which the two
// chips together would intercept power_limit (each chip sees half the budget).
struct FlipChipLayout {
    double plate_distance;   // d
    double plate_width;      // a = d
    double plate_length;     // l
    double chip_width;       // l_ch
    double chip_width_crit;  // l_ch^crit, NaN when no width is safe
};

inline FlipChipLayout flipchip_layout(const GaussianBeam& beam, double plate_distance,
                                      double power_limit = default_power_limit) {
    if (!(plate_distance > 0.0))
        throw std::invalid_argument("flipchip_layout: plate distance must be > 0");
    FlipChipLayout row;
    row.plate_distance = plate_distance;
    row.plate_width = plate_distance;
    row.plate_length = std::max(2.0 * plate_distance, 250e-6);
    row.chip_width = row.plate_length + row.plate_width + 250e-6;
    const auto crit = critical_chip_width(beam, 0.5 * plate_distance, 0.5 * power_limit);
    row.chip_width_crit = crit ? *crit : std::nan("");
    return row;
}

}  // namespace cavkit
