#pragma once

// Lumped + transmission-line model of the resonator: the inductance wire is a
// short-ended CPW of length s_tilde = s - q feeding a plate capacitance C0 and
// a lumped inductance L0. Provides the resonance condition, wire-length
// solving, the standing-wave capacitance correction, zero-point field,
// coupling rate and quality-factor formulas.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cavkit/constants.hpp"

namespace cavkit {

struct ResonatorModel {
    double gap_capacitance = 0.0;                  // C0 [F], plate-to-ground gap, from field solve
    double cpw_capacitance_per_length = 56e-12;    // C' [F/m]
    double phase_velocity = constants::c0 / std::sqrt(5.5);  // v_phi [m/s], eps_eff = (10+1)/2
    double lumped_inductance = 0.7e-9;             // L0 [H], wire part far from ground
    double wire_length = 0.0;                      // s [m]
    double plain_wire_length = 400e-6;             // q [m], contributes no capacitance
    double shunt_capacitance = 0.0;                // C_s [F], 0 = not configured
    double feedline_impedance = 50.0;              // Z0 [Ohm]

    double characteristic_impedance() const {      // Z1 = 1 / (v_phi C')
        return 1.0 / (phase_velocity * cpw_capacitance_per_length);
    }
    double cpw_length() const { return wire_length - plain_wire_length; }  // s_tilde

    void validate() const {
        if (!(gap_capacitance > 0.0)) throw std::invalid_argument("ResonatorModel: C0 must be > 0");
        if (!(cpw_capacitance_per_length > 0.0) || !(phase_velocity > 0.0))
            throw std::invalid_argument("ResonatorModel: C' and v_phi must be > 0");
        if (lumped_inductance < 0.0) throw std::invalid_argument("ResonatorModel: L0 must be >= 0");
        if (cpw_length() < 0.0) throw std::invalid_argument("ResonatorModel: require s >= q");
    }
};

// Reactance of the short-ended CPW seen from the plate: Z1 tan(2 pi s_tilde / lambda).
inline double cpw_input_impedance(double z1, double s_tilde, double lambda) {
    if (s_tilde < 0.0) throw std::invalid_argument("cpw_input_impedance: s_tilde must be >= 0");
    if (!(lambda > 0.0)) throw std::invalid_argument("cpw_input_impedance: lambda must be > 0");
    if (std::abs(s_tilde - 0.25 * lambda) < 1e-3 * lambda)
        throw std::domain_error("cpw_input_impedance: s_tilde too close to the quarter-wave pole");
    return z1 * std::tan(2.0 * constants::pi * s_tilde / lambda);
}

namespace detail {

// Residual of the resonance condition Z1 tan(w st/v) = 1/(w C0) - w L0,
// strictly increasing in w on (0, pole).
inline double resonance_residual(const ResonatorModel& m, double omega) {
    const double st = m.cpw_length();
    return m.characteristic_impedance() * std::tan(omega * st / m.phase_velocity)
           - 1.0 / (omega * m.gap_capacitance) + omega * m.lumped_inductance;
}

}  // namespace detail

// Lowest root of the resonance condition, below the quarter-wave pole.
inline double resonance_frequency(const ResonatorModel& m) {
    m.validate();
    const double st = m.cpw_length();
    const double lumped = 1.0 / std::sqrt(std::max(m.lumped_inductance, 1e-30) * m.gap_capacitance);
    double hi = st > 0.0 ? 0.999999 * 0.5 * constants::pi * m.phase_velocity / st : 10.0 * lumped;
    double lo = 1e-9 * hi;
    if (detail::resonance_residual(m, hi) <= 0.0)
        throw std::domain_error("resonance_frequency: no root below the quarter-wave pole");
    for (int i = 0; i < 200 && (hi - lo) > 1e-16 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (detail::resonance_residual(m, mid) < 0.0 ? lo : hi) = mid;
    }
    double omega = 0.5 * (lo + hi);
    // Newton polish; the derivative is strictly positive.
    for (int i = 0; i < 8; ++i) {
        const double z1 = m.characteristic_impedance();
        const double c = std::cos(omega * st / m.phase_velocity);
        const double deriv = z1 * st / (m.phase_velocity * c * c)
                             + 1.0 / (omega * omega * m.gap_capacitance) + m.lumped_inductance;
        const double step = detail::resonance_residual(m, omega) / deriv;
        omega -= step;
        if (std::abs(step) < 1e-15 * omega) break;
    }
    return omega;
}

// Wire length s giving resonance at target omega0, with s_tilde in [0, lambda/4).
inline double solve_wire_length(const ResonatorModel& m, double target_omega0) {
    if (!(target_omega0 > 0.0)) throw std::invalid_argument("solve_wire_length: target must be > 0");
    if (!(m.gap_capacitance > 0.0)) throw std::invalid_argument("solve_wire_length: C0 must be > 0");
    const double x = (1.0 / (target_omega0 * m.gap_capacitance)
                      - target_omega0 * m.lumped_inductance) / m.characteristic_impedance();
    if (x < 0.0) {
        const double omega_max = 1.0 / std::sqrt(m.lumped_inductance * m.gap_capacitance);
        throw std::domain_error("solve_wire_length: target above the lumped-circuit limit of "
                                + std::to_string(omega_max / (2.0 * constants::pi)) + " Hz");
    }
    const double s_tilde = std::atan(x) * m.phase_velocity / target_omega0;
    return s_tilde + m.plain_wire_length;
}

// Effective capacitance contribution of the CPW standing wave:
// C_CPW = (w C0 Z1)^2 C' (st - lambda/(4 pi) sin(4 pi st/lambda)) / (2 cos^2(2 pi st/lambda)).
// The resonance wavelength follows from the arguments, lambda0 = 2 pi / (w0 Z1 C').
inline double cpw_capacitance_correction(double s_tilde, double omega0, double c0_gap, double z1,
                                         double cprime) {
    if (s_tilde < 0.0) throw std::invalid_argument("cpw_capacitance_correction: s_tilde must be >= 0");
    if (!(omega0 > 0.0) || !(c0_gap > 0.0) || !(z1 > 0.0) || !(cprime > 0.0))
        throw std::invalid_argument("cpw_capacitance_correction: parameters must be > 0");
    const double lambda0 = 2.0 * constants::pi / (omega0 * z1 * cprime);
    if (s_tilde >= 0.25 * lambda0 - 1e-3 * lambda0)
        throw std::domain_error("cpw_capacitance_correction: s_tilde at or beyond the quarter-wave pole");
    const double k = 2.0 * constants::pi / lambda0;
    const double c = std::cos(k * s_tilde);
    const double prefactor = omega0 * c0_gap * z1;
    const double integral = s_tilde - lambda0 / (4.0 * constants::pi) * std::sin(2.0 * k * s_tilde);
    return prefactor * prefactor * cprime * integral / (2.0 * c * c);
}

// C = C_dc - C' s_tilde + C_CPW; C_dc is the dc capacitance including the wire.
inline double effective_capacitance(double c_dc, double cprime, double s_tilde, double c_cpw) {
    const double c0_gap = c_dc - cprime * s_tilde;
    if (!(c0_gap > 0.0))
        throw std::invalid_argument("effective_capacitance: C_dc - C' s_tilde must be > 0");
    return c0_gap + c_cpw;
}

inline double zero_point_voltage(double omega0, double capacitance) {
    if (!(omega0 > 0.0) || !(capacitance > 0.0))
        throw std::invalid_argument("zero_point_voltage: omega0 and C must be > 0");
    return std::sqrt(constants::hbar * omega0 / (2.0 * capacitance));
}

struct CouplingResult {
    double zero_point_voltage;  // V
    double zero_point_field;    // V/m at the evaluation point
    double rate;                // g [rad/s]
    double dipole_moment;       // C m

    double vacuum_rabi() const { return 2.0 * rate; }
    double collective_rabi(double n_rydberg) const { return std::sqrt(n_rydberg) * vacuum_rabi(); }
};

// Transition dipole moment of the target Rydberg pair, 1898 e a0.
inline double default_dipole_moment() { return 1898.0 * constants::qe * constants::a0; }

// E_zpf from the per-volt field ratio |E_dc|/V_dc of a dc solve at the point.
inline CouplingResult coupling_rate(double omega0, double capacitance, double field_per_volt,
                                    double dipole_moment = default_dipole_moment()) {
    if (!(dipole_moment > 0.0)) throw std::invalid_argument("coupling_rate: dipole moment must be > 0");
    if (field_per_volt < 0.0) throw std::invalid_argument("coupling_rate: field ratio must be >= 0");
    CouplingResult r;
    r.zero_point_voltage = zero_point_voltage(omega0, capacitance);
    r.zero_point_field = r.zero_point_voltage * field_per_volt;
    r.dipole_moment = dipole_moment;
    r.rate = r.zero_point_field * dipole_moment / constants::hbar;
    return r;
}

struct QualityFactors {
    double q_ext;
    double q_int;       // infinite when R = 0
    double kappa_int;   // rad/s
    double kappa_ext;   // rad/s
    double c_tot;       // series combination of C and C_s
};

// Q_ext = w0 Z0 C_s (C + C_s) / C; kappa_int = w0^2 R C_tot; kappa_ext = C_tot / (Z0 C_s^2).
inline QualityFactors quality_factors(double omega0, double capacitance, double shunt_capacitance,
                                      double feedline_impedance, double series_resistance) {
    if (!(omega0 > 0.0) || !(capacitance > 0.0) || !(shunt_capacitance > 0.0) ||
        !(feedline_impedance > 0.0))
        throw std::invalid_argument("quality_factors: w0, C, C_s, Z0 must be > 0");
    if (series_resistance < 0.0) throw std::invalid_argument("quality_factors: R must be >= 0");
    QualityFactors q;
    q.c_tot = capacitance * shunt_capacitance / (capacitance + shunt_capacitance);
    q.q_ext = omega0 * feedline_impedance * shunt_capacitance *
              (capacitance + shunt_capacitance) / capacitance;
    q.kappa_ext = q.c_tot / (feedline_impedance * shunt_capacitance * shunt_capacitance);
    q.kappa_int = omega0 * omega0 * series_resistance * q.c_tot;
    q.q_int = q.kappa_int > 0.0 ? omega0 / q.kappa_int : std::numeric_limits<double>::infinity();
    return q;
}

}  // namespace cavkit
