#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cavkit/beam_trap.hpp"
#include "cavkit/quadrature.hpp"

using namespace cavkit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Rayleigh length") {
    GaussianBeam beam = standard_beam();
    CHECK_THAT(rayleigh_length(beam), WithinRel(0.88e-3, 0.005));

    beam.waist = 10e-6;
    CHECK_THAT(rayleigh_length(beam), WithinRel(392.699e-6, 1e-4));

    GaussianBeam doubled = standard_beam();
    doubled.waist *= 2.0;
    CHECK_THAT(rayleigh_length(doubled), WithinRel(4.0 * rayleigh_length(standard_beam()), 1e-12));
}

TEST_CASE("beam radius") {
    const GaussianBeam beam = standard_beam();
    const double lr = rayleigh_length(beam);
    CHECK(beam_radius(beam, 0.0) == beam.waist);
    CHECK_THAT(beam_radius(beam, lr), WithinRel(std::sqrt(2.0) * beam.waist, 1e-12));
    CHECK_THAT(beam_radius(beam, 0.8e-3), WithinRel(20e-6, 0.025));  // chip-edge radius

    // even and monotone in |y|
    double prev = beam_radius(beam, 0.0);
    for (double y = 0.1e-3; y < 3e-3; y += 0.1e-3) {
        CHECK(beam_radius(beam, y) == beam_radius(beam, -y));
        CHECK(beam_radius(beam, y) > prev);
        prev = beam_radius(beam, y);
    }
}

TEST_CASE("intensity profile") {
    const GaussianBeam beam = standard_beam();
    CHECK(intensity(beam, 1.0, 0.0) == 0.0);  // 1 m off axis: dead zero within double range
    CHECK_THAT(intensity(beam, 0.0, 0.0),
               WithinRel(2.0 * beam.power / (constants::pi * beam.waist * beam.waist), 1e-12));

    // transverse integral equals the total power at any y (here y = lR/2)
    const double y = 0.5 * rayleigh_length(beam);
    const double w = beam_radius(beam, y);
    const double integral = integrate_gl(
        [&](double r) { return intensity(beam, r, y) * 2.0 * constants::pi * r; }, 0.0, 8.0 * w, 128);
    CHECK_THAT(integral, WithinRel(beam.power, 1e-6));
}

TEST_CASE("trap potential") {
    const GaussianBeam beam = standard_beam();
    const AtomicSpecies rb = rubidium87();

    const double depth_uK = trap_depth(beam, rb) / constants::kB * 1e6;
    CHECK_THAT(depth_uK, WithinRel(400.0, 0.10));

    CHECK_THAT(trap_potential(beam, rb, 0.0, 0.0, 1.0), WithinAbs(0.0, 1e-40));

    // mirror symmetry about the focus
    for (double x : {3e-6, 9e-6})
        for (double dz : {-5e-6, 4e-6})
            CHECK_THAT(trap_potential(beam, rb, x, 1e-4, beam.focus_height + dz),
                       WithinRel(trap_potential(beam, rb, -x, 1e-4, beam.focus_height - dz), 1e-12));

    // strictly negative on a sample grid for any red-detuned wavelength
    for (double lambda : {800e-9, 850e-9, 1064e-9}) {
        GaussianBeam b = beam;
        b.wavelength = lambda;
        const double lr = rayleigh_length(b);
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j)
                for (int k = 0; k < 10; ++k) {
                    const double x = (-2.0 + 4.0 * i / 9.0) * b.waist;
                    const double y = (-2.0 + 4.0 * j / 9.0) * lr;
                    const double z = b.focus_height + (-2.0 + 4.0 * k / 9.0) * b.waist;
                    REQUIRE(trap_potential(b, rb, x, y, z) < 0.0);
                }
    }

    // depth is linear in power
    GaussianBeam twice = beam;
    twice.power *= 2.0;
    CHECK(trap_depth(twice, rb) == 2.0 * trap_depth(beam, rb));

    // resonant wavelength rejected
    GaussianBeam resonant = beam;
    resonant.wavelength = 2.0 * constants::pi * constants::c0 / rb.omega_d1;
    CHECK_THROWS_AS(trap_potential(resonant, rb, 0, 0, resonant.focus_height), std::domain_error);
}

TEST_CASE("oscillation frequencies") {
    const GaussianBeam beam = standard_beam();
    const AtomicSpecies rb = rubidium87();
    const TrapFrequencies f = oscillation_frequencies(beam, rb);
    const double twopi = 2.0 * constants::pi;
    CHECK_THAT(f.radial / twopi, WithinRel(4.1e3, 0.05));
    CHECK_THAT(f.axial / twopi, WithinRel(50.0, 0.05));

    // finite-difference curvature of the full potential at the center
    const double z0 = beam.focus_height;
    auto fd_omega = [&](auto potential_1d, double h) {
        const double upp =
            (potential_1d(h) - 2.0 * potential_1d(0.0) + potential_1d(-h)) / (h * h);
        return std::sqrt(upp / rb.mass);
    };
    const double wr_fd = fd_omega(
        [&](double x) { return trap_potential(beam, rb, x, 0.0, z0); }, beam.waist / 200.0);
    const double wy_fd = fd_omega(
        [&](double y) { return trap_potential(beam, rb, 0.0, y, z0); },
        rayleigh_length(beam) / 200.0);
    CHECK_THAT(wr_fd, WithinRel(f.radial, 1e-4));
    CHECK_THAT(wy_fd, WithinRel(f.axial, 1e-4));
}

TEST_CASE("cloud profile") {
    const GaussianBeam beam = standard_beam();
    const AtomicSpecies rb = rubidium87();
    const AtomCloud cloud = cloud_profile(beam, rb, 1e-6, 1e6);

    CHECK_THAT(cloud.diameter(), WithinRel(2.3e-6, 0.10));
    CHECK_THAT(cloud.length(), WithinRel(0.19e-3, 0.10));
    CHECK_FALSE(cloud.harmonic_warning);

    // sigma scales as sqrt(T)
    const AtomCloud hot = cloud_profile(beam, rb, 4e-6, 1e6);
    CHECK_THAT(hot.sigma_r, WithinRel(2.0 * cloud.sigma_r, 1e-12));
    CHECK_THAT(hot.sigma_y, WithinRel(2.0 * cloud.sigma_y, 1e-12));

    // single-particle density normalizes to 1 over an +-8 sigma box
    const QuadratureRule rule = gauss_legendre(48);
    const double hr = 8.0 * cloud.sigma_r, hy = 8.0 * cloud.sigma_y;
    double total = 0.0;
    for (int a = 0; a < 48; ++a)
        for (int b = 0; b < 48; ++b)
            for (int c = 0; c < 48; ++c)
                total += rule.weights[a] * rule.weights[b] * rule.weights[c] * hr * hr * hy *
                         cloud.density(hr * rule.nodes[a], hy * rule.nodes[c], hr * rule.nodes[b]);
    CHECK_THAT(total, WithinRel(1.0, 1e-6));

    // harmonic approximation guard rails
    const double depth_K = trap_depth(beam, rb) / constants::kB;
    CHECK(cloud_profile(beam, rb, 0.2 * depth_K, 1e6).harmonic_warning);
    CHECK_THROWS_AS(cloud_profile(beam, rb, 1.5 * depth_K, 1e6), std::domain_error);
    CHECK_THROWS_AS(cloud_profile(beam, rb, -1.0, 1e6), std::invalid_argument);
}
