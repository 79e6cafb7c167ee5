#pragma once

// Parameter sweeps over the chip geometry: the planar (a, b) scan at fixed
// resonance frequency and the flip-chip distance scan, with field-map
// caching, optional parallel execution, wire-length interpolation and
// optimum extraction.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cavkit/beam_trap.hpp"
#include "cavkit/circuit.hpp"
#include "cavkit/exposure.hpp"
#include "cavkit/fieldsolve.hpp"
#include "cavkit/geometry.hpp"

namespace cavkit {

// Spec-facing composition: zero-point field and coupling rate at a point of a
// per-volt field map.
inline CouplingResult zero_point_field(double omega0, double capacitance, const FieldMap& map,
                                       double x, double z,
                                       double dipole_moment = default_dipole_moment()) {
    const double ratio = map.field_at(x, z).magnitude / map.applied_volts;
    return coupling_rate(omega0, capacitance, ratio, dipole_moment);
}

struct PipelineConfig {
    GaussianBeam beam = standard_beam();
    AtomicSpecies species = rubidium87();
    double cloud_temperature = 1e-6;  // K
    double plate_length = 1e-3;       // l, fixed capacitor plate length
    double target_omega0 = 2.0 * constants::pi * 11e9;
    double dipole_moment = default_dipole_moment();
    ResonatorModel circuit;           // C', v_phi, L0, q defaults; C0 filled per point
    double substrate_eps_r = 10.0;
    double substrate_thickness = 330e-6;
    double power_limit = default_power_limit;
    double quality_factor = 1e4;      // assumed Q for strong-coupling reporting
    SolverOptions solver;
    double grid_refine = 1.0;         // >1 tightens the suggested grid spacings
    bool compute_eta = true;
    int jobs = 1;
};

struct SweepPoint {
    double a = 0.0;  // plate width (planar) or = d (flip-chip)
    double b = 0.0;  // gap to ground (planar only)
    double d = 0.0;  // plate distance (flip-chip only)
    double s = std::numeric_limits<double>::quiet_NaN();  // wire length (planar)
    double c0 = 0.0;          // plate capacitance [F]
    double c = 0.0;           // effective capacitance [F]
    double inductance = 0.0;  // L = 1/(w0^2 C) [H]
    double g = 0.0;           // coupling rate [rad/s]
    double eta = std::numeric_limits<double>::quiet_NaN();
    double field_ratio = 0.0;  // |E|/V at the cloud center [1/m]
    double resonance_residual = 0.0;
    double chip_width = std::numeric_limits<double>::quiet_NaN();       // l_ch (flip-chip)
    double chip_width_crit = std::numeric_limits<double>::quiet_NaN();  // l_ch^crit (flip-chip)
    std::uint64_t geometry_hash = 0;
    std::string error;  // per-point failures are recorded, not thrown

    bool ok() const { return error.empty(); }
};

struct SweepTable {
    std::vector<SweepPoint> points;  // row-major over (a_values x b_values) or over d_values
    std::vector<double> a_values, b_values, d_values;
    double plate_length = 0.0;
    double plain_wire_length = 0.0;
    double target_omega0 = 0.0;
    double z0 = 0.0;
    double dipole_moment = 0.0;
};

// Shared cache of converged field maps, keyed by geometry and grid.
class FieldCache {
public:
    std::shared_ptr<const FieldMap> get_or_solve(const CrossSection& section, const GridSpec& spec,
                                                 const SolverOptions& opt) {
        const std::uint64_t key = section.hash() ^ (spec.hash() * 0x9e3779b97f4a7c15ull);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        auto map = std::make_shared<FieldMap>(solve(section, spec, opt));
        std::lock_guard<std::mutex> lock(mutex_);
        return cache_.emplace(key, std::move(map)).first->second;
    }

    size_t size() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return cache_.size();
    }

private:
    mutable std::mutex mutex_;
    std::map<std::uint64_t, std::shared_ptr<const FieldMap>> cache_;
};

namespace detail {

inline GridSpec pipeline_grid(const CrossSection& s, const PipelineConfig& cfg) {
    GridSpec g = GridSpec::suggested(s);
    if (cfg.grid_refine != 1.0) {
        g.h_fine /= cfg.grid_refine;
        g.h_interface /= cfg.grid_refine;
        g.h_max /= cfg.grid_refine;
    }
    return g;
}

template <typename Fn>
inline void run_indexed(int n, int jobs, Fn&& fn) {
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    const int count = std::min(jobs, n);
    pool.reserve(count);
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

}  // namespace detail

// Full pipeline for one planar geometry: field solve, plate capacitance,
// wire length for the target frequency, standing-wave correction, coupling.
inline SweepPoint planar_point(double a, double b, const PipelineConfig& cfg, FieldCache& cache) {
    SweepPoint p;
    p.a = a;
    p.b = b;
    try {
        const CrossSection section =
            planar_capacitor_section(a, b, cfg.substrate_eps_r, cfg.beam.focus_height);
        p.geometry_hash = section.hash();
        const auto map = cache.get_or_solve(section, detail::pipeline_grid(section, cfg), cfg.solver);
        const CapacitanceResult cap = capacitance_per_length(*map);
        p.c0 = cap.value * cfg.plate_length;
        p.field_ratio = map->field_at(0.0, cfg.beam.focus_height).magnitude / map->applied_volts;

        ResonatorModel m = cfg.circuit;
        m.gap_capacitance = p.c0;
        p.s = solve_wire_length(m, cfg.target_omega0);
        m.wire_length = p.s;
        p.resonance_residual =
            std::abs(resonance_frequency(m) / cfg.target_omega0 - 1.0);

        const double ccpw = cpw_capacitance_correction(m.cpw_length(), cfg.target_omega0, p.c0,
                                                       m.characteristic_impedance(),
                                                       m.cpw_capacitance_per_length);
        p.c = effective_capacitance(p.c0 + m.cpw_capacitance_per_length * m.cpw_length(),
                                    m.cpw_capacitance_per_length, m.cpw_length(), ccpw);
        p.inductance = 1.0 / (cfg.target_omega0 * cfg.target_omega0 * p.c);
        p.g = coupling_rate(cfg.target_omega0, p.c, p.field_ratio, cfg.dipole_moment).rate;
        if (cfg.compute_eta) {
            const AtomCloud cloud =
                cloud_profile(cfg.beam, cfg.species, cfg.cloud_temperature, 1.0);
            p.eta = homogeneity_eta(*map, cloud, 0.0, cfg.beam.focus_height);
        }
    } catch (const std::exception& e) {
        p.error = e.what();
    }
    return p;
}

// Flip-chip pipeline for one plate distance d: transverse and longitudinal
// maps, end-corrected plate capacitance, coupling at the capacitor center,
// homogeneity over the cloud, and the exposure-limited chip width.
inline SweepPoint flipchip_point(double d, const PipelineConfig& cfg, FieldCache& cache) {
    SweepPoint p;
    p.d = d;
    p.a = d;
    try {
        const FlipChipLayout layout = flipchip_layout(cfg.beam, d, cfg.power_limit);
        p.chip_width = layout.chip_width;
        p.chip_width_crit = layout.chip_width_crit;
        const double l = layout.plate_length;

        const CrossSection sxz =
            flipchip_section(d, layout.plate_width, cfg.substrate_eps_r, cfg.substrate_thickness);
        const CrossSection syz =
            flipchip_longitudinal_section(d, l, cfg.substrate_eps_r, cfg.substrate_thickness);
        p.geometry_hash = sxz.hash();
        const auto mxz = cache.get_or_solve(sxz, detail::pipeline_grid(sxz, cfg), cfg.solver);
        const auto myz = cache.get_or_solve(syz, detail::pipeline_grid(syz, cfg), cfg.solver);

        // Plate capacitance from the transverse cut times the plate length,
        // plus the end fringe taken from the longitudinal cut. The fringe per
        // unit length is what the longitudinal profile carries beyond the
        // ideal parallel-plate value.
        const double cprime_xz = capacitance_per_length(*mxz).value;
        const double cprime_yz = capacitance_per_length(*myz).value;
        const double end_fringe = std::max(0.0, cprime_yz - constants::eps0 * l / d);
        p.c0 = cprime_xz * l;
        p.c = p.c0 + end_fringe * layout.plate_width;
        p.inductance = 1.0 / (cfg.target_omega0 * cfg.target_omega0 * p.c);
        p.field_ratio = mxz->field_at(0.0, 0.0).magnitude / mxz->applied_volts;
        p.g = coupling_rate(cfg.target_omega0, p.c, p.field_ratio, cfg.dipole_moment).rate;
        if (cfg.compute_eta) {
            const AtomCloud cloud =
                cloud_profile(cfg.beam, cfg.species, cfg.cloud_temperature, 1.0);
            p.eta = homogeneity_eta(*mxz, *myz, cloud, 0.0, 0.0, 0.0, 0.0);
        }
    } catch (const std::exception& e) {
        p.error = e.what();
    }
    return p;
}

inline SweepTable sweep_planar(std::span<const double> a_values, std::span<const double> b_values,
                               const PipelineConfig& cfg) {
    SweepTable table;
    table.a_values.assign(a_values.begin(), a_values.end());
    table.b_values.assign(b_values.begin(), b_values.end());
    table.plate_length = cfg.plate_length;
    table.plain_wire_length = cfg.circuit.plain_wire_length;
    table.target_omega0 = cfg.target_omega0;
    table.z0 = cfg.beam.focus_height;
    table.dipole_moment = cfg.dipole_moment;
    const int na = static_cast<int>(a_values.size());
    const int nb = static_cast<int>(b_values.size());
    table.points.resize(static_cast<size_t>(na) * nb);
    FieldCache cache;
    detail::run_indexed(na * nb, cfg.jobs, [&](int k) {
        table.points[k] = planar_point(a_values[k / nb], b_values[k % nb], cfg, cache);
    });
    return table;
}

inline SweepTable sweep_flipchip(std::span<const double> d_values, const PipelineConfig& cfg) {
    for (double d : d_values)
        if (d < 100e-6)
            throw std::invalid_argument("sweep_flipchip: plate distances below 100 um are excluded");
    SweepTable table;
    table.d_values.assign(d_values.begin(), d_values.end());
    table.plate_length = 0.0;  // per point
    table.plain_wire_length = cfg.circuit.plain_wire_length;
    table.target_omega0 = cfg.target_omega0;
    table.z0 = 0.0;
    table.dipole_moment = cfg.dipole_moment;
    table.points.resize(d_values.size());
    FieldCache cache;
    detail::run_indexed(static_cast<int>(d_values.size()), cfg.jobs,
                        [&](int k) { table.points[k] = flipchip_point(d_values[k], cfg, cache); });
    return table;
}

// Bilinear interpolation of the wire-length map s(a, b) on a rectangular
// sweep table. Queries outside the convex hull of the table keys are errors.
inline double interpolate_s(const SweepTable& table, double a, double b) {
    const auto& av = table.a_values;
    const auto& bv = table.b_values;
    if (av.size() < 2 || bv.size() < 2)
        throw std::invalid_argument("interpolate_s: table is not a rectangular sweep");
    if (a < av.front() || a > av.back() || b < bv.front() || b > bv.back())
        throw std::out_of_range("interpolate_s: query outside the swept region");
    const auto cell = [](const std::vector<double>& v, double q) {
        size_t i = std::upper_bound(v.begin(), v.end(), q) - v.begin();
        return std::clamp<size_t>(i - 1, 0, v.size() - 2);
    };
    const size_t ia = cell(av, a), ib = cell(bv, b);
    const size_t nb = bv.size();
    const SweepPoint& p00 = table.points[ia * nb + ib];
    const SweepPoint& p01 = table.points[ia * nb + ib + 1];
    const SweepPoint& p10 = table.points[(ia + 1) * nb + ib];
    const SweepPoint& p11 = table.points[(ia + 1) * nb + ib + 1];
    for (const SweepPoint* p : {&p00, &p01, &p10, &p11})
        if (!p->ok()) throw std::runtime_error("interpolate_s: failed sweep point in patch");
    const double ta = (a - av[ia]) / (av[ia + 1] - av[ia]);
    const double tb = (b - bv[ib]) / (bv[ib + 1] - bv[ib]);
    return (1 - ta) * (1 - tb) * p00.s + (1 - ta) * tb * p01.s + ta * (1 - tb) * p10.s +
           ta * tb * p11.s;
}

// Argmax of g over successful rows; ties break to smaller a, then smaller b.
inline const SweepPoint& find_optimum(const SweepTable& table) {
    const SweepPoint* best = nullptr;
    for (const auto& p : table.points) {
        if (!p.ok()) continue;
        if (!best || p.g > best->g ||
            (p.g == best->g && (p.a < best->a || (p.a == best->a && p.b < best->b))))
            best = &p;
    }
    if (!best) throw std::runtime_error("find_optimum: no successful sweep points");
    return *best;
}

// Default scan mirroring the published procedure: a coarse widths pass plus a
// fine pass around the useful region.
inline std::vector<double> default_planar_widths() {
    std::vector<double> a{40e-6, 60e-6, 80e-6, 100e-6, 120e-6, 140e-6, 50e-6, 200e-6, 500e-6};
    std::sort(a.begin(), a.end());
    return a;
}

inline std::vector<double> default_planar_gaps() {
    std::vector<double> b;
    for (double v = 20e-6; v <= 100.5e-6; v += 10e-6) b.push_back(v);
    return b;
}

inline std::vector<double> default_flipchip_distances() {
    std::vector<double> d;
    for (double v = 100e-6; v <= 600.5e-6; v += 50e-6) d.push_back(v);
    return d;
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {

inline void csv_value(std::ostream& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    out << buf;
}

}  // namespace detail

inline void write_planar_csv(const SweepTable& table, std::ostream& out) {
    out << "a_m,b_m,s_m,C_F,L_H,g_rad_per_s,eta\n";
    for (const auto& p : table.points) {
        if (!p.ok()) continue;
        const double row[] = {p.a, p.b, p.s, p.c, p.inductance, p.g, p.eta};
        for (size_t i = 0; i < std::size(row); ++i) {
            detail::csv_value(out, row[i]);
            out << (i + 1 == std::size(row) ? '\n' : ',');
        }
    }
}

inline void write_flipchip_csv(const SweepTable& table, double kappa, std::ostream& out) {
    out << "d_m,a_m,l_m,l_ch_m,l_ch_crit_m,C_F,L_H,g_rad_per_s,eta,two_g_over_kappa\n";
    for (const auto& p : table.points) {
        if (!p.ok()) continue;
        const double l = std::max(2.0 * p.d, 250e-6);
        const double row[] = {p.d,        p.a,   l,     p.chip_width, p.chip_width_crit,
                              p.c,        p.inductance, p.g,          p.eta,
                              2.0 * p.g / kappa};
        for (size_t i = 0; i < std::size(row); ++i) {
            detail::csv_value(out, row[i]);
            out << (i + 1 == std::size(row) ? '\n' : ',');
        }
    }
}

}  // namespace cavkit
