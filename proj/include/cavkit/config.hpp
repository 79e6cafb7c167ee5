#pragma once

// Project configuration: a sectioned key/value file, SI units with the unit
// spelled in the key name. Unknown keys are rejected with line numbers, every
// value is schema-checked, and everything has a paper-standard default except
// the shunt capacitance, which has no trusted value.

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavkit/beam_trap.hpp"
#include "cavkit/circuit.hpp"
#include "cavkit/exposure.hpp"
#include "cavkit/optimize.hpp"

namespace cavkit {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ProjectConfig {
    GaussianBeam beam = standard_beam();
    std::string species_name = "Rb87";
    AtomicSpecies species = rubidium87();
    double cloud_temperature = 1e-6;
    double atom_count = 1e6;

    std::string chip_kind = "planar";  // planar | flipchip
    double plate_width = 120e-6;       // a
    double gap = 40e-6;                // b
    double plate_distance = 200e-6;    // d
    double plate_length = 1e-3;        // l
    double chip_width = 1.6e-3;        // l_ch
    double substrate_eps_r = 10.0;
    double substrate_thickness = 330e-6;

    ResonatorModel circuit;  // defaults carry the published constants
    std::optional<double> shunt_capacitance;
    double dipole_moment = default_dipole_moment();
    double target_omega0 = 2.0 * constants::pi * 11e9;
    double quality_factor = 1e4;

    double power_limit = default_power_limit;

    SolverOptions solver;
    double grid_refine = 1.0;

    std::vector<double> sweep_a = default_planar_widths();
    std::vector<double> sweep_b = default_planar_gaps();
    std::vector<double> sweep_d = default_flipchip_distances();
    bool compute_eta = true;

    double fit_mask_halfwidth_kappas = 3.0;

    // synthetic-trace scenario
    double synth_f0 = 11.708e9;
    double synth_q_int = 5.2e3;
    double synth_q_ext = 18.3e3;
    double synth_theta = 0.1;
    int synth_points = 1601;
    double synth_noise = 0.01;
    double synth_window_kappas = 8.0;
    double synth_amp_u[3] = {0.9, 0.05, 0.03};
    double synth_phase_u[2] = {0.4, 1.2};

    std::string output_dir = "out";

    PipelineConfig pipeline() const {
        PipelineConfig p;
        p.beam = beam;
        p.species = species;
        p.cloud_temperature = cloud_temperature;
        p.plate_length = plate_length;
        p.target_omega0 = target_omega0;
        p.dipole_moment = dipole_moment;
        p.circuit = circuit;
        p.substrate_eps_r = substrate_eps_r;
        p.substrate_thickness = substrate_thickness;
        p.power_limit = power_limit;
        p.quality_factor = quality_factor;
        p.solver = solver;
        p.grid_refine = grid_refine;
        p.compute_eta = compute_eta;
        return p;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, const std::string& where) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + v + "' for " + where);
    }
}

// Comma-separated values; each entry is a number or a start:stop:step range.
inline std::vector<double> parse_list(const std::string& v, const std::string& where) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto c1 = item.find(':');
        if (c1 == std::string::npos) {
            out.push_back(parse_double(item, where));
            continue;
        }
        const auto c2 = item.find(':', c1 + 1);
        if (c2 == std::string::npos)
            throw ConfigError("config: range needs start:stop:step in " + where);
        const double start = parse_double(trim(item.substr(0, c1)), where);
        const double stop = parse_double(trim(item.substr(c1 + 1, c2 - c1 - 1)), where);
        const double step = parse_double(trim(item.substr(c2 + 1)), where);
        if (!(step > 0.0) || stop < start)
            throw ConfigError("config: empty or descending range in " + where);
        for (double x = start; x <= stop * (1.0 + 1e-12); x += step) out.push_back(x);
    }
    if (out.empty()) throw ConfigError("config: empty list for " + where);
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: bad boolean '" + v + "' for " + where);
}

}  // namespace detail

inline ProjectConfig parse_config(std::istream& in, const std::string& filename = "<config>") {
    ProjectConfig cfg;
    std::string section;
    std::string line;
    int lineno = 0;

    std::map<std::string, std::string> seen;  // section.key -> value

    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(filename + ":" + std::to_string(lineno) + ": malformed section");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(filename + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const std::string full = section + "." + key;
        if (seen.count(full))
            throw ConfigError(filename + ":" + std::to_string(lineno) + ": duplicate key " + full);
        seen[full] = value;

        const std::string where = filename + ":" + std::to_string(lineno) + " (" + full + ")";
        auto num = [&] { return detail::parse_double(value, where); };

        if (full == "beam.wavelength_m") cfg.beam.wavelength = num();
        else if (full == "beam.waist_m") cfg.beam.waist = num();
        else if (full == "beam.power_W") cfg.beam.power = num();
        else if (full == "beam.focus_height_m") cfg.beam.focus_height = num();
        else if (full == "species.name") {
            if (value != "Rb87")
                throw ConfigError(where + ": unknown species '" + value + "' (built-in: Rb87)");
            cfg.species_name = value;
        }
        else if (full == "cloud.temperature_K") cfg.cloud_temperature = num();
        else if (full == "cloud.atom_count") cfg.atom_count = num();
        else if (full == "chip.kind") {
            if (value != "planar" && value != "flipchip")
                throw ConfigError(where + ": chip kind must be planar or flipchip");
            cfg.chip_kind = value;
        }
        else if (full == "chip.plate_width_m") cfg.plate_width = num();
        else if (full == "chip.gap_m") cfg.gap = num();
        else if (full == "chip.plate_distance_m") cfg.plate_distance = num();
        else if (full == "chip.plate_length_m") cfg.plate_length = num();
        else if (full == "chip.chip_width_m") cfg.chip_width = num();
        else if (full == "chip.substrate_eps_r") cfg.substrate_eps_r = num();
        else if (full == "chip.substrate_thickness_m") cfg.substrate_thickness = num();
        else if (full == "circuit.cpw_capacitance_F_per_m") cfg.circuit.cpw_capacitance_per_length = num();
        else if (full == "circuit.phase_velocity_m_per_s") cfg.circuit.phase_velocity = num();
        else if (full == "circuit.lumped_inductance_H") cfg.circuit.lumped_inductance = num();
        else if (full == "circuit.plain_wire_length_m") cfg.circuit.plain_wire_length = num();
        else if (full == "circuit.feedline_impedance_Ohm") cfg.circuit.feedline_impedance = num();
        else if (full == "circuit.shunt_capacitance_F") cfg.shunt_capacitance = num();
        else if (full == "circuit.dipole_moment_e_a0") cfg.dipole_moment = num() * constants::qe * constants::a0;
        else if (full == "circuit.target_frequency_Hz") cfg.target_omega0 = 2.0 * constants::pi * num();
        else if (full == "circuit.quality_factor") cfg.quality_factor = num();
        else if (full == "exposure.power_limit_W") cfg.power_limit = num();
        else if (full == "solver.tolerance") cfg.solver.tol = num();
        else if (full == "solver.max_sweeps") cfg.solver.max_sweeps = static_cast<int>(num());
        else if (full == "solver.grid_refine") cfg.grid_refine = num();
        else if (full == "sweep.a_values_m") cfg.sweep_a = detail::parse_list(value, where);
        else if (full == "sweep.b_values_m") cfg.sweep_b = detail::parse_list(value, where);
        else if (full == "sweep.d_values_m") cfg.sweep_d = detail::parse_list(value, where);
        else if (full == "sweep.compute_eta") cfg.compute_eta = detail::parse_bool(value, where);
        else if (full == "fit.mask_halfwidth_kappas") cfg.fit_mask_halfwidth_kappas = num();
        else if (full == "synth.f0_Hz") cfg.synth_f0 = num();
        else if (full == "synth.q_int") cfg.synth_q_int = num();
        else if (full == "synth.q_ext") cfg.synth_q_ext = num();
        else if (full == "synth.theta_rad") cfg.synth_theta = num();
        else if (full == "synth.n_points") cfg.synth_points = static_cast<int>(num());
        else if (full == "synth.noise_sigma") cfg.synth_noise = num();
        else if (full == "synth.window_kappas") cfg.synth_window_kappas = num();
        else if (full == "synth.amp_u0") cfg.synth_amp_u[0] = num();
        else if (full == "synth.amp_u1") cfg.synth_amp_u[1] = num();
        else if (full == "synth.amp_u2") cfg.synth_amp_u[2] = num();
        else if (full == "synth.phase_u0") cfg.synth_phase_u[0] = num();
        else if (full == "synth.phase_u1") cfg.synth_phase_u[1] = num();
        else if (full == "output.directory") cfg.output_dir = value;
        else
            throw ConfigError(filename + ":" + std::to_string(lineno) + ": unknown key " + full);
    }

    // schema validation beyond per-key parsing
    try {
        cfg.beam.validate();
        cfg.species.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    auto positive = [&](double v, const char* what) {
        if (!(v > 0.0)) throw ConfigError(std::string("config: ") + what + " must be > 0");
    };
    positive(cfg.cloud_temperature, "cloud.temperature_K");
    if (cfg.atom_count < 0.0) throw ConfigError("config: cloud.atom_count must be >= 0");
    positive(cfg.plate_width, "chip.plate_width_m");
    positive(cfg.gap, "chip.gap_m");
    positive(cfg.plate_distance, "chip.plate_distance_m");
    positive(cfg.plate_length, "chip.plate_length_m");
    if (cfg.chip_width < 0.0) throw ConfigError("config: chip.chip_width_m must be >= 0");
    positive(cfg.substrate_thickness, "chip.substrate_thickness_m");
    if (cfg.substrate_eps_r < 1.0) throw ConfigError("config: chip.substrate_eps_r must be >= 1");
    positive(cfg.circuit.cpw_capacitance_per_length, "circuit.cpw_capacitance_F_per_m");
    positive(cfg.circuit.phase_velocity, "circuit.phase_velocity_m_per_s");
    if (cfg.circuit.lumped_inductance < 0.0)
        throw ConfigError("config: circuit.lumped_inductance_H must be >= 0");
    positive(cfg.circuit.plain_wire_length, "circuit.plain_wire_length_m");
    positive(cfg.circuit.feedline_impedance, "circuit.feedline_impedance_Ohm");
    if (cfg.shunt_capacitance && !(*cfg.shunt_capacitance > 0.0))
        throw ConfigError("config: circuit.shunt_capacitance_F must be > 0");
    positive(cfg.dipole_moment, "circuit.dipole_moment_e_a0");
    positive(cfg.target_omega0, "circuit.target_frequency_Hz");
    positive(cfg.quality_factor, "circuit.quality_factor");
    positive(cfg.power_limit, "exposure.power_limit_W");
    positive(cfg.solver.tol, "solver.tolerance");
    positive(cfg.grid_refine, "solver.grid_refine");
    for (double v : cfg.sweep_a) positive(v, "sweep.a_values_m entries");
    for (double v : cfg.sweep_b) positive(v, "sweep.b_values_m entries");
    for (double v : cfg.sweep_d) positive(v, "sweep.d_values_m entries");
    if (cfg.synth_points < 32) throw ConfigError("config: synth.n_points must be >= 32");

    return cfg;
}

inline ProjectConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    return parse_config(f, path);
}

}  // namespace cavkit
