// Command-line front end: trap characteristics, laser-exposure budget, field
// maps, geometry sweeps, synthetic reflection traces and resonance fits.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cavkit/config.hpp"
#include "cavkit/exposure.hpp"
#include "cavkit/fieldsolve.hpp"
#include "cavkit/optimize.hpp"
#include "cavkit/resfit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cavkit;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_numerical = 2;
constexpr int exit_partial = 3;

const double twopi = 2.0 * constants::pi;

struct CliState {
    ProjectConfig cfg;
    bool as_json = false;
    std::string out_dir;
    int jobs = 1;
    std::uint64_t seed = 1;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_power(double watts) {
    struct Scale {
        double factor;
        const char* unit;
    };
    for (const Scale& s : {Scale{1e-3, " mW"}, Scale{1e-6, " uW"}, Scale{1e-9, " nW"},
                           Scale{1e-12, " pW"}, Scale{1e-15, " fW"}}) {
        if (std::abs(watts) >= s.factor) return fmt(watts / s.factor) + s.unit;
    }
    return fmt(watts * 1e18) + " aW";
}

void emit(const CliState& st, const json& doc,
          const std::vector<std::pair<std::string, std::string>>& rows) {
    if (st.as_json) {
        std::cout << doc.dump(2) << "\n";
        return;
    }
    size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.first.size());
    for (const auto& r : rows)
        std::cout << r.first << std::string(width - r.first.size() + 2, ' ') << r.second << "\n";
}

fs::path out_file(const CliState& st, const std::string& name) {
    fs::create_directories(st.out_dir);
    return fs::path(st.out_dir) / name;
}

int cmd_trap(const CliState& st) {
    const ProjectConfig& c = st.cfg;
    const double depth = trap_depth(c.beam, c.species);
    const TrapFrequencies f = oscillation_frequencies(c.beam, c.species);
    const AtomCloud cloud = cloud_profile(c.beam, c.species, c.cloud_temperature, c.atom_count);
    const double lr = rayleigh_length(c.beam);

    // 1D potential cuts through the trap center, in uK
    {
        std::ofstream zf(out_file(st, "trap_profile_z.csv"));
        zf << "z_m,U_over_kB_uK\n";
        for (int i = 0; i <= 400; ++i) {
            const double z = c.beam.focus_height * (0.02 + 2.0 * i / 400.0);
            zf << fmt(z) << ','
               << fmt(trap_potential(c.beam, c.species, 0, 0, z) / constants::kB * 1e6) << "\n";
        }
        std::ofstream yf(out_file(st, "trap_profile_y.csv"));
        yf << "y_m,U_over_kB_uK\n";
        for (int i = 0; i <= 400; ++i) {
            const double y = lr * (-3.0 + 6.0 * i / 400.0);
            yf << fmt(y) << ','
               << fmt(trap_potential(c.beam, c.species, 0, y, c.beam.focus_height) /
                      constants::kB * 1e6)
               << "\n";
        }
    }

    json doc{{"rayleigh_length_m", lr},
             {"depth_uK", depth / constants::kB * 1e6},
             {"omega_r_rad_per_s", f.radial},
             {"omega_y_rad_per_s", f.axial},
             {"f_r_Hz", f.radial / twopi},
             {"f_y_Hz", f.axial / twopi},
             {"sigma_r_m", cloud.sigma_r},
             {"sigma_y_m", cloud.sigma_y},
             {"d_Rb_m", cloud.diameter()},
             {"l_Rb_m", cloud.length()},
             {"harmonic_warning", cloud.harmonic_warning}};
    emit(st, doc,
         {{"Rayleigh length", fmt(lr * 1e3) + " mm"},
          {"trap depth", fmt(depth / constants::kB * 1e6) + " uK"},
          {"radial frequency", fmt(f.radial / twopi / 1e3) + " kHz"},
          {"axial frequency", fmt(f.axial / twopi) + " Hz"},
          {"cloud diameter d_Rb", fmt(cloud.diameter() * 1e6) + " um"},
          {"cloud length l_Rb", fmt(cloud.length() * 1e3) + " mm"},
          {"harmonic approximation", cloud.harmonic_warning ? "marginal (T > depth/10)" : "good"},
          {"profiles", (out_file(st, "trap_profile_z.csv").string() + ", " +
                        out_file(st, "trap_profile_y.csv").string())}});
    return exit_ok;
}

int cmd_exposure(const CliState& st) {
    const ProjectConfig& c = st.cfg;
    const double z0 = c.beam.focus_height;
    const double p_dir = direct_power(c.beam, z0, c.chip_width);
    const double rate = scattering_rate(c.beam, c.species);
    const double p_sc = scattered_power(c.beam, c.species, c.atom_count);
    // the flip-chip budget splits the limit over the two chips
    const double r_e = standoff_ratio(c.beam, 0.5 * c.power_limit);
    const double d_min = min_plate_distance(c.beam, c.power_limit);

    json table = json::array();
    {
        std::ofstream tf(out_file(st, "table1.csv"));
        tf << "d_um,a_um,l_um,l_ch_mm,l_ch_crit_mm\n";
        for (double d : c.sweep_d) {
            const FlipChipLayout row = flipchip_layout(c.beam, d, c.power_limit);
            tf << fmt(d * 1e6) << ',' << fmt(row.plate_width * 1e6) << ','
               << fmt(row.plate_length * 1e6) << ',' << fmt(row.chip_width * 1e3) << ','
               << fmt(row.chip_width_crit * 1e3) << "\n";
            table.push_back({{"d_m", d},
                             {"a_m", row.plate_width},
                             {"l_m", row.plate_length},
                             {"l_ch_m", row.chip_width},
                             {"l_ch_crit_m", row.chip_width_crit}});
        }
    }

    json doc{{"direct_power_W", p_dir},
             {"scattering_rate_rad_per_s", rate},
             {"scattered_power_W", p_sc},
             {"standoff_ratio", r_e},
             {"min_plate_distance_m", d_min},
             {"power_limit_W", c.power_limit},
             {"layout_table", table}};
    emit(st, doc,
         {{"direct tail power", fmt_power(p_dir) + "  (chip width " + fmt(c.chip_width * 1e3) +
                                    " mm, z0 " + fmt(z0 * 1e6) + " um)"},
          {"scattering rate", fmt(rate / twopi) + " /s (x 2pi)"},
          {"scattered power", fmt_power(p_sc) + "  (N = " + fmt(c.atom_count) + ")"},
          {"standoff ratio r_e", fmt(r_e)},
          {"min plate distance", fmt(d_min * 1e6) + " um"},
          {"layout table", out_file(st, "table1.csv").string()}});
    return exit_ok;
}

int cmd_field(const CliState& st) {
    const ProjectConfig& c = st.cfg;
    const PipelineConfig pipe = c.pipeline();
    json doc;
    std::vector<std::pair<std::string, std::string>> rows;
    try {
        if (c.chip_kind == "planar") {
            const CrossSection s = planar_capacitor_section(c.plate_width, c.gap,
                                                            c.substrate_eps_r, c.beam.focus_height);
            const FieldMap map = solve(s, detail::pipeline_grid(s, pipe), c.solver);
            export_csv(map, out_file(st, "fieldmap_xz.csv").string());
            const CapacitanceResult cap = capacitance_per_length(map);
            const double ratio = map.field_at(0.0, c.beam.focus_height).magnitude / map.applied_volts;
            const AtomCloud cloud =
                cloud_profile(c.beam, c.species, c.cloud_temperature, c.atom_count);
            const double eta = homogeneity_eta(map, cloud, 0.0, c.beam.focus_height);
            const double c0 = cap.value * c.plate_length;
            doc = {{"field_ratio_per_m", ratio},
                   {"capacitance_per_length_F_per_m", cap.value},
                   {"capacitance_energy_F_per_m", cap.energy_method},
                   {"capacitance_charge_F_per_m", cap.charge_method},
                   {"plate_capacitance_F", c0},
                   {"eta", eta},
                   {"grid_consistent", cap.consistent()},
                   {"solver_residual", map.info.residual},
                   {"solver_sweeps", map.info.sweeps}};
            rows = {{"field ratio |E|/V", fmt(ratio / 100.0) + " /cm at (0, z0)"},
                    {"C' (gap)", fmt(cap.value * 1e12) + " pF/m  [energy " +
                                     fmt(cap.energy_method * 1e12) + ", charge " +
                                     fmt(cap.charge_method * 1e12) + "]"},
                    {"C0 = C' l", fmt(c0 * 1e15) + " fF"},
                    {"eta (cloud)", fmt(eta * 100.0) + " %"},
                    {"map", out_file(st, "fieldmap_xz.csv").string()}};
            if (c.shunt_capacitance) {
                const QualityFactors q = quality_factors(c.target_omega0, c0, *c.shunt_capacitance,
                                                         c.circuit.feedline_impedance, 0.0);
                doc["q_ext_design"] = q.q_ext;
                rows.push_back({"design Q_ext", fmt(q.q_ext)});
            }
        } else {
            const FlipChipLayout layout = flipchip_layout(c.beam, c.plate_distance, c.power_limit);
            const CrossSection sxz = flipchip_section(c.plate_distance, layout.plate_width,
                                                      c.substrate_eps_r, c.substrate_thickness);
            const CrossSection syz = flipchip_longitudinal_section(
                c.plate_distance, layout.plate_length, c.substrate_eps_r, c.substrate_thickness);
            const FieldMap mxz = solve(sxz, detail::pipeline_grid(sxz, pipe), c.solver);
            const FieldMap myz = solve(syz, detail::pipeline_grid(syz, pipe), c.solver);
            export_csv(mxz, out_file(st, "fieldmap_xz.csv").string());
            export_csv(myz, out_file(st, "fieldmap_yz.csv").string());
            const double cprime_xz = capacitance_per_length(mxz).value;
            const double cprime_yz = capacitance_per_length(myz).value;
            const double ratio = mxz.field_at(0.0, 0.0).magnitude / mxz.applied_volts;
            const AtomCloud cloud =
                cloud_profile(c.beam, c.species, c.cloud_temperature, c.atom_count);
            const double eta = homogeneity_eta(mxz, myz, cloud, 0, 0, 0, 0);
            const double fringe =
                std::max(0.0, cprime_yz - constants::eps0 * layout.plate_length / c.plate_distance);
            const double cap = cprime_xz * layout.plate_length + fringe * layout.plate_width;
            doc = {{"field_ratio_per_m", ratio},
                   {"capacitance_per_length_F_per_m", cprime_xz},
                   {"capacitance_F", cap},
                   {"eta", eta},
                   {"solver_residual", mxz.info.residual}};
            rows = {{"field ratio |E|/V", fmt(ratio / 100.0) + " /cm at the capacitor center"},
                    {"C' (transverse)", fmt(cprime_xz * 1e12) + " pF/m"},
                    {"C (end-corrected)", fmt(cap * 1e15) + " fF"},
                    {"eta (cloud)", fmt(eta * 100.0) + " %"},
                    {"maps", out_file(st, "fieldmap_xz.csv").string() + ", " +
                                 out_file(st, "fieldmap_yz.csv").string()}};
        }
    } catch (const SolveError& e) {
        std::cerr << "field solve failed: " << e.what() << "\nresidual history:";
        for (double r : e.info.residual_history) std::cerr << ' ' << fmt(r);
        std::cerr << "\n";
        return exit_numerical;
    }
    emit(st, doc, rows);
    return exit_ok;
}

int cmd_sweep(const CliState& st, bool planar) {
    const ProjectConfig& c = st.cfg;
    PipelineConfig pipe = c.pipeline();
    pipe.jobs = st.jobs;
    const SweepTable table = planar ? sweep_planar(c.sweep_a, c.sweep_b, pipe)
                                    : sweep_flipchip(c.sweep_d, pipe);
    const std::string name = planar ? "sweep_planar.csv" : "sweep_flipchip.csv";
    {
        std::ofstream f(out_file(st, name));
        if (planar)
            write_planar_csv(table, f);
        else
            write_flipchip_csv(table, c.target_omega0 / c.quality_factor, f);
    }

    int failures = 0;
    for (const auto& p : table.points)
        if (!p.ok()) ++failures;

    json doc{{"csv", out_file(st, name).string()}, {"failures", failures}};
    std::vector<std::pair<std::string, std::string>> rows{{"table", out_file(st, name).string()}};
    try {
        const SweepPoint& best = find_optimum(table);
        doc["optimum"] = {{"a_m", best.a},      {"b_m", best.b},
                          {"d_m", best.d},      {"s_m", best.s},
                          {"C_F", best.c},      {"L_H", best.inductance},
                          {"g_rad_per_s", best.g}, {"eta", best.eta}};
        if (planar)
            rows.push_back({"optimum", "a = " + fmt(best.a * 1e6) + " um, b = " + fmt(best.b * 1e6) +
                                           " um, g = 2pi x " + fmt(best.g / twopi / 1e3) + " kHz"});
        else
            rows.push_back({"optimum", "d = " + fmt(best.d * 1e6) + " um, g = 2pi x " +
                                           fmt(best.g / twopi / 1e6) + " MHz"});
    } catch (const std::exception& e) {
        std::cerr << "sweep produced no usable points: " << e.what() << "\n";
        return exit_numerical;
    }
    if (failures) {
        rows.push_back({"failed points", fmt(failures)});
        std::vector<std::string> details;
        for (const auto& p : table.points)
            if (!p.ok())
                details.push_back("(a=" + fmt(p.a * 1e6) + "um b=" + fmt(p.b * 1e6) +
                                  "um d=" + fmt(p.d * 1e6) + "um): " + p.error);
        doc["failure_details"] = details;
        for (const auto& d : details) std::cerr << "failed " << d << "\n";
    }
    emit(st, doc, rows);
    return failures ? exit_partial : exit_ok;
}

json fit_result_json(const FitResult& r) {
    return json{{"omega0_rad_per_s", r.params.omega0},
                {"f0_Hz", r.params.omega0 / twopi},
                {"kappa_int_rad_per_s", r.params.kappa_int},
                {"kappa_ext_rad_per_s", r.params.kappa_ext},
                {"q_int", r.params.kappa_int > 0.0 ? r.params.omega0 / r.params.kappa_int : 0.0},
                {"q_ext", r.params.omega0 / r.params.kappa_ext},
                {"theta_rad", r.params.theta},
                {"a0", r.params.a0},
                {"a1", r.params.a1},
                {"a2", r.params.a2},
                {"phi0_rad", r.params.phi0},
                {"phi1_rad_s", r.params.phi1},
                {"omega0_err", r.omega0_err},
                {"kappa_int_err", r.kappa_int_err},
                {"kappa_ext_err", r.kappa_ext_err},
                {"theta_err", r.theta_err},
                {"a0_err", r.a0_err},
                {"a1_err", r.a1_err},
                {"a2_err", r.a2_err},
                {"phi0_err", r.phi0_err},
                {"phi1_err", r.phi1_err},
                {"residual_norm", r.residual_norm},
                {"dip_depth", r.dip_depth},
                {"noise_floor", r.noise_floor},
                {"kappa_preliminary_rad_per_s", r.kappa_preliminary}};
}

int cmd_fit(const CliState& st, const std::string& trace_path) {
    S11Trace trace;
    try {
        trace = read_trace_csv(trace_path);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return exit_config;
    }
    FitOptions opt;
    opt.mask_halfwidth_kappas = st.cfg.fit_mask_halfwidth_kappas;
    FitResult r;
    try {
        r = fit(trace, opt);
    } catch (const FitError& e) {
        std::cerr << "fit failed: " << e.what();
        if (!e.diagnostics.empty()) std::cerr << " [" << e.diagnostics << "]";
        std::cerr << "\n";
        return exit_numerical;
    }

    const json doc = fit_result_json(r);
    {
        std::ofstream jf(out_file(st, "fit_result.json"));
        jf << doc.dump(2) << "\n";
        std::ofstream cf(out_file(st, "fit_result.csv"));
        cf << "parameter,value,std_error\n";
        cf << "omega0_rad_per_s," << fmt(r.params.omega0) << ',' << fmt(r.omega0_err) << "\n";
        cf << "kappa_int_rad_per_s," << fmt(r.params.kappa_int) << ',' << fmt(r.kappa_int_err)
           << "\n";
        cf << "kappa_ext_rad_per_s," << fmt(r.params.kappa_ext) << ',' << fmt(r.kappa_ext_err)
           << "\n";
        cf << "theta_rad," << fmt(r.params.theta) << ',' << fmt(r.theta_err) << "\n";
        cf << "a0," << fmt(r.params.a0) << ',' << fmt(r.a0_err) << "\n";
        cf << "a1," << fmt(r.params.a1) << ',' << fmt(r.a1_err) << "\n";
        cf << "a2," << fmt(r.params.a2) << ',' << fmt(r.a2_err) << "\n";
        cf << "phi0_rad," << fmt(r.params.phi0) << ',' << fmt(r.phi0_err) << "\n";
        cf << "phi1_rad_s," << fmt(r.params.phi1) << ',' << fmt(r.phi1_err) << "\n";
        write_trace_csv(background_correct(trace, r), out_file(st, "corrected_trace.csv").string());
    }
    emit(st, doc,
         {{"f0", fmt(r.params.omega0 / twopi / 1e9) + " GHz  (+- " +
                     fmt(r.omega0_err / twopi / 1e3) + " kHz)"},
          {"kappa_int", "2pi x " + fmt(r.params.kappa_int / twopi / 1e6) + " MHz"},
          {"kappa_ext", "2pi x " + fmt(r.params.kappa_ext / twopi / 1e6) + " MHz"},
          {"Q_int", fmt(r.params.kappa_int > 0 ? r.params.omega0 / r.params.kappa_int : 0.0)},
          {"Q_ext", fmt(r.params.omega0 / r.params.kappa_ext)},
          {"theta", fmt(r.params.theta) + " rad"},
          {"residual norm", fmt(r.residual_norm)},
          {"outputs", out_file(st, "fit_result.json").string() + ", " +
                          out_file(st, "fit_result.csv").string() + ", " +
                          out_file(st, "corrected_trace.csv").string()}});
    return exit_ok;
}

int cmd_synth(const CliState& st) {
    const ProjectConfig& c = st.cfg;
    S11Params p;
    p.omega0 = twopi * c.synth_f0;
    p.kappa_int = p.omega0 / c.synth_q_int;
    p.kappa_ext = p.omega0 / c.synth_q_ext;
    p.theta = c.synth_theta;
    const double kappa = p.kappa_int + p.kappa_ext;
    const double half = 0.5 * c.synth_window_kappas * kappa;
    const double wc = p.omega0, ws = half;
    p.a2 = c.synth_amp_u[2] / (ws * ws);
    p.a1 = c.synth_amp_u[1] / ws - 2.0 * c.synth_amp_u[2] * wc / (ws * ws);
    p.a0 = c.synth_amp_u[0] - c.synth_amp_u[1] * wc / ws + c.synth_amp_u[2] * wc * wc / (ws * ws);
    p.phi1 = c.synth_phase_u[1] / ws;
    p.phi0 = c.synth_phase_u[0] - c.synth_phase_u[1] * wc / ws;

    const S11Trace t =
        synth_trace(p, p.omega0 - half, p.omega0 + half, c.synth_points, c.synth_noise, st.seed);
    write_trace_csv(t, out_file(st, "synth_trace.csv").string());
    json doc{{"csv", out_file(st, "synth_trace.csv").string()},
             {"f0_Hz", c.synth_f0},
             {"q_int", c.synth_q_int},
             {"q_ext", c.synth_q_ext},
             {"theta_rad", c.synth_theta},
             {"n_points", c.synth_points},
             {"noise_sigma", c.synth_noise},
             {"seed", st.seed}};
    emit(st, doc,
         {{"trace", out_file(st, "synth_trace.csv").string()},
          {"scenario", fmt(c.synth_f0 / 1e9) + " GHz, Q_int " + fmt(c.synth_q_int) + ", Q_ext " +
                           fmt(c.synth_q_ext) + ", theta " + fmt(c.synth_theta) + ", sigma " +
                           fmt(c.synth_noise) + ", seed " + std::to_string(st.seed)}});
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"design and analysis toolkit for chip cavities coupled to trapped atoms"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    bool as_json = false;
    int jobs = 1;
    std::uint64_t seed = 1;
    app.add_option("--config", config_path, "configuration file");
    app.add_flag("--json", as_json, "machine-readable output");
    app.add_option("--out", out_dir, "output directory (default: out)");
    app.add_option("--jobs", jobs, "parallel sweep workers");
    app.add_option("--seed", seed, "random seed for synthetic traces");

    auto* trap = app.add_subcommand("trap", "dipole-trap depth, frequencies and cloud size");
    auto* exposure = app.add_subcommand("exposure", "laser power budget and layout table");
    auto* field = app.add_subcommand("field", "electrostatic field map of the configured chip");
    auto* sweep = app.add_subcommand("sweep", "geometry sweep for the coupling rate");
    bool planar = false, flipchip = false;
    sweep->add_flag("--planar", planar, "planar (a, b) scan");
    sweep->add_flag("--flipchip", flipchip, "flip-chip distance scan");
    auto* fitcmd = app.add_subcommand("fit", "three-stage fit of a reflection trace");
    std::string trace_path;
    fitcmd->add_option("trace", trace_path, "trace CSV (freq_Hz,re_S11,im_S11)")->required();
    auto* synth = app.add_subcommand("synth", "generate a synthetic reflection trace");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    CliState st;
    st.as_json = as_json;
    st.out_dir = out_dir;
    st.jobs = jobs;
    st.seed = seed;
    try {
        if (!config_path.empty()) st.cfg = parse_config_file(config_path);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return exit_config;
    }

    try {
        if (*trap) return cmd_trap(st);
        if (*exposure) return cmd_exposure(st);
        if (*field) return cmd_field(st);
        if (*sweep) {
            if (planar == flipchip) {
                std::cerr << "sweep: choose exactly one of --planar or --flipchip\n";
                return exit_config;
            }
            return cmd_sweep(st, planar);
        }
        if (*fitcmd) return cmd_fit(st, trace_path);
        if (*synth) return cmd_synth(st);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numerical;
    }
    return exit_config;
}
