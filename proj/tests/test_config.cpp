#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cavkit/config.hpp"

using namespace cavkit;
using Catch::Matchers::WithinRel;

#ifndef CAVKIT_CLI_PATH
#define CAVKIT_CLI_PATH ""
#endif

namespace {

ProjectConfig parse_text(const std::string& text) {
    std::stringstream ss(text);
    return parse_config(ss, "test.cfg");
}

std::string run_cli(const std::string& args, int* exit_code = nullptr) {
    const std::string cmd = std::string(CAVKIT_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    const int status = pclose(pipe);
    if (exit_code) *exit_code = WEXITSTATUS(status);
    return out;
}

}  // namespace

TEST_CASE("defaults parse from an empty config") {
    const ProjectConfig cfg = parse_text("");
    CHECK(cfg.beam.waist == 15e-6);
    CHECK(cfg.beam.wavelength == 800e-9);
    CHECK(cfg.chip_kind == "planar");
    CHECK_FALSE(cfg.shunt_capacitance.has_value());
    CHECK_THAT(cfg.target_omega0, WithinRel(2.0 * constants::pi * 11e9, 1e-12));
}

TEST_CASE("values and lists are parsed") {
    const ProjectConfig cfg = parse_text(
        "[beam]\n"
        "waist_m = 10e-6\n"
        "power_W = 30e-3   # trailing comment\n"
        "[chip]\n"
        "kind = flipchip\n"
        "plate_distance_m = 450e-6\n"
        "[circuit]\n"
        "shunt_capacitance_F = 5e-15\n"
        "target_frequency_Hz = 10e9\n"
        "[sweep]\n"
        "b_values_m = 30e-6:50e-6:10e-6, 80e-6\n");
    CHECK(cfg.beam.waist == 10e-6);
    CHECK(cfg.beam.power == 30e-3);
    CHECK(cfg.chip_kind == "flipchip");
    CHECK(cfg.plate_distance == 450e-6);
    REQUIRE(cfg.shunt_capacitance.has_value());
    CHECK(*cfg.shunt_capacitance == 5e-15);
    REQUIRE(cfg.sweep_b.size() == 4);
    CHECK(cfg.sweep_b[0] == 30e-6);
    CHECK(cfg.sweep_b[2] == 50e-6);
    CHECK(cfg.sweep_b[3] == 80e-6);
}

TEST_CASE("config errors carry the offending key and line") {
    try {
        parse_text("[beam]\nwaist_m = 15e-6\nwobble_m = 1\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("test.cfg:3") != std::string::npos);
        CHECK(what.find("beam.wobble_m") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_text("[beam]\nwaist_m = banana\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("[beam]\nwaist_m = -1e-6\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("[beam\nwaist_m = 1e-6\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("[species]\nname = Cs133\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("[beam]\nwaist_m = 1e-6\nwaist_m = 2e-6\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("[sweep]\nb_values_m = 50e-6:20e-6:10e-6\n"), ConfigError);
}

TEST_CASE("cli human and json outputs agree") {
    if (std::string(CAVKIT_CLI_PATH).empty()) return;
    int code = 0;
    const std::string human = run_cli("--out /tmp/cavkit_test_out trap", &code);
    CHECK(code == 0);
    const std::string js = run_cli("--json --out /tmp/cavkit_test_out trap", &code);
    CHECK(code == 0);

    // depth value printed for humans matches the json document
    double human_depth = 0.0;
    std::stringstream ss(human);
    for (std::string line; std::getline(ss, line);)
        if (line.rfind("trap depth", 0) == 0)
            human_depth = std::stod(line.substr(line.find_first_of("0123456789")));
    const auto pos = js.find("\"depth_uK\":");
    REQUIRE(pos != std::string::npos);
    const double json_depth = std::stod(js.substr(pos + 11));
    CHECK_THAT(json_depth, WithinRel(human_depth, 1e-8));
}

TEST_CASE("cli exit codes") {
    if (std::string(CAVKIT_CLI_PATH).empty()) return;
    int code = 0;
    run_cli("--config /nonexistent.cfg trap", &code);
    CHECK(code == 1);
    run_cli("definitely-not-a-command", &code);
    CHECK(code == 1);
    run_cli("sweep", &code);  // neither --planar nor --flipchip
    CHECK(code == 1);

    // a pure-background trace makes the fitter fail numerically
    {
        std::ofstream f("/tmp/cavkit_bg_trace.csv");
        f << "freq_Hz,re_S11,im_S11\n";
        for (int i = 0; i < 256; ++i) {
            const double u = -1.0 + 2.0 * i / 255.0;
            f << 11.6e9 + 1e8 * u << ',' << 0.9 + 0.08 * u * u << ',' << 0.1 * u << "\n";
        }
    }
    run_cli("fit /tmp/cavkit_bg_trace.csv", &code);
    CHECK(code == 2);
}

TEST_CASE("cli synthetic traces are seed-deterministic") {
    if (std::string(CAVKIT_CLI_PATH).empty()) return;
    int code = 0;
    run_cli("--seed 42 --out /tmp/cavkit_s1 synth", &code);
    CHECK(code == 0);
    run_cli("--seed 42 --out /tmp/cavkit_s2 synth", &code);
    CHECK(code == 0);
    std::ifstream f1("/tmp/cavkit_s1/synth_trace.csv"), f2("/tmp/cavkit_s2/synth_trace.csv");
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    CHECK(s1.str().size() > 1000);
}
