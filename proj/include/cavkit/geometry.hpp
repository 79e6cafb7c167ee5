#pragma once

// 2D chip cross-sections for the electrostatic solver: zero-thickness
// conductor strips at fixed potentials plus axis-aligned dielectric boxes.
// Thin films (80-200 nm) are far below any grid spacing used here, so
// conductors carry no thickness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavkit {

struct ConductorStrip {
    double x0, x1;  // m, x0 < x1
    double z;       // m
    double volts;
    std::string name;
};

struct DielectricBox {
    double x0, x1, z0, z1;  // m
    double eps_r;
};

// A point an evaluation will probe; the mesh is locally refined around it.
struct RefineHint {
    double x, z;
    double spacing;  // target local grid spacing, m
};

struct CrossSection {
    std::vector<ConductorStrip> conductors;
    std::vector<DielectricBox> dielectrics;
    double x_min = 0.0, x_max = 0.0, z_min = 0.0, z_max = 0.0;
    double feature_scale = 0.0;  // characteristic size (gap, plate distance); drives grid defaults
    std::vector<RefineHint> hints;
    std::string label;

    void validate() const {
        if (!(x_max > x_min) || !(z_max > z_min))
            throw std::invalid_argument("CrossSection: empty domain box");
        if (conductors.empty()) throw std::invalid_argument("CrossSection: no conductors");
        if (!(feature_scale > 0.0)) throw std::invalid_argument("CrossSection: feature scale unset");
        double max_feature = 0.0;
        for (const auto& c : conductors) {
            if (!(c.x1 > c.x0)) throw std::invalid_argument("CrossSection: degenerate conductor strip");
            if (c.x0 < x_min - 1e-15 || c.x1 > x_max + 1e-15 || c.z < z_min || c.z > z_max)
                throw std::invalid_argument("CrossSection: conductor outside domain");
            const bool attached = c.x0 <= x_min + 1e-15 || c.x1 >= x_max - 1e-15;
            if (!attached) max_feature = std::max(max_feature, c.x1 - c.x0);
        }
        for (size_t i = 0; i < conductors.size(); ++i)
            for (size_t j = i + 1; j < conductors.size(); ++j) {
                const auto& a = conductors[i];
                const auto& b = conductors[j];
                if (a.z == b.z && a.x0 < b.x1 && b.x0 < a.x1)
                    throw std::invalid_argument("CrossSection: overlapping conductors (zero gap)");
            }
        for (const auto& d : dielectrics) {
            if (!(d.eps_r >= 1.0)) throw std::invalid_argument("CrossSection: eps_r must be >= 1");
            if (!(d.x1 > d.x0) || !(d.z1 > d.z0))
                throw std::invalid_argument("CrossSection: degenerate dielectric box");
        }
        // Free-standing features need clearance to the outer box; planes wired
        // to the box edge count as environment, not features.
        const double margin = std::min(std::min(-x_min, x_max), std::min(-z_min, z_max));
        if (max_feature > 0.0 && margin < 5.0 * max_feature)
            throw std::invalid_argument("CrossSection: domain margin below 5x largest feature");
    }

    std::uint64_t hash() const;
};

namespace detail {

inline void hash_mix(std::uint64_t& h, std::uint64_t v) {
    // FNV-1a over the 8 bytes of v
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
    }
}

inline void hash_mix(std::uint64_t& h, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    __builtin_memcpy(&bits, &v, sizeof(bits));
    hash_mix(h, bits);
}

}  // namespace detail

inline std::uint64_t CrossSection::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& c : conductors) {
        detail::hash_mix(h, c.x0);
        detail::hash_mix(h, c.x1);
        detail::hash_mix(h, c.z);
        detail::hash_mix(h, c.volts);
    }
    for (const auto& d : dielectrics) {
        detail::hash_mix(h, d.x0);
        detail::hash_mix(h, d.x1);
        detail::hash_mix(h, d.z0);
        detail::hash_mix(h, d.z1);
        detail::hash_mix(h, d.eps_r);
    }
    detail::hash_mix(h, x_min);
    detail::hash_mix(h, x_max);
    detail::hash_mix(h, z_min);
    detail::hash_mix(h, z_max);
    return h;
}

// ---------------------------------------------------------------------------
// Section factories. All live conductors are driven at 1 V; maps are per-volt.

// Planar chip at y = 0: capacitor plate of width a ending a gap b before the
// ground plane which runs to the box edge; sapphire fills z < 0. The gap
// center is at x = 0 and the atoms sit at (0, eval_height).
inline CrossSection planar_capacitor_section(double plate_width, double gap,
                                             double eps_r = 10.0, double eval_height = 80e-6) {
    if (!(plate_width > 0.0) || !(gap > 0.0))
        throw std::invalid_argument("planar_capacitor_section: lengths must be > 0");
    CrossSection s;
    const double extent = plate_width + gap;
    const double box = std::max(5e-3, 6.0 * extent);
    s.x_min = -box;
    s.x_max = box;
    s.z_min = -box;
    s.z_max = box;
    s.conductors.push_back({-0.5 * gap - plate_width, -0.5 * gap, 0.0, 1.0, "plate"});
    s.conductors.push_back({0.5 * gap, box, 0.0, 0.0, "ground"});
    s.dielectrics.push_back({-box, box, -box, 0.0, eps_r});
    s.feature_scale = gap;
    s.hints.push_back({0.0, eval_height, std::min(eval_height / 16.0, gap / 8.0)});
    s.label = "planar";
    return s;
}

// Flip-chip transverse cut (plate width a across x): plates of width a at
// z = -d/2 (live) and z = +d/2 (ground), each backed by a substrate slab.
inline CrossSection flipchip_section(double plate_distance, double plate_width,
                                     double eps_r = 10.0, double substrate_thickness = 330e-6) {
    if (!(plate_distance > 0.0) || !(plate_width > 0.0))
        throw std::invalid_argument("flipchip_section: lengths must be > 0");
    CrossSection s;
    const double extent = std::max(plate_width, plate_distance);
    const double box = std::max(5e-3, 6.0 * extent);
    s.x_min = -box;
    s.x_max = box;
    s.z_min = -box;
    s.z_max = box;
    const double zp = 0.5 * plate_distance;
    s.conductors.push_back({-0.5 * plate_width, 0.5 * plate_width, -zp, 1.0, "plate_bottom"});
    s.conductors.push_back({-0.5 * plate_width, 0.5 * plate_width, zp, 0.0, "plate_top"});
    s.dielectrics.push_back({-box, box, -zp - substrate_thickness, -zp, eps_r});
    s.dielectrics.push_back({-box, box, zp, zp + substrate_thickness, eps_r});
    s.feature_scale = plate_distance;
    s.hints.push_back({0.0, 0.0, plate_distance / 24.0});
    s.label = "flipchip_xz";
    return s;
}

// Flip-chip longitudinal cut (plate length l along the beam axis). Same
// construction with the plate length in place of the width.
inline CrossSection flipchip_longitudinal_section(double plate_distance, double plate_length,
                                                  double eps_r = 10.0,
                                                  double substrate_thickness = 330e-6) {
    CrossSection s = flipchip_section(plate_distance, plate_length, eps_r, substrate_thickness);
    s.label = "flipchip_yz";
    return s;
}

// Vacuum parallel plates, live top plate; oracle geometry for the solver.
inline CrossSection parallel_plate_section(double width, double spacing) {
    if (!(width > 0.0) || !(spacing > 0.0))
        throw std::invalid_argument("parallel_plate_section: lengths must be > 0");
    CrossSection s;
    const double box = 6.0 * std::max(width, spacing);
    s.x_min = -box;
    s.x_max = box;
    s.z_min = -box;
    s.z_max = box;
    s.conductors.push_back({-0.5 * width, 0.5 * width, 0.5 * spacing, 1.0, "top"});
    s.conductors.push_back({-0.5 * width, 0.5 * width, -0.5 * spacing, 0.0, "bottom"});
    s.feature_scale = spacing;
    s.hints.push_back({0.0, 0.0, spacing / 24.0});
    s.label = "parallel_plates";
    return s;
}

// Coplanar waveguide on a substrate half-space: center strip between two
// grounds running to the box edges; oracle geometry for conformal mapping.
inline CrossSection cpw_section(double center_width, double gap, double eps_r = 10.0) {
    if (!(center_width > 0.0) || !(gap > 0.0))
        throw std::invalid_argument("cpw_section: lengths must be > 0");
    CrossSection s;
    const double box = std::max(5e-3, 50.0 * (center_width + 2.0 * gap));
    s.x_min = -box;
    s.x_max = box;
    s.z_min = -box;
    s.z_max = box;
    s.conductors.push_back({-0.5 * center_width, 0.5 * center_width, 0.0, 1.0, "center"});
    s.conductors.push_back({0.5 * center_width + gap, box, 0.0, 0.0, "ground_right"});
    s.conductors.push_back({-box, -0.5 * center_width - gap, 0.0, 0.0, "ground_left"});
    s.dielectrics.push_back({-box, box, -box, 0.0, eps_r});
    s.feature_scale = gap;
    s.label = "cpw";
    return s;
}

}  // namespace cavkit
