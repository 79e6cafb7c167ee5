#pragma once

// Electrostatic Laplace solver on a graded rectilinear grid. Dirichlet
// conductors embedded in the grid, flux-conserving treatment of dielectric
// interfaces (interfaces coincide with grid lines by construction), zero
// normal field on the outer box. Red-black SOR, started from coarse-grid
// solutions of the same problem.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavkit/beam_trap.hpp"
#include "cavkit/constants.hpp"
#include "cavkit/geometry.hpp"
#include "cavkit/quadrature.hpp"

namespace cavkit {

struct Axis {
    std::vector<double> nodes;  // strictly increasing

    int size() const { return static_cast<int>(nodes.size()); }

    // Cell index c with nodes[c] <= v <= nodes[c+1]; throws outside the axis.
    int cell_of(double v) const {
        if (v < nodes.front() || v > nodes.back())
            throw std::out_of_range("Axis: coordinate outside grid");
        auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
        int c = static_cast<int>(it - nodes.begin()) - 1;
        return std::clamp(c, 0, size() - 2);
    }

    int nearest(double v) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
        if (it == nodes.end()) return size() - 1;
        if (it == nodes.begin()) return 0;
        const int i = static_cast<int>(it - nodes.begin());
        return (v - nodes[i - 1] <= nodes[i] - v) ? i - 1 : i;
    }

    Axis refined() const {
        Axis r;
        r.nodes.reserve(2 * nodes.size());
        for (size_t i = 0; i + 1 < nodes.size(); ++i) {
            r.nodes.push_back(nodes[i]);
            r.nodes.push_back(0.5 * (nodes[i] + nodes[i + 1]));
        }
        r.nodes.push_back(nodes.back());
        return r;
    }

    Axis coarsened() const {
        Axis c;
        for (size_t i = 0; i < nodes.size(); i += 2) c.nodes.push_back(nodes[i]);
        if (c.nodes.back() != nodes.back()) c.nodes.push_back(nodes.back());
        return c;
    }
};

struct GridSpec {
    double h_fine = 0.0;       // spacing at conductor endpoints
    double h_interface = 0.0;  // spacing at dielectric interfaces
    double h_max = 0.0;        // far-field cap
    double growth = 1.15;

    static GridSpec suggested(const CrossSection& s) {
        GridSpec g;
        g.h_fine = s.feature_scale / 24.0;
        g.h_interface = s.feature_scale / 6.0;
        g.h_max = std::min(s.x_max - s.x_min, s.z_max - s.z_min) / 80.0;
        return g;
    }

    // Next member of the refinement family used for convergence studies. The
    // conductor-edge spacing shrinks quadratically relative to the smooth
    // regions so the r^(1/2) edge singularity does not dominate the error.
    GridSpec refined() const {
        GridSpec g = *this;
        g.h_fine /= 4.0;
        g.h_interface /= 2.0;
        g.h_max /= 2.0;
        return g;
    }

    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        detail::hash_mix(h, h_fine);
        detail::hash_mix(h, h_interface);
        detail::hash_mix(h, h_max);
        detail::hash_mix(h, growth);
        return h;
    }
};

namespace detail {

struct Breakpoint {
    double coord;
    double h;
};

// Fill [length] with steps grading geometrically away from both ends, then
// rescale so the steps exactly tile the interval. Grading and the rescale
// factor are dimensionless, which keeps the mesh exactly scale-covariant.
inline void fill_interval(double length, double h_left, double h_right, double h_max,
                          double growth, std::vector<double>& steps) {
    if (length <= std::min(h_left, h_right) * 1.5) {
        int n = std::max(1, static_cast<int>(std::lround(length / std::min(h_left, h_right))));
        for (int i = 0; i < n; ++i) steps.push_back(length / n);
        return;
    }
    std::vector<double> left{std::min(h_left, h_max)}, right{std::min(h_right, h_max)};
    double sum = left[0] + right[0];
    while (sum < length) {
        double hl = std::min(left.back() * growth, h_max);
        double hr = std::min(right.back() * growth, h_max);
        if (hl <= hr) {
            left.push_back(hl);
            sum += hl;
        } else {
            right.push_back(hr);
            sum += hr;
        }
    }
    const double factor = length / sum;
    for (double h : left) steps.push_back(h * factor);
    for (size_t i = right.size(); i-- > 0;) steps.push_back(right[i] * factor);
}

inline Axis build_axis(double lo, double hi, std::vector<Breakpoint> bps, const GridSpec& spec) {
    bps.push_back({lo, spec.h_max});
    bps.push_back({hi, spec.h_max});
    std::sort(bps.begin(), bps.end(), [](const Breakpoint& a, const Breakpoint& b) {
        return a.coord < b.coord;
    });
    // merge coincident breakpoints, keeping the finest requested spacing
    std::vector<Breakpoint> merged;
    for (const auto& b : bps) {
        if (b.coord < lo - 1e-15 || b.coord > hi + 1e-15) continue;
        if (!merged.empty() && std::abs(b.coord - merged.back().coord) < 1e-12 * (hi - lo))
            merged.back().h = std::min(merged.back().h, b.h);
        else
            merged.push_back(b);
    }
    Axis axis;
    axis.nodes.push_back(merged.front().coord);
    for (size_t k = 0; k + 1 < merged.size(); ++k) {
        std::vector<double> steps;
        fill_interval(merged[k + 1].coord - merged[k].coord, merged[k].h, merged[k + 1].h,
                      spec.h_max, spec.growth, steps);
        double x = merged[k].coord;
        for (size_t i = 0; i + 1 < steps.size(); ++i) {
            x += steps[i];
            axis.nodes.push_back(x);
        }
        axis.nodes.push_back(merged[k + 1].coord);  // land exactly on the breakpoint
    }
    return axis;
}

}  // namespace detail

struct Grid2D {
    Axis x, z;

    Grid2D refined() const { return Grid2D{x.refined(), z.refined()}; }

    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        detail::hash_mix(h, static_cast<std::uint64_t>(x.size()));
        detail::hash_mix(h, static_cast<std::uint64_t>(z.size()));
        for (double v : x.nodes) detail::hash_mix(h, v);
        for (double v : z.nodes) detail::hash_mix(h, v);
        return h;
    }
};

inline Grid2D build_grid(const CrossSection& s, const GridSpec& spec) {
    std::vector<detail::Breakpoint> bx, bz;
    for (const auto& c : s.conductors) {
        bx.push_back({c.x0, spec.h_fine});
        bx.push_back({c.x1, spec.h_fine});
        bz.push_back({c.z, spec.h_fine});
    }
    for (const auto& d : s.dielectrics) {
        bx.push_back({d.x0, spec.h_interface});
        bx.push_back({d.x1, spec.h_interface});
        bz.push_back({d.z0, spec.h_interface});
        bz.push_back({d.z1, spec.h_interface});
    }
    for (const auto& p : s.hints) {
        bx.push_back({p.x, p.spacing});
        bz.push_back({p.z, p.spacing});
    }
    return Grid2D{detail::build_axis(s.x_min, s.x_max, bx, spec),
                  detail::build_axis(s.z_min, s.z_max, bz, spec)};
}

struct SolveInfo {
    double residual = 0.0;  // final scaled residual
    int sweeps = 0;
    bool converged = false;
    double tolerance = 0.0;
    std::vector<double> residual_history;
};

class SolveError : public std::runtime_error {
public:
    SolveError(const std::string& what, SolveInfo info)
        : std::runtime_error(what), info(std::move(info)) {}
    SolveInfo info;
};

struct SolverOptions {
    double tol = 1e-8;
    int max_sweeps = 200000;
    int check_every = 25;
    int cascade_levels = 3;  // total grid levels including the finest
};

struct FieldSample {
    double ex, ez;
    double magnitude;
};

namespace detail {

// Assembled 5-point operator for one grid level.
struct Stencil {
    int nx = 0, nz = 0;
    std::vector<double> aw, ae, as, an, diag;  // conductances, relative eps
    std::vector<std::uint8_t> fixed;
    std::vector<double> phi;
    std::vector<std::vector<int>> conductor_nodes;  // per section conductor

    int idx(int i, int j) const { return i + nx * j; }
};

inline double cell_eps(const CrossSection& s, double xm, double zm) {
    double eps = 1.0;
    for (const auto& d : s.dielectrics)
        if (xm > d.x0 && xm < d.x1 && zm > d.z0 && zm < d.z1) eps = d.eps_r;
    return eps;
}

inline Stencil assemble(const CrossSection& s, const Grid2D& g) {
    Stencil st;
    st.nx = g.x.size();
    st.nz = g.z.size();
    const int n = st.nx * st.nz;
    st.aw.assign(n, 0.0);
    st.ae.assign(n, 0.0);
    st.as.assign(n, 0.0);
    st.an.assign(n, 0.0);
    st.diag.assign(n, 0.0);
    st.fixed.assign(n, 0);
    st.phi.assign(n, 0.0);

    const int ncx = st.nx - 1, ncz = st.nz - 1;
    std::vector<double> eps(static_cast<size_t>(ncx) * ncz);
    for (int j = 0; j < ncz; ++j)
        for (int i = 0; i < ncx; ++i)
            eps[i + ncx * j] = cell_eps(s, 0.5 * (g.x.nodes[i] + g.x.nodes[i + 1]),
                                        0.5 * (g.z.nodes[j] + g.z.nodes[j + 1]));

    auto cell = [&](int i, int j) -> double {
        if (i < 0 || j < 0 || i >= ncx || j >= ncz) return 0.0;
        return eps[i + ncx * j];
    };

    for (int j = 0; j < st.nz; ++j) {
        const double hzs = j > 0 ? g.z.nodes[j] - g.z.nodes[j - 1] : 0.0;
        const double hzn = j < st.nz - 1 ? g.z.nodes[j + 1] - g.z.nodes[j] : 0.0;
        for (int i = 0; i < st.nx; ++i) {
            const double hxw = i > 0 ? g.x.nodes[i] - g.x.nodes[i - 1] : 0.0;
            const double hxe = i < st.nx - 1 ? g.x.nodes[i + 1] - g.x.nodes[i] : 0.0;
            const int k = st.idx(i, j);
            const double esw = cell(i - 1, j - 1), ese = cell(i, j - 1);
            const double enw = cell(i - 1, j), ene = cell(i, j);
            if (hxw > 0.0) st.aw[k] = (esw * hzs + enw * hzn) / (2.0 * hxw);
            if (hxe > 0.0) st.ae[k] = (ese * hzs + ene * hzn) / (2.0 * hxe);
            if (hzs > 0.0) st.as[k] = (esw * hxw + ese * hxe) / (2.0 * hzs);
            if (hzn > 0.0) st.an[k] = (enw * hxw + ene * hxe) / (2.0 * hzn);
            st.diag[k] = st.aw[k] + st.ae[k] + st.as[k] + st.an[k];
        }
    }

    st.conductor_nodes.resize(s.conductors.size());
    for (size_t c = 0; c < s.conductors.size(); ++c) {
        const auto& strip = s.conductors[c];
        const int j = g.z.nearest(strip.z);
        int i0 = g.x.nearest(strip.x0);
        int i1 = g.x.nearest(strip.x1);
        if (i1 <= i0) i1 = std::min(i0 + 1, st.nx - 1);
        for (int i = i0; i <= i1; ++i) {
            const int k = st.idx(i, j);
            if (st.fixed[k] && st.phi[k] != strip.volts)
                throw std::invalid_argument(
                    "fieldsolve: grid cannot separate conductors at different potentials");
            st.fixed[k] = 1;
            st.phi[k] = strip.volts;
            st.conductor_nodes[c].push_back(k);
        }
    }
    return st;
}

inline double residual_norm(const Stencil& st) {
    double sum = 0.0;
    for (int j = 0; j < st.nz; ++j)
        for (int i = 0; i < st.nx; ++i) {
            const int k = st.idx(i, j);
            if (st.fixed[k]) continue;
            double acc = -st.diag[k] * st.phi[k];
            if (i > 0) acc += st.aw[k] * st.phi[k - 1];
            if (i < st.nx - 1) acc += st.ae[k] * st.phi[k + 1];
            if (j > 0) acc += st.as[k] * st.phi[k - st.nx];
            if (j < st.nz - 1) acc += st.an[k] * st.phi[k + st.nx];
            sum += acc * acc;
        }
    return std::sqrt(sum);
}

inline void sor_sweep(Stencil& st, double omega) {
    for (int parity = 0; parity < 2; ++parity) {
        for (int j = 0; j < st.nz; ++j) {
            const int istart = (parity + j) % 2;
            for (int i = istart; i < st.nx; i += 2) {
                const int k = st.idx(i, j);
                if (st.fixed[k] || st.diag[k] == 0.0) continue;
                double acc = 0.0;
                if (i > 0) acc += st.aw[k] * st.phi[k - 1];
                if (i < st.nx - 1) acc += st.ae[k] * st.phi[k + 1];
                if (j > 0) acc += st.as[k] * st.phi[k - st.nx];
                if (j < st.nz - 1) acc += st.an[k] * st.phi[k + st.nx];
                st.phi[k] += omega * (acc / st.diag[k] - st.phi[k]);
            }
        }
    }
}

// Residual norm of the boundary-data-only state; fixes the convergence scale
// so that the stopping rule is invariant under rescaling the applied voltage.
inline double residual_scale(const Stencil& st) {
    Stencil probe = st;
    for (size_t k = 0; k < probe.phi.size(); ++k)
        if (!probe.fixed[k]) probe.phi[k] = 0.0;
    const double s = residual_norm(probe);
    return s > 0.0 ? s : 1.0;
}

inline void interpolate_onto(const Grid2D& from, const std::vector<double>& phi_from,
                             const Grid2D& to, std::vector<double>& phi_to) {
    const int nxf = from.x.size();
    phi_to.assign(static_cast<size_t>(to.x.size()) * to.z.size(), 0.0);
    for (int j = 0; j < to.z.size(); ++j) {
        const double z = std::clamp(to.z.nodes[j], from.z.nodes.front(), from.z.nodes.back());
        const int cz = from.z.cell_of(z);
        const double tz = (z - from.z.nodes[cz]) / (from.z.nodes[cz + 1] - from.z.nodes[cz]);
        for (int i = 0; i < to.x.size(); ++i) {
            const double x = std::clamp(to.x.nodes[i], from.x.nodes.front(), from.x.nodes.back());
            const int cx = from.x.cell_of(x);
            const double tx = (x - from.x.nodes[cx]) / (from.x.nodes[cx + 1] - from.x.nodes[cx]);
            const double p00 = phi_from[cx + nxf * cz];
            const double p10 = phi_from[cx + 1 + nxf * cz];
            const double p01 = phi_from[cx + nxf * (cz + 1)];
            const double p11 = phi_from[cx + 1 + nxf * (cz + 1)];
            phi_to[i + to.x.size() * j] =
                (1 - tx) * (1 - tz) * p00 + tx * (1 - tz) * p10 + (1 - tx) * tz * p01 + tx * tz * p11;
        }
    }
}

}  // namespace detail

class FieldMap {
public:
    Grid2D grid;
    std::vector<double> phi;      // V
    std::vector<double> ex, ez;   // V/m, nodal
    CrossSection section;         // geometry the map was solved on
    double applied_volts = 1.0;   // potential of the live conductor
    std::uint64_t geometry_hash = 0;
    std::uint64_t grid_hash = 0;
    SolveInfo info;

    int nx() const { return grid.x.size(); }
    int nz() const { return grid.z.size(); }

    double potential_at(double x, double z) const { return interp(phi, x, z); }

    FieldSample field_at(double x, double z) const {
        FieldSample s{interp(ex, x, z), interp(ez, x, z), 0.0};
        s.magnitude = std::hypot(s.ex, s.ez);
        return s;
    }

    // Discrete maximum principle: potential bounded by the conductor potentials.
    bool respects_maximum_principle(double slack = 1e-9) const {
        double lo = section.conductors.front().volts, hi = lo;
        for (const auto& c : section.conductors) {
            lo = std::min(lo, c.volts);
            hi = std::max(hi, c.volts);
        }
        const double span = std::max(hi - lo, 1e-300);
        for (double v : phi)
            if (v < lo - slack * span || v > hi + slack * span) return false;
        return true;
    }

    void compute_field() {
        const int n = nx(), m = nz();
        ex.assign(static_cast<size_t>(n) * m, 0.0);
        ez.assign(static_cast<size_t>(n) * m, 0.0);
        auto deriv = [](double fm, double f0, double fp, double hm, double hp) {
            return (hm / (hp * (hm + hp))) * (fp - f0) + (hp / (hm * (hm + hp))) * (f0 - fm);
        };
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < n; ++i) {
                const int k = i + n * j;
                double dx, dz;
                if (i == 0)
                    dx = (phi[k + 1] - phi[k]) / (grid.x.nodes[1] - grid.x.nodes[0]);
                else if (i == n - 1)
                    dx = (phi[k] - phi[k - 1]) / (grid.x.nodes[n - 1] - grid.x.nodes[n - 2]);
                else
                    dx = deriv(phi[k - 1], phi[k], phi[k + 1], grid.x.nodes[i] - grid.x.nodes[i - 1],
                               grid.x.nodes[i + 1] - grid.x.nodes[i]);
                if (j == 0)
                    dz = (phi[k + n] - phi[k]) / (grid.z.nodes[1] - grid.z.nodes[0]);
                else if (j == m - 1)
                    dz = (phi[k] - phi[k - n]) / (grid.z.nodes[m - 1] - grid.z.nodes[m - 2]);
                else
                    dz = deriv(phi[k - n], phi[k], phi[k + n], grid.z.nodes[j] - grid.z.nodes[j - 1],
                               grid.z.nodes[j + 1] - grid.z.nodes[j]);
                ex[k] = -dx;
                ez[k] = -dz;
            }
    }

private:
    double interp(const std::vector<double>& f, double x, double z) const {
        const int cx = grid.x.cell_of(x);
        const int cz = grid.z.cell_of(z);
        const int n = nx();
        const double tx = (x - grid.x.nodes[cx]) / (grid.x.nodes[cx + 1] - grid.x.nodes[cx]);
        const double tz = (z - grid.z.nodes[cz]) / (grid.z.nodes[cz + 1] - grid.z.nodes[cz]);
        return (1 - tx) * (1 - tz) * f[cx + n * cz] + tx * (1 - tz) * f[cx + 1 + n * cz] +
               (1 - tx) * tz * f[cx + n * (cz + 1)] + tx * tz * f[cx + 1 + n * (cz + 1)];
    }
};

// Solve on a prepared grid; deterministic for fixed inputs.
inline FieldMap solve_on_grid(const CrossSection& section, const Grid2D& grid,
                              const SolverOptions& opt = {}) {
    section.validate();
    if (!(opt.tol > 0.0)) throw std::invalid_argument("solve: tolerance must be > 0");

    // grid cascade, coarsest first
    std::vector<Grid2D> levels{grid};
    for (int l = 1; l < opt.cascade_levels; ++l) {
        const Grid2D& prev = levels.back();
        if (prev.x.size() < 12 || prev.z.size() < 12) break;
        levels.push_back(Grid2D{prev.x.coarsened(), prev.z.coarsened()});
    }
    std::reverse(levels.begin(), levels.end());

    detail::Stencil st;
    SolveInfo info;
    info.tolerance = opt.tol;
    std::vector<double> carry;
    for (size_t l = 0; l < levels.size(); ++l) {
        st = detail::assemble(section, levels[l]);
        if (l > 0) {
            // prolong the coarse solution, keeping this level's boundary data
            std::vector<double> guess;
            detail::interpolate_onto(levels[l - 1], carry, levels[l], guess);
            for (size_t k = 0; k < st.phi.size(); ++k)
                if (!st.fixed[k]) st.phi[k] = guess[k];
        }
        const double scale = detail::residual_scale(st);
        const int nmax = std::max(st.nx, st.nz);
        const double omega = 2.0 / (1.0 + std::sin(constants::pi / nmax));
        const bool finest = (l + 1 == levels.size());
        const double tol = finest ? opt.tol : opt.tol * 10.0;
        int sweeps = 0;
        double res = detail::residual_norm(st) / scale;
        while (res > tol && sweeps < opt.max_sweeps) {
            for (int c = 0; c < opt.check_every; ++c) detail::sor_sweep(st, omega);
            sweeps += opt.check_every;
            res = detail::residual_norm(st) / scale;
            if (finest) info.residual_history.push_back(res);
        }
        if (finest) {
            info.sweeps = sweeps;
            info.residual = res;
            info.converged = res <= tol;
            if (!info.converged)
                throw SolveError("fieldsolve: SOR did not reach tolerance " +
                                     std::to_string(opt.tol) + " after " + std::to_string(sweeps) +
                                     " sweeps (residual " + std::to_string(res) + ")",
                                 info);
        }
        carry = st.phi;
    }

    FieldMap map;
    map.grid = levels.back();
    map.phi = std::move(st.phi);
    map.section = section;
    map.geometry_hash = section.hash();
    map.grid_hash = map.grid.hash();
    map.info = info;
    double live = 0.0;
    for (const auto& c : section.conductors) live = std::max(live, std::abs(c.volts));
    map.applied_volts = live > 0.0 ? live : 1.0;
    map.compute_field();
    return map;
}

inline FieldMap solve(const CrossSection& section, const GridSpec& spec, const SolverOptions& opt = {}) {
    return solve_on_grid(section, build_grid(section, spec), opt);
}

inline FieldMap solve(const CrossSection& section, const SolverOptions& opt = {}) {
    return solve(section, GridSpec::suggested(section), opt);
}

// ---------------------------------------------------------------------------
// Capacitance per unit length from a converged per-volt map.

struct CapacitanceResult {
    double energy_method;  // F/m, from the field energy integral
    double charge_method;  // F/m, from the Gauss-law charge on the live conductor
    double value;          // F/m, mean of the two
    bool consistent(double tol = 0.02) const {
        return std::abs(energy_method - charge_method) <= tol * value;
    }
};

inline CapacitanceResult capacitance_per_length(const FieldMap& map,
                                                const std::string& live_name = {}) {
    const CrossSection& s = map.section;
    int live = -1;
    for (size_t c = 0; c < s.conductors.size(); ++c) {
        if (live_name.empty() ? s.conductors[c].volts != 0.0 : s.conductors[c].name == live_name)
            live = static_cast<int>(c);
        if (live >= 0) break;
    }
    if (live < 0) throw std::invalid_argument("capacitance_per_length: live conductor not found");
    const double volts = s.conductors[live].volts;
    if (volts == 0.0) throw std::invalid_argument("capacitance_per_length: live conductor at 0 V");

    const Axis& ax = map.grid.x;
    const Axis& az = map.grid.z;
    const int n = ax.size();

    // field-energy route: W' = 1/2 sum eps |E|^2 over cells
    double energy = 0.0;
    for (int j = 0; j + 1 < az.size(); ++j) {
        const double hz = az.nodes[j + 1] - az.nodes[j];
        for (int i = 0; i + 1 < n; ++i) {
            const double hx = ax.nodes[i + 1] - ax.nodes[i];
            const double p00 = map.phi[i + n * j], p10 = map.phi[i + 1 + n * j];
            const double p01 = map.phi[i + n * (j + 1)], p11 = map.phi[i + 1 + n * (j + 1)];
            const double exc = -0.5 * ((p10 - p00) + (p11 - p01)) / hx;
            const double ezc = -0.5 * ((p01 - p00) + (p11 - p10)) / hz;
            const double eps = detail::cell_eps(s, 0.5 * (ax.nodes[i] + ax.nodes[i + 1]),
                                                0.5 * (az.nodes[j] + az.nodes[j + 1]));
            energy += 0.5 * eps * (exc * exc + ezc * ezc) * hx * hz;
        }
    }

    // Gauss-law route: discrete flux out of the live conductor nodes
    detail::Stencil st = detail::assemble(s, map.grid);
    st.phi = map.phi;
    double charge = 0.0;
    for (int k : st.conductor_nodes[live]) {
        const int i = k % st.nx, j = k / st.nx;
        double acc = st.diag[k] * st.phi[k];
        if (i > 0) acc -= st.aw[k] * st.phi[k - 1];
        if (i < st.nx - 1) acc -= st.ae[k] * st.phi[k + 1];
        if (j > 0) acc -= st.as[k] * st.phi[k - st.nx];
        if (j < st.nz - 1) acc -= st.an[k] * st.phi[k + st.nx];
        charge += acc;
    }

    CapacitanceResult r;
    r.energy_method = constants::eps0 * 2.0 * energy / (volts * volts);
    r.charge_method = constants::eps0 * charge / volts;
    r.value = 0.5 * (r.energy_method + r.charge_method);
    return r;
}

// ---------------------------------------------------------------------------
// Cloud-weighted field homogeneity.

// eta over a cloud centered at (xc, zc) in a translationally invariant map:
// the field is constant along the cloud's long axis by assumption.
inline double homogeneity_eta(const FieldMap& map, const AtomCloud& cloud, double xc, double zc) {
    const double e0 = map.field_at(xc, zc).magnitude;
    if (!(e0 > 0.0)) throw std::domain_error("homogeneity_eta: zero field at cloud center");
    const int npts = 41;
    const QuadratureRule rule = gauss_legendre(npts);
    const double half = 3.0 * cloud.sigma_r;
    double acc = 0.0;
    for (int a = 0; a < npts; ++a)
        for (int b = 0; b < npts; ++b) {
            const double dx = half * rule.nodes[a];
            const double dz = half * rule.nodes[b];
            const double w = rule.weights[a] * rule.weights[b] * half * half;
            const double rho = std::exp(-(dx * dx + dz * dz) / (2.0 * cloud.sigma_r * cloud.sigma_r)) /
                               (2.0 * constants::pi * cloud.sigma_r * cloud.sigma_r);
            const double f = map.field_at(xc + dx, zc + dz).magnitude / e0 - 1.0;
            acc += w * rho * f * f;
        }
    return std::sqrt(acc);
}

// eta from two orthogonal cuts of a 3D geometry: transverse map (x, z) and
// longitudinal map (y, z), combined as a separable relative-field product.
inline double homogeneity_eta(const FieldMap& xz, const FieldMap& yz, const AtomCloud& cloud,
                              double xc, double zc, double yc, double zc_long) {
    const double e0_xz = xz.field_at(xc, zc).magnitude;
    const double e0_yz = yz.field_at(yc, zc_long).magnitude;
    if (!(e0_xz > 0.0) || !(e0_yz > 0.0))
        throw std::domain_error("homogeneity_eta: zero field at cloud center");
    const int npts = 33;
    const QuadratureRule rule = gauss_legendre(npts);
    const double half_r = 3.0 * cloud.sigma_r;
    const double half_y = 3.0 * cloud.sigma_y;
    std::vector<double> fy(npts);
    for (int c = 0; c < npts; ++c)
        fy[c] = yz.field_at(yc + half_y * rule.nodes[c], zc_long).magnitude / e0_yz;
    double acc = 0.0;
    for (int a = 0; a < npts; ++a)
        for (int b = 0; b < npts; ++b) {
            const double dx = half_r * rule.nodes[a];
            const double dz = half_r * rule.nodes[b];
            const double fxz = xz.field_at(xc + dx, zc + dz).magnitude / e0_xz;
            const double rho_r = std::exp(-(dx * dx + dz * dz) /
                                          (2.0 * cloud.sigma_r * cloud.sigma_r)) /
                                 (2.0 * constants::pi * cloud.sigma_r * cloud.sigma_r);
            for (int c = 0; c < npts; ++c) {
                const double dy = half_y * rule.nodes[c];
                const double rho = rho_r *
                                   std::exp(-dy * dy / (2.0 * cloud.sigma_y * cloud.sigma_y)) /
                                   (std::sqrt(2.0 * constants::pi) * cloud.sigma_y);
                const double w = rule.weights[a] * rule.weights[b] * rule.weights[c] * half_r *
                                 half_r * half_y;
                const double f = fxz * fy[c] - 1.0;
                acc += w * rho * f * f;
            }
        }
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// CSV export / import: header carries the axes, units and the geometry hash;
// rows are x_m, z_m, phi_V, Ex_V_per_m, Ez_V_per_m in z-major order.

inline void export_csv(const FieldMap& map, std::ostream& out) {
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
    };
    out << "# cavkit fieldmap v1\n";
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(map.geometry_hash));
    out << "# geometry_hash=" << buf << "\n";
    out << "# applied_volts=";
    put(map.applied_volts);
    out << "\n# units: x_m, z_m, phi_V, Ex_V_per_m, Ez_V_per_m\n";
    out << "# x_axis_m=";
    for (int i = 0; i < map.nx(); ++i) {
        if (i) out << ' ';
        put(map.grid.x.nodes[i]);
    }
    out << "\n# z_axis_m=";
    for (int j = 0; j < map.nz(); ++j) {
        if (j) out << ' ';
        put(map.grid.z.nodes[j]);
    }
    out << "\nx_m,z_m,phi_V,Ex_V_per_m,Ez_V_per_m\n";
    for (int j = 0; j < map.nz(); ++j)
        for (int i = 0; i < map.nx(); ++i) {
            const int k = i + map.nx() * j;
            put(map.grid.x.nodes[i]);
            out << ',';
            put(map.grid.z.nodes[j]);
            out << ',';
            put(map.phi[k]);
            out << ',';
            put(map.ex[k]);
            out << ',';
            put(map.ez[k]);
            out << '\n';
        }
}

inline void export_csv(const FieldMap& map, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("export_csv: cannot open " + path);
    export_csv(map, f);
}

// Reads a map written by export_csv. The section is not recoverable from the
// file; only grid, potentials and fields are restored.
inline FieldMap import_csv(std::istream& in) {
    FieldMap map;
    std::string line;
    auto parse_axis = [](const std::string& text) {
        Axis a;
        std::istringstream ss(text);
        double v;
        while (ss >> v) a.nodes.push_back(v);
        return a;
    };
    while (std::getline(in, line)) {
        if (line.rfind("# geometry_hash=", 0) == 0)
            map.geometry_hash = std::stoull(line.substr(16), nullptr, 16);
        else if (line.rfind("# applied_volts=", 0) == 0)
            map.applied_volts = std::stod(line.substr(16));
        else if (line.rfind("# x_axis_m=", 0) == 0)
            map.grid.x = parse_axis(line.substr(11));
        else if (line.rfind("# z_axis_m=", 0) == 0)
            map.grid.z = parse_axis(line.substr(11));
        else if (line.rfind("x_m,", 0) == 0)
            break;
    }
    if (map.grid.x.size() < 2 || map.grid.z.size() < 2)
        throw std::runtime_error("import_csv: missing axis header");
    const size_t n = static_cast<size_t>(map.nx()) * map.nz();
    map.phi.assign(n, 0.0);
    map.ex.assign(n, 0.0);
    map.ez.assign(n, 0.0);
    size_t row = 0;
    while (row < n && std::getline(in, line)) {
        if (line.empty()) continue;
        double x, z, p, ex, ez;
        if (std::sscanf(line.c_str(), "%lg,%lg,%lg,%lg,%lg", &x, &z, &p, &ex, &ez) != 5)
            throw std::runtime_error("import_csv: malformed row");
        map.phi[row] = p;
        map.ex[row] = ex;
        map.ez[row] = ez;
        ++row;
    }
    if (row != n) throw std::runtime_error("import_csv: truncated file");
    map.grid_hash = map.grid.hash();
    return map;
}

inline FieldMap import_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("import_csv: cannot open " + path);
    return import_csv(f);
}

}  // namespace cavkit
