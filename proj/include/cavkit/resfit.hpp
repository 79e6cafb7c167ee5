#pragma once

// Reflection-spectroscopy model of a shunt-coupled resonator and the
// three-stage background-corrected fit: (1) mask the dip and fit the
// amplitude/phase background, (2) fit the theta-rotated resonance on the
// background-divided data, (3) joint refit of the full model on raw data.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavkit/constants.hpp"
#include "cavkit/levmar.hpp"

namespace cavkit {

struct S11Trace {
    std::vector<double> omega;                // rad/s, strictly increasing
    std::vector<std::complex<double>> s11;

    void validate() const {
        if (omega.size() != s11.size()) throw std::invalid_argument("S11Trace: size mismatch");
        if (omega.size() < 32) throw std::invalid_argument("S11Trace: need at least 32 samples");
        for (size_t i = 0; i < omega.size(); ++i) {
            if (!std::isfinite(omega[i]) || !std::isfinite(s11[i].real()) ||
                !std::isfinite(s11[i].imag()))
                throw std::invalid_argument("S11Trace: non-finite sample");
            if (i > 0 && omega[i] <= omega[i - 1])
                throw std::invalid_argument("S11Trace: frequency axis must increase");
        }
    }
};

// Ideal reflection of a high-Q shunt-coupled series resonator.
inline std::complex<double> ideal_response(double omega0, double kappa_int, double kappa_ext,
                                           double omega) {
    if (!(kappa_int >= 0.0) || !(kappa_ext > 0.0))
        throw std::invalid_argument("ideal_response: rates must be positive");
    const double kappa = kappa_int + kappa_ext;
    return -1.0 + 2.0 * kappa_ext /
                      std::complex<double>(kappa, 2.0 * (omega - omega0));
}

// Full measurement model: polynomial amplitude and linear phase background
// times the theta-rotated resonance term.
struct S11Params {
    double omega0 = 0.0;
    double kappa_int = 0.0;
    double kappa_ext = 0.0;
    double theta = 0.0;
    double a0 = 1.0, a1 = 0.0, a2 = 0.0;  // amplitude polynomial in omega
    double phi0 = 0.0, phi1 = 0.0;        // phase polynomial in omega
};

inline std::complex<double> background_of(const S11Params& p, double omega) {
    const double amp = p.a0 + p.a1 * omega + p.a2 * omega * omega;
    return std::polar(1.0, p.phi0 + p.phi1 * omega) * amp;
}

inline std::complex<double> model_response(const S11Params& p, double omega) {
    const double kappa = p.kappa_int + p.kappa_ext;
    const std::complex<double> resonant =
        1.0 - 2.0 * p.kappa_ext * std::polar(1.0, p.theta) /
                  std::complex<double>(kappa, 2.0 * (omega - p.omega0));
    return background_of(p, omega) * resonant;
}

// Deterministic synthetic trace; sigma is the rms magnitude of the complex
// noise (sigma/sqrt(2) per quadrature).
inline S11Trace synth_trace(const S11Params& p, double omega_lo, double omega_hi, int n,
                            double noise_sigma, std::uint64_t seed) {
    if (n < 32) throw std::invalid_argument("synth_trace: need at least 32 samples");
    if (!(omega_hi > omega_lo)) throw std::invalid_argument("synth_trace: empty span");
    S11Trace t;
    t.omega.resize(n);
    t.s11.resize(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double q = noise_sigma / std::sqrt(2.0);
    for (int i = 0; i < n; ++i) {
        t.omega[i] = omega_lo + (omega_hi - omega_lo) * i / (n - 1.0);
        std::complex<double> v = model_response(p, t.omega[i]);
        if (noise_sigma > 0.0) v += std::complex<double>(q * gauss(rng), q * gauss(rng));
        t.s11[i] = v;
    }
    return t;
}

class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, std::string diagnostics = {})
        : std::runtime_error(what), diagnostics(std::move(diagnostics)) {}
    std::string diagnostics;
};

struct FitOptions {
    double mask_halfwidth_kappas = 3.0;  // dip exclusion half-width for the background stage
    double min_dip_snr = 3.0;            // dip depth over noise floor
    LMOptions lm;
};

struct FitResult {
    S11Params params;
    // standard errors, same layout as the parameter struct
    double omega0_err = 0.0, kappa_int_err = 0.0, kappa_ext_err = 0.0, theta_err = 0.0;
    double a0_err = 0.0, a1_err = 0.0, a2_err = 0.0, phi0_err = 0.0, phi1_err = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;
    // stage diagnostics
    double dip_depth = 0.0;
    double noise_floor = 0.0;
    double kappa_preliminary = 0.0;
    // internal frequency normalization, kept for exact background evaluation
    double omega_center = 0.0;
    double omega_scale = 1.0;
    double u_amp[3] = {1.0, 0.0, 0.0};   // amplitude polynomial in u
    double u_phase[2] = {0.0, 0.0};      // phase polynomial in u

    std::complex<double> background_at(double omega) const {
        const double u = (omega - omega_center) / omega_scale;
        const double amp = u_amp[0] + u_amp[1] * u + u_amp[2] * u * u;
        return std::polar(1.0, u_phase[0] + u_phase[1] * u) * amp;
    }
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
}

// Robust noise floor from first differences of the magnitude.
inline double estimate_noise(const std::vector<double>& mag) {
    std::vector<double> d;
    d.reserve(mag.size());
    for (size_t i = 1; i < mag.size(); ++i) d.push_back(std::abs(mag[i] - mag[i - 1]));
    return 1.4826 * median_of(std::move(d)) / std::sqrt(2.0);
}

struct Preliminary {
    size_t dip_index;
    double omega0;
    double kappa;
    double depth;
    double background_level;
    double noise;
};

inline Preliminary locate_dip(const S11Trace& t, const FitOptions& opt) {
    const size_t n = t.omega.size();
    std::vector<double> mag(n);
    for (size_t i = 0; i < n; ++i) mag[i] = std::abs(t.s11[i]);

    const size_t imin = std::min_element(mag.begin(), mag.end()) - mag.begin();
    // background level from the outer quarters of the span
    std::vector<double> outer;
    for (size_t i = 0; i < n; ++i)
        if (i < n / 4 || i >= n - n / 4) outer.push_back(mag[i]);
    Preliminary pre;
    pre.dip_index = imin;
    pre.background_level = median_of(std::move(outer));
    pre.depth = pre.background_level - mag[imin];
    pre.noise = estimate_noise(mag);
    if (pre.depth < std::max(opt.min_dip_snr * pre.noise, 5e-3 * pre.background_level))
        throw FitError("fit: no discernible dip in the trace",
                       "depth=" + std::to_string(pre.depth) +
                           " noise=" + std::to_string(pre.noise));
    pre.omega0 = t.omega[imin];

    const double half_level = mag[imin] + 0.5 * pre.depth;
    size_t lo = imin, hi = imin;
    while (lo > 0 && mag[lo] < half_level) --lo;
    while (hi + 1 < n && mag[hi] < half_level) ++hi;
    const bool lo_ok = mag[lo] >= half_level;
    const bool hi_ok = mag[hi] >= half_level;
    // a skewed lineshape may recross the half level on one side only
    if (lo_ok && hi_ok)
        pre.kappa = t.omega[hi] - t.omega[lo];
    else if (lo_ok)
        pre.kappa = 2.0 * (t.omega[imin] - t.omega[lo]);
    else if (hi_ok)
        pre.kappa = 2.0 * (t.omega[hi] - t.omega[imin]);
    else
        throw FitError("fit: trace span does not cover the resonance linewidth");
    if (t.omega.back() - t.omega.front() < 3.0 * pre.kappa)
        throw FitError("fit: trace spans fewer than 3 linewidths");
    return pre;
}

}  // namespace detail

inline FitResult fit(const S11Trace& trace, const FitOptions& opt = {}) {
    trace.validate();
    const size_t n = trace.omega.size();
    const detail::Preliminary pre = detail::locate_dip(trace, opt);

    const double wc = 0.5 * (trace.omega.front() + trace.omega.back());
    const double ws = 0.5 * (trace.omega.back() - trace.omega.front());
    std::vector<double> u(n);
    for (size_t i = 0; i < n; ++i) u[i] = (trace.omega[i] - wc) / ws;

    // ---- stage 1: background on the masked-out remainder -------------------
    // The mask shrinks if it would swallow nearly the whole trace; the joint
    // stage later removes any remaining bias.
    std::vector<size_t> bg_idx;
    double mask = opt.mask_halfwidth_kappas * pre.kappa;
    for (;;) {
        bg_idx.clear();
        for (size_t i = 0; i < n; ++i)
            if (std::abs(trace.omega[i] - pre.omega0) > mask) bg_idx.push_back(i);
        if (bg_idx.size() >= std::max<size_t>(16, n / 4) || mask < 0.25 * pre.kappa) break;
        mask *= 0.8;
    }
    if (bg_idx.size() < 16)
        throw FitError("fit: background mask leaves too few samples",
                       "remaining=" + std::to_string(bg_idx.size()));

    // linear least squares for |bg| as a quadratic in u
    double amp_seed[3];
    {
        double a[9] = {0}, b[3] = {0};
        for (size_t i : bg_idx) {
            const double m = std::abs(trace.s11[i]);
            const double basis[3] = {1.0, u[i], u[i] * u[i]};
            for (int r = 0; r < 3; ++r) {
                b[r] += basis[r] * m;
                for (int c = 0; c < 3; ++c) a[r * 3 + c] += basis[r] * basis[c];
            }
        }
        std::vector<double> sol;
        if (!detail::cholesky_solve({a, a + 9}, {b, b + 3}, 3, sol))
            throw FitError("fit: degenerate background system");
        std::copy(sol.begin(), sol.end(), amp_seed);
    }
    // unwrapped phase, linear in u
    double phase_seed[2];
    {
        std::vector<double> ph(n);
        ph[0] = std::arg(trace.s11[0]);
        for (size_t i = 1; i < n; ++i) {
            double step = std::arg(trace.s11[i]) - std::arg(trace.s11[i - 1]);
            while (step > constants::pi) step -= 2.0 * constants::pi;
            while (step < -constants::pi) step += 2.0 * constants::pi;
            ph[i] = ph[i - 1] + step;
        }
        double sxx = 0, sx = 0, sy = 0, sxy = 0, count = 0;
        for (size_t i : bg_idx) {
            sxx += u[i] * u[i];
            sx += u[i];
            sy += ph[i];
            sxy += u[i] * ph[i];
            count += 1.0;
        }
        const double denom = count * sxx - sx * sx;
        phase_seed[1] = (count * sxy - sx * sy) / denom;
        phase_seed[0] = (sy - phase_seed[1] * sx) / count;
    }
    // refine the five background parameters on complex residuals
    std::vector<double> bg_params{amp_seed[0], amp_seed[1], amp_seed[2], phase_seed[0],
                                  phase_seed[1]};
    {
        auto residuals = [&](const std::vector<double>& p, std::vector<double>& r) {
            r.resize(2 * bg_idx.size());
            size_t k = 0;
            for (size_t i : bg_idx) {
                const double amp = p[0] + p[1] * u[i] + p[2] * u[i] * u[i];
                const std::complex<double> model = std::polar(1.0, p[3] + p[4] * u[i]) * amp;
                const std::complex<double> e = model - trace.s11[i];
                r[k++] = e.real();
                r[k++] = e.imag();
            }
        };
        LMOptions lm = opt.lm;
        lm.max_iterations = 60;
        bg_params = levenberg_marquardt(residuals, bg_params, lm).params;
    }

    // ---- stage 2: resonance on the background-divided data -----------------
    auto resonant_term = [&](const std::vector<double>& p, size_t i) {
        // p = { u0, kappa/ws, kappa_ext/ws, theta }
        return 1.0 - 2.0 * p[2] * std::polar(1.0, p[3]) /
                         std::complex<double>(p[1], 2.0 * (u[i] - p[0]));
    };
    auto background_at = [&](const std::vector<double>& bp, size_t i) {
        const double amp = bp[0] + bp[1] * u[i] + bp[2] * u[i] * u[i];
        return std::polar(1.0, bp[3] + bp[4] * u[i]) * amp;
    };
    // Least-squares background of the data divided by a trial resonance.
    auto refit_background = [&](const std::vector<double>& resonance) {
        double a[9] = {0}, b[3] = {0};
        double sxx = 0, sx = 0, sy = 0, sxy = 0, count = 0;
        std::complex<double> prev = 1.0;
        double phase = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const std::complex<double> flat = trace.s11[i] / resonant_term(resonance, i);
            const double m = std::abs(flat);
            const double basis[3] = {1.0, u[i], u[i] * u[i]};
            for (int r = 0; r < 3; ++r) {
                b[r] += basis[r] * m;
                for (int c = 0; c < 3; ++c) a[r * 3 + c] += basis[r] * basis[c];
            }
            double step = std::arg(flat) - std::arg(prev);
            while (step > constants::pi) step -= 2.0 * constants::pi;
            while (step < -constants::pi) step += 2.0 * constants::pi;
            phase = (i == 0) ? std::arg(flat) : phase + step;
            prev = flat;
            sxx += u[i] * u[i];
            sx += u[i];
            sy += phase;
            sxy += u[i] * phase;
            count += 1.0;
        }
        std::vector<double> amp_sol;
        if (!detail::cholesky_solve({a, a + 9}, {b, b + 3}, 3, amp_sol))
            throw FitError("fit: degenerate background system");
        const double denom = count * sxx - sx * sx;
        const double p1 = (count * sxy - sx * sy) / denom;
        const double p0 = (sy - p1 * sx) / count;
        return std::vector<double>{amp_sol[0], amp_sol[1], amp_sol[2], p0, p1};
    };

    struct Candidate {
        std::vector<double> resonance;   // stage-2 parameters
        std::vector<double> background;  // the background it was fit against
        double ssr;
    };
    std::vector<Candidate> candidates;
    auto run_stage2 = [&](const std::vector<double>& bp) {
        std::vector<std::complex<double>> corrected(n);
        for (size_t i = 0; i < n; ++i) corrected[i] = trace.s11[i] / background_at(bp, i);
        auto residuals = [&](const std::vector<double>& p, std::vector<double>& r) {
            r.resize(2 * n);
            for (size_t i = 0; i < n; ++i) {
                const std::complex<double> e = resonant_term(p, i) - corrected[i];
                r[2 * i] = e.real();
                r[2 * i + 1] = e.imag();
            }
        };
        const double dip_mag = std::abs(corrected[pre.dip_index]);
        for (double branch : {1.0 - dip_mag, 1.0 + dip_mag})
            for (double theta0 : {0.0, 0.5 * constants::pi, -0.5 * constants::pi, constants::pi}) {
                std::vector<double> seed{(pre.omega0 - wc) / ws, pre.kappa / ws,
                                         0.5 * std::abs(branch) * pre.kappa / ws, theta0};
                LMOptions lm = opt.lm;
                lm.max_iterations = 120;
                const LMResult r = levenberg_marquardt(residuals, seed, lm);
                candidates.push_back({r.params, bp, r.ssr});
            }
    };

    // The masked background is the published route; it extrapolates poorly
    // when the window is only a few linewidths, so backgrounds derived by
    // dividing out crude trial resonances compete on equal footing.
    run_stage2(bg_params);
    const double dip_rel = std::abs(trace.s11[pre.dip_index]) / pre.background_level;
    for (double branch : {0.5 * (1.0 - dip_rel), 0.5 * (1.0 + dip_rel)}) {
        const std::vector<double> crude{(pre.omega0 - wc) / ws, pre.kappa / ws,
                                        std::max(branch, 0.05) * pre.kappa / ws, 0.0};
        run_stage2(refit_background(crude));
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return a.ssr < b.ssr; });

    // One alternation on the best candidate: refit its background on the
    // resonance-divided full span, then polish the resonance against it.
    if (!candidates.empty()) {
        Candidate best = candidates.front();
        const std::vector<double> bp = refit_background(best.resonance);
        std::vector<std::complex<double>> corrected(n);
        for (size_t i = 0; i < n; ++i) corrected[i] = trace.s11[i] / background_at(bp, i);
        auto residuals = [&](const std::vector<double>& p, std::vector<double>& r) {
            r.resize(2 * n);
            for (size_t i = 0; i < n; ++i) {
                const std::complex<double> e = resonant_term(p, i) - corrected[i];
                r[2 * i] = e.real();
                r[2 * i + 1] = e.imag();
            }
        };
        LMOptions lm = opt.lm;
        lm.max_iterations = 120;
        const LMResult polished = levenberg_marquardt(residuals, best.resonance, lm);
        candidates.insert(candidates.begin(), {polished.params, bp, polished.ssr});
    }

    // ---- stage 3: joint refit of the raw data ------------------------------
    auto stage3_residuals = [&](const std::vector<double>& p, std::vector<double>& r) {
        // p = { u0, kappa/ws, kappa_ext/ws, theta, A0, A1, A2, P0, P1 }
        r.resize(2 * n);
        for (size_t i = 0; i < n; ++i) {
            const double amp = p[4] + p[5] * u[i] + p[6] * u[i] * u[i];
            const std::complex<double> bg = std::polar(1.0, p[7] + p[8] * u[i]) * amp;
            const std::complex<double> res =
                1.0 - 2.0 * p[2] * std::polar(1.0, p[3]) /
                          std::complex<double>(p[1], 2.0 * (u[i] - p[0]));
            const std::complex<double> e = bg * res - trace.s11[i];
            r[2 * i] = e.real();
            r[2 * i + 1] = e.imag();
        }
    };
    LMResult joint;
    joint.ssr = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < std::min<size_t>(4, candidates.size()); ++k) {
        const Candidate& c = candidates[k];
        const std::vector<double> seed{c.resonance[0],  c.resonance[1],  c.resonance[2],
                                       c.resonance[3],  c.background[0], c.background[1],
                                       c.background[2], c.background[3], c.background[4]};
        const LMResult r = levenberg_marquardt(stage3_residuals, seed, opt.lm);
        if (r.ssr < joint.ssr) joint = r;
    }
    if (!joint.converged)
        throw FitError("fit: final stage did not converge",
                       "ssr=" + std::to_string(joint.ssr) +
                           " iterations=" + std::to_string(joint.iterations));
    if (std::abs(joint.params[0]) > 1.0)
        throw FitError("fit: fitted resonance lies outside the trace span",
                       "u0=" + std::to_string(joint.params[0]));

    // ---- map back to physical parameters ------------------------------------
    const auto& p = joint.params;
    FitResult out;
    out.omega_center = wc;
    out.omega_scale = ws;
    out.params.omega0 = wc + ws * p[0];
    const double kappa = ws * p[1];
    // canonical branch: (kappa_ext, theta) and (-kappa_ext, theta + pi)
    // describe the same response
    double kappa_ext = ws * p[2];
    double theta = p[3];
    if (kappa_ext < 0.0) {
        kappa_ext = -kappa_ext;
        theta += constants::pi;
    }
    out.params.kappa_ext = kappa_ext;
    out.params.kappa_int = std::max(0.0, kappa - kappa_ext);
    out.params.theta = std::remainder(theta, 2.0 * constants::pi);
    out.u_amp[0] = p[4];
    out.u_amp[1] = p[5];
    out.u_amp[2] = p[6];
    out.u_phase[0] = p[7];
    out.u_phase[1] = p[8];
    // amplitude/phase polynomials re-expressed in omega
    out.params.a2 = p[6] / (ws * ws);
    out.params.a1 = p[5] / ws - 2.0 * p[6] * wc / (ws * ws);
    out.params.a0 = p[4] - p[5] * wc / ws + p[6] * wc * wc / (ws * ws);
    out.params.phi1 = p[8] / ws;
    out.params.phi0 = p[7] - p[8] * wc / ws;

    const auto cov = [&](int i, int j) { return joint.covariance[i * 9 + j]; };
    out.omega0_err = ws * joint.std_errors[0];
    out.kappa_ext_err = ws * joint.std_errors[2];
    out.kappa_int_err =
        ws * std::sqrt(std::max(0.0, cov(1, 1) + cov(2, 2) - 2.0 * cov(1, 2)));
    out.theta_err = joint.std_errors[3];
    out.a0_err = std::sqrt(std::max(
        0.0, cov(4, 4) + cov(5, 5) * wc * wc / (ws * ws) +
                 cov(6, 6) * std::pow(wc / ws, 4.0) - 2.0 * cov(4, 5) * wc / ws +
                 2.0 * cov(4, 6) * wc * wc / (ws * ws) - 2.0 * cov(5, 6) * wc * wc * wc / (ws * ws * ws)));
    out.a1_err = std::sqrt(std::max(
        0.0, (cov(5, 5) + 4.0 * cov(6, 6) * wc * wc / (ws * ws) - 4.0 * cov(5, 6) * wc / ws))) /
        ws;
    out.a2_err = joint.std_errors[6] / (ws * ws);
    out.phi0_err = std::sqrt(std::max(0.0, cov(7, 7) + cov(8, 8) * wc * wc / (ws * ws) -
                                               2.0 * cov(7, 8) * wc / ws));
    out.phi1_err = joint.std_errors[8] / ws;

    out.residual_norm = std::sqrt(joint.ssr);
    out.iterations = joint.iterations;
    out.dip_depth = pre.depth;
    out.noise_floor = pre.noise;
    out.kappa_preliminary = pre.kappa;
    return out;
}

// Divide out the fitted background and remove the interference rotation from
// the resonant term; a noiseless trace becomes -ideal_response exactly.
inline S11Trace background_correct(const S11Trace& trace, const FitResult& fit) {
    S11Trace out;
    out.omega = trace.omega;
    out.s11.resize(trace.s11.size());
    const std::complex<double> rot = std::polar(1.0, -fit.params.theta);
    for (size_t i = 0; i < trace.omega.size(); ++i) {
        const std::complex<double> divided = trace.s11[i] / fit.background_at(trace.omega[i]);
        out.s11[i] = 1.0 - rot * (1.0 - divided);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trace CSV: freq_Hz, re_S11, im_S11 with a mandatory header row.

inline void write_trace_csv(const S11Trace& t, std::ostream& out) {
    out << "freq_Hz,re_S11,im_S11\n";
    char buf[128];
    for (size_t i = 0; i < t.omega.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n",
                      t.omega[i] / (2.0 * constants::pi), t.s11[i].real(), t.s11[i].imag());
        out << buf;
    }
}

inline void write_trace_csv(const S11Trace& t, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_trace_csv: cannot open " + path);
    write_trace_csv(t, f);
}

inline S11Trace read_trace_csv(std::istream& in) {
    S11Trace t;
    std::string line;
    if (!std::getline(in, line) || line.rfind("freq_Hz", 0) != 0)
        throw std::runtime_error("read_trace_csv: missing freq_Hz,re_S11,im_S11 header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double f, re, im;
        if (std::sscanf(line.c_str(), "%lg,%lg,%lg", &f, &re, &im) != 3)
            throw std::runtime_error("read_trace_csv: malformed row: " + line);
        t.omega.push_back(2.0 * constants::pi * f);
        t.s11.emplace_back(re, im);
    }
    t.validate();
    return t;
}

inline S11Trace read_trace_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_trace_csv: cannot open " + path);
    return read_trace_csv(f);
}

}  // namespace cavkit
