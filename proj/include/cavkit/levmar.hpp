#pragma once

// Small dense Levenberg-Marquardt least squares with a finite-difference
// Jacobian and covariance extraction. Callers pre-scale parameters to O(1).

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace cavkit {

using ResidualFn = std::function<void(const std::vector<double>&, std::vector<double>&)>;

struct LMOptions {
    int max_iterations = 400;
    double step_tol = 1e-12;      // relative step size convergence
    double lambda_init = 1e-3;
    double jacobian_step = 1e-6;  // central-difference step on O(1) parameters
};

struct LMResult {
    std::vector<double> params;
    std::vector<double> std_errors;
    std::vector<double> covariance;  // n*n, row-major
    double ssr = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

// Cholesky solve of the SPD system A x = b; returns false when not SPD.
inline bool cholesky_solve(std::vector<double> a, std::vector<double> b, int n,
                           std::vector<double>& x) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a[i * n + j];
            for (int k = 0; k < j; ++k) sum -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (sum <= 0.0) return false;
                a[i * n + i] = std::sqrt(sum);
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        double sum = b[i];
        for (int k = 0; k < i; ++k) sum -= a[i * n + k] * b[k];
        b[i] = sum / a[i * n + i];
    }
    x.assign(n, 0.0);
    for (int i = n - 1; i >= 0; --i) {
        double sum = b[i];
        for (int k = i + 1; k < n; ++k) sum -= a[k * n + i] * x[k];
        x[i] = sum / a[i * n + i];
    }
    return true;
}

inline bool spd_inverse(const std::vector<double>& a, int n, std::vector<double>& inv) {
    inv.assign(static_cast<size_t>(n) * n, 0.0);
    std::vector<double> col, e(n, 0.0);
    for (int j = 0; j < n; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        if (!cholesky_solve(a, e, n, col)) return false;
        for (int i = 0; i < n; ++i) inv[i * n + j] = col[i];
    }
    return true;
}

}  // namespace detail

inline LMResult levenberg_marquardt(const ResidualFn& fn, std::vector<double> x0,
                                    const LMOptions& opt = {}) {
    const int n = static_cast<int>(x0.size());
    std::vector<double> r;
    fn(x0, r);
    const int m = static_cast<int>(r.size());
    if (m < n) throw std::invalid_argument("levenberg_marquardt: fewer residuals than parameters");

    auto ssr_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double e : v) s += e * e;
        return s;
    };

    LMResult res;
    res.params = std::move(x0);
    res.ssr = ssr_of(r);

    std::vector<double> jac(static_cast<size_t>(m) * n);
    std::vector<double> rp, rm, jtj(static_cast<size_t>(n) * n), jtr(n), step, trial, rt;
    double lambda = opt.lambda_init;

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        res.iterations = iter + 1;
        for (int j = 0; j < n; ++j) {
            const double h = opt.jacobian_step * std::max(1.0, std::abs(res.params[j]));
            std::vector<double> xp = res.params, xm = res.params;
            xp[j] += h;
            xm[j] -= h;
            fn(xp, rp);
            fn(xm, rm);
            for (int i = 0; i < m; ++i) jac[static_cast<size_t>(i) * n + j] = (rp[i] - rm[i]) / (2.0 * h);
        }
        fn(res.params, r);
        for (int a = 0; a < n; ++a) {
            jtr[a] = 0.0;
            for (int i = 0; i < m; ++i) jtr[a] += jac[static_cast<size_t>(i) * n + a] * r[i];
            for (int b = 0; b <= a; ++b) {
                double s = 0.0;
                for (int i = 0; i < m; ++i)
                    s += jac[static_cast<size_t>(i) * n + a] * jac[static_cast<size_t>(i) * n + b];
                jtj[a * n + b] = jtj[b * n + a] = s;
            }
        }

        bool stepped = false;
        for (int attempt = 0; attempt < 30 && !stepped; ++attempt) {
            std::vector<double> damped = jtj;
            for (int a = 0; a < n; ++a)
                damped[a * n + a] += lambda * std::max(jtj[a * n + a], 1e-300);
            std::vector<double> neg = jtr;
            for (double& v : neg) v = -v;
            if (!detail::cholesky_solve(damped, neg, n, step)) {
                lambda *= 10.0;
                continue;
            }
            trial = res.params;
            for (int a = 0; a < n; ++a) trial[a] += step[a];
            fn(trial, rt);
            const double ssr_t = ssr_of(rt);
            if (ssr_t <= res.ssr) {
                double rel_step = 0.0;
                for (int a = 0; a < n; ++a)
                    rel_step = std::max(rel_step,
                                        std::abs(step[a]) / std::max(1.0, std::abs(trial[a])));
                const double improvement = res.ssr > 0.0 ? (res.ssr - ssr_t) / res.ssr : 0.0;
                res.params = trial;
                res.ssr = ssr_t;
                lambda = std::max(lambda / 3.0, 1e-14);
                stepped = true;
                if (rel_step < opt.step_tol || (improvement < 1e-14 && lambda < 1e-10)) {
                    res.converged = true;
                }
            } else {
                lambda *= 10.0;
                if (lambda > 1e14) break;
            }
        }
        if (!stepped || res.converged) {
            res.converged = res.converged || stepped == false;
            break;
        }
    }

    // covariance from the undamped normal matrix at the optimum
    res.covariance.assign(static_cast<size_t>(n) * n,
                          std::numeric_limits<double>::quiet_NaN());
    res.std_errors.assign(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> inv;
    if (m > n && detail::spd_inverse(jtj, n, inv)) {
        const double sigma2 = res.ssr / (m - n);
        for (int i = 0; i < n * n; ++i) res.covariance[i] = inv[i] * sigma2;
        for (int i = 0; i < n; ++i) res.std_errors[i] = std::sqrt(std::max(0.0, res.covariance[i * n + i]));
    }
    return res;
}

}  // namespace cavkit
