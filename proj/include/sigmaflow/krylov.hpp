#pragma once

// Restarted GMRES with right preconditioning for matrix-free operators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sigmaflow/error.hpp"

namespace sigmaflow::krylov {

struct Options {
    double rel_tol = 1e-8;
    double abs_tol = 0.0;
    int max_iterations = 500;
    int restart = 60;
};

struct Result {
    bool converged = false;
    int iterations = 0;
    double initial_residual = 0.0;
    double final_residual = 0.0;
};

[[nodiscard]] inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

[[nodiscard]] inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Solves A x = b. `apply(in, out)` computes out = A·in, `precond(in, out)`
/// computes out ≈ A⁻¹·in. x holds the initial guess on entry.
template <class Apply, class Precond>
Result gmres(Apply&& apply, Precond&& precond, std::span<const double> b, std::span<double> x,
             const Options& opt = {}) {
    const std::size_t n = b.size();
    const int m = std::max(1, opt.restart);
    std::vector<std::vector<double>> v(m + 1, std::vector<double>(n));
    std::vector<std::vector<double>> z(m, std::vector<double>(n));
    std::vector<double> h((m + 1) * m), cs(m), sn(m), g(m + 1), w(n), y(m);
    auto H = [&](int i, int j) -> double& { return h[i * m + j]; };

    Result res;
    auto residual = [&](std::vector<double>& r) {
        apply(std::span<const double>(x.data(), n), std::span<double>(w));
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - w[i];
        return norm2(r);
    };

    double beta = residual(v[0]);
    res.initial_residual = beta;
    const double target = std::max(opt.abs_tol, opt.rel_tol * norm2(b));
    if (!std::isfinite(beta)) throw NumericError("gmres: non-finite residual");
    if (beta <= target) {
        res.converged = true;
        res.final_residual = beta;
        return res;
    }

    while (res.iterations < opt.max_iterations) {
        for (std::size_t i = 0; i < n; ++i) v[0][i] /= beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        int j = 0;
        for (; j < m && res.iterations < opt.max_iterations; ++j) {
            ++res.iterations;
            precond(std::span<const double>(v[j]), std::span<double>(z[j]));
            apply(std::span<const double>(z[j]), std::span<double>(v[j + 1]));
            // Modified Gram–Schmidt.
            for (int i = 0; i <= j; ++i) {
                const double hij = dot(v[j + 1], v[i]);
                H(i, j) = hij;
                for (std::size_t t = 0; t < n; ++t) v[j + 1][t] -= hij * v[i][t];
            }
            const double hn = norm2(v[j + 1]);
            H(j + 1, j) = hn;
            if (hn > 0.0) {
                for (std::size_t t = 0; t < n; ++t) v[j + 1][t] /= hn;
            }
            for (int i = 0; i < j; ++i) {
                const double a = H(i, j), c = H(i + 1, j);
                H(i, j) = cs[i] * a + sn[i] * c;
                H(i + 1, j) = -sn[i] * a + cs[i] * c;
            }
            const double a = H(j, j), c = H(j + 1, j);
            const double r = std::hypot(a, c);
            cs[j] = r > 0.0 ? a / r : 1.0;
            sn[j] = r > 0.0 ? c / r : 0.0;
            H(j, j) = r;
            H(j + 1, j) = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            if (!std::isfinite(g[j + 1])) throw NumericError("gmres: breakdown with non-finite values");
            if (std::abs(g[j + 1]) <= target || hn == 0.0) {
                ++j;
                break;
            }
        }
        // Back substitution and update x += Z y.
        for (int i = j - 1; i >= 0; --i) {
            double s = g[i];
            for (int t = i + 1; t < j; ++t) s -= H(i, t) * y[t];
            y[i] = H(i, i) != 0.0 ? s / H(i, i) : 0.0;
        }
        for (int i = 0; i < j; ++i) {
            for (std::size_t t = 0; t < n; ++t) x[t] += y[i] * z[i][t];
        }
        beta = residual(v[0]);
        res.final_residual = beta;
        if (beta <= target) {
            res.converged = true;
            return res;
        }
    }
    return res;
}

/// Preconditioner that does nothing.
struct Identity {
    void operator()(std::span<const double> in, std::span<double> out) const {
        std::copy(in.begin(), in.end(), out.begin());
    }
};

}  // namespace sigmaflow::krylov
