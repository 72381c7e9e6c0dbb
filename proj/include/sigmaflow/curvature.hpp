#pragma once

// Schouten tensor recomputed from the metric alone, used to validate the
// analytic schouten0 stored in a BackgroundGeometry.

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "sigmaflow/geometry.hpp"

namespace sigmaflow::geometry {

namespace detail {

inline constexpr int hmax = symfun::max_dim;

// Centered differences of the scale factors H_a at x with one uniform step.
// Second derivatives are differences of differences, so every derivative of
// a product of sines picks up the same (sin ε/ε)^order factor.
struct ScaleJet {
    std::array<double, hmax> h{};
    std::array<double, hmax * hmax> d1{};         // d1[a*n+b] = ∂_b H_a
    std::array<double, hmax * hmax * hmax> d2{};  // d2[(a*n+b)*n+c] = ∂_b∂_c H_a
};

inline ScaleJet scale_jet(const ScaleFactorFn& fn, std::span<const double> x, double eps) {
    const int n = static_cast<int>(x.size());
    ScaleJet jet;
    std::array<double, hmax> xs{};
    std::array<double, hmax> hv{};
    auto eval = [&](int b, double ob, int c, double oc) {
        std::copy(x.begin(), x.end(), xs.begin());
        xs[b] += ob;
        xs[c] += oc;
        fn(std::span<const double>(xs.data(), n), std::span<double>(hv.data(), n));
        return hv;
    };
    const auto h0 = eval(0, 0.0, 0, 0.0);
    for (int a = 0; a < n; ++a) jet.h[a] = h0[a];
    for (int b = 0; b < n; ++b) {
        const auto hp = eval(b, eps, b, 0.0);
        const auto hm = eval(b, -eps, b, 0.0);
        const auto hpp = eval(b, 2 * eps, b, 0.0);
        const auto hmm = eval(b, -2 * eps, b, 0.0);
        for (int a = 0; a < n; ++a) {
            jet.d1[a * n + b] = (hp[a] - hm[a]) / (2 * eps);
            jet.d2[(a * n + b) * n + b] = (hpp[a] - 2 * h0[a] + hmm[a]) / (4 * eps * eps);
        }
        for (int c = b + 1; c < n; ++c) {
            const auto pp = eval(b, eps, c, eps);
            const auto pm = eval(b, eps, c, -eps);
            const auto mp = eval(b, -eps, c, eps);
            const auto mm = eval(b, -eps, c, -eps);
            for (int a = 0; a < n; ++a) {
                const double v = (pp[a] - pm[a] - mp[a] + mm[a]) / (4 * eps * eps);
                jet.d2[(a * n + b) * n + c] = v;
                jet.d2[(a * n + c) * n + b] = v;
            }
        }
    }
    return jet;
}

// Frame Ricci tensor of the diagonal metric Σ H_a² dx_a² from its jet.
inline SymMatrix frame_ricci(const ScaleJet& j, int n) {
    auto H = [&](int a) { return j.h[a]; };
    auto dH = [&](int a, int b) { return j.d1[a * n + b]; };
    auto ddH = [&](int a, int b, int c) { return j.d2[(a * n + b) * n + c]; };

    // Sectional curvatures of coordinate planes.
    std::array<double, hmax * hmax> K{};
    for (int i = 0; i < n; ++i) {
        for (int jj = i + 1; jj < n; ++jj) {
            // ∂_i(∂_i H_j / H_i) by the product rule.
            const double ti = ddH(jj, i, i) / H(i) - dH(jj, i) * dH(i, i) / (H(i) * H(i));
            const double tj = ddH(i, jj, jj) / H(jj) - dH(i, jj) * dH(jj, jj) / (H(jj) * H(jj));
            double k = -(ti + tj) / (H(i) * H(jj));
            for (int m = 0; m < n; ++m) {
                if (m == i || m == jj) continue;
                k -= dH(i, m) * dH(jj, m) / (H(i) * H(jj) * H(m) * H(m));
            }
            K[i * n + jj] = k;
            K[jj * n + i] = k;
        }
    }
    SymMatrix ric(n);
    for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            if (i != a) s += K[i * n + a];
        }
        ric(a, a) = s;
        for (int b = a + 1; b < n; ++b) {
            double off = 0.0;
            for (int i = 0; i < n; ++i) {
                if (i == a || i == b) continue;
                off += -ddH(i, a, b) / H(i) + dH(a, b) * dH(i, a) / (H(a) * H(i)) +
                       dH(b, a) * dH(i, b) / (H(b) * H(i));
            }
            ric(a, b) = off / (H(a) * H(b));
        }
    }
    return ric;
}

}  // namespace detail

/// Schouten tensor in the orthonormal frame from finite differences of the
/// chart's metric functions, with step equal to the smallest grid spacing.
[[nodiscard]] inline SymMatrixField curvature_oracle(const GeometryHandle& geom) {
    const BackgroundGeometry& g = *geom;
    const Grid& grid = g.grid();
    const int n = g.dim();
    const double eps = *std::min_element(grid.spacing.begin(), grid.spacing.end());
    SymMatrixField out(geom);
    std::vector<std::size_t> first_of_slot(g.size(), static_cast<std::size_t>(-1));
    std::vector<int> idx(n);
    std::vector<double> x(n);
    for (std::size_t p = 0; p < g.size(); ++p) {
        const std::size_t s = g.slot(p);
        if (first_of_slot[s] != static_cast<std::size_t>(-1)) {
            out.set(p, out.at(first_of_slot[s]));
            continue;
        }
        first_of_slot[s] = p;
        grid.unflatten(p, idx);
        for (int a = 0; a < n; ++a) x[a] = grid.coordinate(a, idx[a]);
        const auto jet = detail::scale_jet(g.scale_factor_fn(), x, eps);
        const SymMatrix ric = detail::frame_ricci(jet, n);
        const double r = ric.trace();
        SymMatrix sch = ric;
        sch -= SymMatrix::identity(n, r / (2.0 * (n - 1)));
        sch *= 1.0 / (n - 2);
        out.set(p, sch);
    }
    return out;
}

/// Max over nodes of the frame norm of (oracle − stored schouten0).
[[nodiscard]] inline double curvature_oracle_deviation(const GeometryHandle& geom) {
    const SymMatrixField s = curvature_oracle(geom);
    double worst = 0.0;
    for (std::size_t p = 0; p < geom->size(); ++p) {
        SymMatrix d = s.at(p);
        d -= geom->schouten0(p);
        worst = std::max(worst, d.frobenius());
    }
    return worst;
}

}  // namespace sigmaflow::geometry
