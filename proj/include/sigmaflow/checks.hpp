#pragma once

// Property suite run by `sigmaflow check`: symmetric-function identities,
// curvature oracle convergence, conformal covariances, flow fixed points and
// the eigen linearization. Each property reports its worst observed value
// against a threshold.

#include <Eigen/Dense>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sigmaflow/conformal.hpp"
#include "sigmaflow/curvature.hpp"
#include "sigmaflow/eigen.hpp"
#include "sigmaflow/field_io.hpp"
#include "sigmaflow/flow.hpp"
#include "sigmaflow/geometry.hpp"
#include "sigmaflow/symfun.hpp"

namespace sigmaflow::checks {

using geometry::GeometryHandle;
using geometry::ScalarField;
using symfun::Spectrum;
using symfun::SymMatrix;

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;      // worst observed quantity
    double threshold = 0.0;  // pass when value <= threshold (or >= for orders)
    std::string detail;
    double seconds = 0.0;
};

namespace detail {

inline SymMatrix random_symmetric(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    SymMatrix a(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) a(i, j) = d(rng);
    }
    return a;
}

/// Σ of k×k principal minors (LU determinants) and Σ of their magnitudes.
inline std::pair<double, double> minor_sum(const SymMatrix& a, int k) {
    const int n = a.dim();
    double sum = 0.0, mag = 0.0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != static_cast<unsigned>(k)) continue;
        Eigen::MatrixXd m(k, k);
        std::vector<int> rows;
        for (int i = 0; i < n; ++i) {
            if (mask & (1u << i)) rows.push_back(i);
        }
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) m(i, j) = a(rows[i], rows[j]);
        }
        const double d = m.determinant();
        sum += d;
        mag += std::abs(d);
    }
    return {sum, mag};
}

inline SymMatrix shifted_into_cone(std::mt19937_64& rng, int n, int k) {
    std::uniform_real_distribution<double> shift(0.0, 2.5);
    for (;;) {
        SymMatrix a = random_symmetric(rng, n);
        const double s = shift(rng);
        for (int i = 0; i < n; ++i) a(i, i) += s;
        if (symfun::cone_test(symfun::eigenvalues(a), k).inside) return a;
    }
}

template <class Body>
CheckResult timed(std::string name, double threshold, Body&& body) {
    CheckResult r;
    r.name = std::move(name);
    r.threshold = threshold;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline ScalarField axisymmetric_bump(const GeometryHandle& g, double eps) {
    return geometry::make_field(g, [eps](std::span<const double> x) {
        const double c = std::cos(x[0]);
        return eps * (c + 0.5 * c * c);
    });
}

}  // namespace detail

/// σ_k against the principal-minor sum for random symmetric matrices.
[[nodiscard]] inline CheckResult sigma_vs_minors(int samples, std::uint64_t seed) {
    return detail::timed("symfun.sigma_vs_principal_minors", 1e-12, [&](CheckResult& r) {
        std::mt19937_64 rng(seed);
        double worst = 0.0;
        for (int s = 0; s < samples; ++s) {
            const int n = 3 + s % 4;
            const SymMatrix a = detail::random_symmetric(rng, n);
            const auto all = symfun::sigma_all(symfun::eigenvalues(a));
            for (int k = 1; k <= n; ++k) {
                const auto [ref, mag] = detail::minor_sum(a, k);
                worst = std::max(worst, std::abs(all[k] - ref) / std::max(mag, 1e-300));
            }
        }
        r.value = worst;
        r.passed = worst <= r.threshold;
        r.detail = std::to_string(samples) + " matrices, relative to the minor magnitude sum";
    });
}

/// T_{k−1}(A) = ∂σ_k/∂A by central differences.
[[nodiscard]] inline CheckResult newton_gradient(int samples, std::uint64_t seed) {
    return detail::timed("symfun.newton_transform_is_gradient", 1e-6, [&](CheckResult& r) {
        std::mt19937_64 rng(seed + 1);
        double worst = 0.0;
        const double h = 1e-6;
        for (int s = 0; s < samples; ++s) {
            const int n = 3 + s % 4;
            const SymMatrix a = detail::random_symmetric(rng, n);
            for (int k = 1; k <= n; ++k) {
                const SymMatrix t = symfun::newton_transform(a, k - 1);
                for (int i = 0; i < n; ++i) {
                    for (int j = i; j < n; ++j) {
                        SymMatrix p = a, m = a;
                        p(i, j) += h;
                        m(i, j) -= h;
                        const double fd = (symfun::sigma_k_matrix(p, k) - symfun::sigma_k_matrix(m, k)) / (2 * h);
                        const double exact = (i == j ? 1.0 : 2.0) * t(i, j);
                        worst = std::max(worst, std::abs(fd - exact) / std::max(1.0, std::abs(exact)));
                    }
                }
            }
        }
        r.value = worst;
        r.passed = worst <= r.threshold;
        r.detail = "central differences, step 1e-6";
    });
}

/// Row-sum, σ₁σ_k − (k+1)σ_{k+1}, trace T_k and Newton–MacLaurin.
[[nodiscard]] inline CheckResult symmetric_identities(int samples, std::uint64_t seed) {
    return detail::timed("symfun.identities", 1e-12, [&](CheckResult& r) {
        std::mt19937_64 rng(seed + 2);
        double worst = 0.0;
        int maclaurin_violations = 0;
        for (int s = 0; s < samples; ++s) {
            const int n = 3 + s % 4;
            const SymMatrix a = detail::random_symmetric(rng, n);
            const Spectrum lam = symfun::eigenvalues(a);
            const auto e = symfun::sigma_all(lam);
            double scale = 1.0;
            for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(lam[i]));
            for (int k = 1; k <= n; ++k) {
                const double unit = std::pow(scale, k) * symfun::sigma_k(Spectrum(std::vector<double>(n, 1.0)), k);
                double rows = 0.0, squares = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double sub = symfun::sigma_k(lam.without(i), k - 1);
                    rows += sub;
                    squares += lam[i] * lam[i] * sub;
                }
                worst = std::max(worst, std::abs(rows - (n - k + 1) * e[k - 1]) / unit);
                const double next = k < n ? e[k + 1] : 0.0;
                worst = std::max(worst, std::abs(e[1] * e[k] - (k + 1) * next - squares) / (unit * scale));
                if (k < n) {
                    const double tr = symfun::newton_transform(a, k).trace();
                    worst = std::max(worst, std::abs(tr - (n - k) * e[k]) / unit);
                }
            }
            // Newton–MacLaurin inside Γ_{k+1}⁺.
            const int k = 1 + s % (n - 1);
            const SymMatrix b = detail::shifted_into_cone(rng, n, k + 1);
            const auto eb = symfun::sigma_all(symfun::eigenvalues(b));
            const double lhs = (k + 1) * eb[k + 1];
            const double rhs = double(n - k) / n * eb[1] * eb[k];
            if (lhs > rhs * (1.0 + 1e-12) + 1e-12) ++maclaurin_violations;
        }
        r.value = worst;
        r.passed = worst <= r.threshold && maclaurin_violations == 0;
        r.detail = "relative to max|λ|^k C(n,k); Newton-MacLaurin violations: " + std::to_string(maclaurin_violations);
    });
}

/// Observed order of the finite-difference Schouten tensor (24 → 48).
[[nodiscard]] inline CheckResult curvature_order() {
    return detail::timed("geometry.curvature_oracle_order", 1.9, [&](CheckResult& r) {
        const double e24 = geometry::curvature_oracle_deviation(geometry::build_round_sphere(3, 24));
        const double e48 = geometry::curvature_oracle_deviation(geometry::build_round_sphere(3, 48));
        const double h24 = geometry::curvature_oracle_deviation(geometry::build_hopf_product(3, 1.0, 24));
        const double h48 = geometry::curvature_oracle_deviation(geometry::build_hopf_product(3, 1.0, 48));
        const double order = std::min(std::log2(e24 / e48), std::log2(h24 / h48));
        r.value = order;
        r.passed = order >= r.threshold;
        r.detail = "S^3 errors " + io::format_double(e24) + " -> " + io::format_double(e48) + ", S^1xS^2 errors " +
                   io::format_double(h24) + " -> " + io::format_double(h48);
    });
}

/// Quadrature volume against the analytic volume.
[[nodiscard]] inline CheckResult volume_quadrature() {
    return detail::timed("geometry.volume_quadrature", 1e-3, [&](CheckResult& r) {
        double worst = 0.0;
        for (const auto& g : {geometry::build_round_sphere(3, 32), geometry::build_round_sphere(4, 24),
                              geometry::build_hopf_product(3, 0.6, 32)}) {
            const std::vector<double> one(g->size(), 1.0);
            worst = std::max(worst, std::abs(geometry::integrate(*g, one) / g->analytic_volume() - 1.0));
        }
        r.value = worst;
        r.passed = worst <= r.threshold;
        r.detail = "relative volume error, S^3 / S^4 / S^1xS^2";
    });
}

/// σ_k(g_{u+c}) = e^{2kc} σ_k(g_u) on a flat periodic chart.
[[nodiscard]] inline CheckResult conformal_covariance() {
    return detail::timed("conformal.shift_covariance", 1e-12, [&](CheckResult& r) {
        const auto g = geometry::build_synthetic(3, SymMatrix::diagonal({0.6, 0.5, 0.7}), 16, 4);
        const ScalarField u = geometry::make_field(g, [](std::span<const double> x) {
            return 0.05 * std::sin(x[0]) * std::cos(x[1]) + 0.04 * std::cos(x[2]);
        });
        double worst = 0.0;
        const double c = 0.3;
        for (int k = 1; k <= 3; ++k) {
            ScalarField v = u;
            for (double& x : v.values) x += c;
            const auto su = conformal::sigma_k_field(conformal::ConformalState(u, k));
            const auto sv = conformal::sigma_k_field(conformal::ConformalState(v, k));
            for (std::size_t p = 0; p < su.size(); ++p) {
                worst = std::max(worst, std::abs(sv[p] - std::exp(2.0 * k * c) * su[p]) / std::abs(sv[p]));
            }
        }
        r.value = worst;
        r.passed = worst <= r.threshold;
        r.detail = "shift c=0.3, k = 1..3";
    });
}

/// σ_k(e^{-2c} g₀) = e^{2kc} C(3,k)/2^k on round S³. Stencil round-off on a
/// constant is amplified by the pole-row weights, hence 1e-10.
[[nodiscard]] inline CheckResult round_constants() {
    return detail::timed("conformal.round_sphere_constants", 1e-10, [&](CheckResult& r) {
        const auto s3 = geometry::build_round_sphere(3, 16, 4);
        const double binom[] = {1.0, 3.0, 3.0, 1.0};
        double worst = 0.0;
        for (double c : {0.0, 0.7}) {
            for (int k = 1; k <= 3; ++k) {
                const auto sk = conformal::sigma_k_field(conformal::ConformalState(ScalarField(s3, c), k));
                const double exact = std::exp(2.0 * k * c) * binom[k] * std::pow(0.5, k);
                for (double v : sk.values) worst = std::max(worst, std::abs(v - exact) / exact);
            }
        }
        r.value = worst;
        r.passed = worst <= r.threshold;
        r.detail = "u = 0 and 0.7, k = 1..3";
    });
}

/// Speed vanishes and 100 steps leave u unchanged at round-sphere constants.
[[nodiscard]] inline CheckResult flow_fixed_points() {
    return detail::timed("flow.fixed_points", 1e-10, [&](CheckResult& r) {
        const auto g = geometry::build_round_sphere(3, 16, 4);
        double worst_speed = 0.0, worst_move = 0.0;
        for (double c : {0.0, 0.7}) {
            for (int k = 1; k <= 3; ++k) {
                const ScalarField u(g, c);
                const conformal::ConformalState s(u, k);
                const ScalarField v = flow::speed(s);
                for (double x : v.values) worst_speed = std::max(worst_speed, std::abs(x));
                flow::FlowConfig cfg;
                cfg.k = k;
                const flow::Stepper stepper(g, cfg);
                flow::FlowState st{s, 0.0, 0, 0.0, 0, 0, 0};
                for (int i = 0; i < 100; ++i) stepper.step(st, 0.05);
                for (std::size_t p = 0; p < u.size(); ++p) {
                    worst_move = std::max(worst_move, std::abs(st.state.u()[p] - c));
                }
            }
        }
        r.value = worst_speed;
        r.passed = worst_speed <= 1e-10 && worst_move <= 1e-12;
        r.detail = "max |speed| " + io::format_double(worst_speed) + " (<= 1e-10), max |u change| after 100 steps " +
                   io::format_double(worst_move) + " (<= 1e-12)";
    });
}

/// Eigen linearization against central differences of the residual.
[[nodiscard]] inline CheckResult eigen_linearization() {
    return detail::timed("eigen.linearization", 1e-6, [&](CheckResult& r) {
        const auto g = geometry::build_round_sphere(3, 16, 4);
        const ScalarField u = detail::axisymmetric_bump(g, 0.05);
        const ScalarField rho = geometry::make_field(g, [](std::span<const double> x) {
            return std::cos(x[0]) + 0.3 * std::sin(x[0]) * std::cos(x[1]);
        });
        double worst = 0.0;
        const std::vector<double> rhs(g->size(), 0.1);
        for (int k = 1; k <= 3; ++k) {
            const conformal::ConformalState s(u, k);
            std::vector<double> jr(g->size());
            eigen::linearize_apply(s, {}, rho.values, jr);
            const double eps = 1e-5;
            auto shifted = [&](double t) {
                ScalarField v = u;
                for (std::size_t p = 0; p < v.size(); ++p) v[p] += t * rho[p];
                return eigen::residual(conformal::ConformalState(v, k), rhs);
            };
            const ScalarField rp = shifted(eps), rm = shifted(-eps);
            double err = 0.0, scale = 0.0;
            for (std::size_t p = 0; p < jr.size(); ++p) {
                err = std::max(err, std::abs((rp[p] - rm[p]) / (2 * eps) - jr[p]));
                scale = std::max(scale, std::abs(jr[p]));
            }
            worst = std::max(worst, err / scale);
        }
        r.value = worst;
        r.passed = worst <= r.threshold;
        r.detail = "relative max-norm, k = 1..3";
    });
}

/// The full suite, in a fixed order.
[[nodiscard]] inline std::vector<CheckResult> run_all(int samples, std::uint64_t seed) {
    std::vector<CheckResult> out;
    out.push_back(sigma_vs_minors(samples, seed));
    out.push_back(newton_gradient(std::max(1, samples / 10), seed));
    out.push_back(symmetric_identities(samples, seed));
    out.push_back(curvature_order());
    out.push_back(volume_quadrature());
    out.push_back(conformal_covariance());
    out.push_back(round_constants());
    out.push_back(flow_fixed_points());
    out.push_back(eigen_linearization());
    return out;
}

inline constexpr std::string_view report_header = "name,passed,value,threshold";

inline void write_report(std::ostream& os, const std::vector<CheckResult>& results) {
    os << report_header << '\n';
    for (const auto& r : results) {
        os << r.name << ',' << (r.passed ? "true" : "false") << ',' << io::format_double(r.value) << ','
           << io::format_double(r.threshold) << '\n';
    }
}

}  // namespace sigmaflow::checks
