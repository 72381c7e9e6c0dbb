#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "sigmaflow/geometry.hpp"

using namespace sigmaflow;
using namespace sigmaflow::geometry;
using std::numbers::pi;

namespace {

// Cartesian coordinate X_i of the unit S^n embedded in R^{n+1}, for the
// hyperspherical chart (θ_1, …, θ_{n−1}, φ).
double embedding(std::span<const double> x, int i) {
    const int n = static_cast<int>(x.size());
    double prod = 1.0;
    for (int j = 0; j < i && j < n; ++j) prod *= std::sin(x[j]);
    if (i == n) return prod;
    if (i == n - 1) return prod * std::cos(x[n - 1]);
    return prod * std::cos(x[i]);
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

std::vector<double> coordinates(const Grid& g, std::size_t p) {
    std::vector<int> idx(g.n);
    g.unflatten(p, idx);
    std::vector<double> x(g.n);
    for (int a = 0; a < g.n; ++a) x[a] = g.coordinate(a, idx[a]);
    return x;
}

struct HarmonicError {
    double max_norm;
    double l2;
};

// Frame-norm error of ∇²X_i + X_i g₀ for an embedding coordinate, in max
// norm and in L²(dvol₀).
HarmonicError harmonic_hessian_error(const GeometryHandle& g, int i) {
    const ScalarField u = make_field(g, [&](std::span<const double> x) { return embedding(x, i); });
    const SymMatrixField h = covariant_hessian(u);
    HarmonicError err{0.0, 0.0};
    std::vector<double> sq(g->size());
    for (std::size_t p = 0; p < g->size(); ++p) {
        SymMatrix e = h.at(p);
        e += SymMatrix::identity(g->dim(), u[p]);
        err.max_norm = std::max(err.max_norm, e.frobenius());
        sq[p] = e.frobenius() * e.frobenius();
    }
    err.l2 = std::sqrt(integrate(*g, sq));
    return err;
}

}  // namespace

TEST(Builders, RejectBadRequests) {
    EXPECT_THROW((void)build_round_sphere(3, 8), ConfigurationError);
    EXPECT_THROW((void)build_round_sphere(3, 17), ConfigurationError);
    EXPECT_THROW((void)build_round_sphere(2, 16), ConfigurationError);
    EXPECT_THROW((void)build_round_sphere(6, 16), ConfigurationError);
    EXPECT_THROW((void)build_hopf_product(3, 0.0, 16), ConfigurationError);
    EXPECT_THROW((void)build_hopf_product(3, -1.0, 16), ConfigurationError);
    EXPECT_THROW((void)build_synthetic(3, SymMatrix::identity(4), 16), ConfigurationError);
    EXPECT_NO_THROW((void)build_hopf_product(4, 1.0, 16));
}

TEST(Builders, RoundSphereData) {
    for (int n = 3; n <= 5; ++n) {
        const auto g = build_round_sphere(n, 16);
        EXPECT_EQ(g->grid().axis_kind[n - 1], AxisKind::periodic);
        for (int a = 0; a + 1 < n; ++a) EXPECT_EQ(g->grid().axis_kind[a], AxisKind::pole_shifted);
        for (std::size_t p = 0; p < g->size(); p += 97) {
            for (int a = 0; a < n; ++a) EXPECT_GT(g->g0_diag(p, a), 0.0);
            const SymMatrix s = g->schouten0(p);
            EXPECT_EQ((s - SymMatrix::identity(n, 0.5)).frobenius(), 0.0);
            EXPECT_TRUE(symfun::cone_test(symfun::eigenvalues(s), n).inside);
            EXPECT_EQ(g->scalar_curvature(p), n * (n - 1.0));
        }
    }
    const auto g3 = build_round_sphere(3, 16);
    EXPECT_NEAR(symfun::sigma_k_matrix(g3->schouten0(0), 2), 0.75, 1e-15);
}

TEST(Builders, HopfSchouten) {
    const auto g3 = build_hopf_product(3, 1.0, 16);
    const auto ev = symfun::eigenvalues(g3->schouten0(5));
    std::vector<double> v(ev.values().begin(), ev.values().end());
    std::sort(v.begin(), v.end());
    EXPECT_NEAR(v[0], -0.5, 1e-15);
    EXPECT_NEAR(v[1], 0.5, 1e-15);
    EXPECT_NEAR(v[2], 0.5, 1e-15);
    EXPECT_NEAR(symfun::sigma_k(ev, 1), 0.5, 1e-15);
    EXPECT_TRUE(symfun::cone_test(ev, 1).inside);
    EXPECT_FALSE(symfun::cone_test(ev, 2).inside);

    const auto g5 = build_hopf_product(5, 1.0, 16);
    EXPECT_NEAR(symfun::sigma_k_matrix(g5->schouten0(0), 2), 0.5, 1e-14);
    EXPECT_TRUE(symfun::cone_test(symfun::eigenvalues(g5->schouten0(0)), 2).inside);
}

TEST(Volume, RoundSphereWithinTolerance) {
    const double exact = 2.0 * pi * pi;
    const auto g16 = build_round_sphere(3, 16);
    const auto g32 = build_round_sphere(3, 32);
    const double e16 = std::abs(integrate(ScalarField(g16, 1.0)) - exact);
    const double e32 = std::abs(integrate(ScalarField(g32, 1.0)) - exact);
    EXPECT_LT(e32 / exact, 1e-3);
    EXPECT_LT(e32, e16);
    EXPECT_NEAR(g32->analytic_volume(), exact, 1e-12);
    // Higher dimensions: |S^4| = 8π²/3, |S^5| = π³.
    EXPECT_NEAR(integrate(ScalarField(build_round_sphere(4, 16), 1.0)) / (8 * pi * pi / 3), 1.0, 2e-3);
    EXPECT_NEAR(integrate(ScalarField(build_round_sphere(5, 16), 1.0)) / (pi * pi * pi), 1.0, 3e-3);
}

TEST(Volume, HopfProduct) {
    for (double r : {0.3, 1.0, 2.5}) {
        const auto g3 = build_hopf_product(3, r, 32);
        EXPECT_NEAR(integrate(ScalarField(g3, 1.0)) / (2 * pi * r * 4 * pi), 1.0, 1e-3);
        const auto g5 = build_hopf_product(5, r, 16);
        EXPECT_NEAR(integrate(ScalarField(g5, 1.0)) / (2 * pi * r * 8 * pi * pi / 3), 1.0, 2e-3);
    }
}

TEST(Integrate, WeightsAndOddSymmetry) {
    const auto g = build_round_sphere(3, 32);
    const double vol = integrate(ScalarField(g, 1.0));
    const double c = 0.3;
    EXPECT_NEAR(integrate(ScalarField(g, 1.0), ScalarField(g, std::exp(-3 * c))), std::exp(-3 * c) * vol, 1e-12);
    const ScalarField f = make_field(g, [](std::span<const double> x) { return std::cos(x[0]); });
    EXPECT_NEAR(integrate(f), 0.0, 1e-10);
}

TEST(Neighbors, FoldingIsAnInvolution) {
    for (auto g : {build_round_sphere(3, 16), build_round_sphere(4, 16), build_hopf_product(5, 1.0, 16)}) {
        for (std::size_t p = 0; p < g->size(); ++p) {
            for (int a = 0; a < g->dim(); ++a) {
                for (int off : {-1, 1}) {
                    const auto [q, flips] = g->neighbor(p, a, off);
                    const int back = (flips >> a) & 1u ? off : -off;
                    ASSERT_EQ(g->neighbor_index(q, a, back), p);
                }
            }
        }
    }
}

TEST(Neighbors, GhostValuesMatchSmoothFunctions) {
    // A function that is smooth on the sphere takes the same value at the
    // folded node as at the out-of-range chart point.
    for (int n = 3; n <= 5; ++n) {
        const auto g = build_round_sphere(n, 16);
        const Grid& grid = g->grid();
        for (std::size_t p = 0; p < g->size(); p += 7) {
            const auto x = coordinates(grid, p);
            for (int a = 0; a < n; ++a) {
                for (int off : {-1, 1}) {
                    const std::size_t q = g->neighbor_index(p, a, off);
                    auto xs = x;
                    xs[a] += off * grid.spacing[a];
                    const auto xq = coordinates(grid, q);
                    for (int i = 0; i <= n; ++i) {
                        ASSERT_NEAR(embedding(xs, i), embedding(xq, i), 1e-13);
                    }
                }
            }
        }
    }
}

TEST(Hessian, ConstantGivesZero) {
    for (auto g : {build_round_sphere(3, 16), build_hopf_product(3, 0.5, 16),
                   build_synthetic(3, SymMatrix::identity(3, 0.5), 16, 4)}) {
        const SymMatrixField h = covariant_hessian(ScalarField(g, 2.5));
        EXPECT_EQ(max_abs(h.packed), 0.0);
        const auto gn = gradient_and_norm(ScalarField(g, 2.5));
        EXPECT_EQ(max_abs(gn.norm2.values), 0.0);
        EXPECT_EQ(max_abs(gn.gradient.values), 0.0);
    }
}

TEST(Hessian, SyntheticSineFourthOrder) {
    double prev = 0.0;
    for (int N : {16, 32}) {
        const auto g = build_synthetic(3, SymMatrix::identity(3, 0.5), N, 4);
        const ScalarField u = make_field(g, [](std::span<const double> x) { return std::sin(x[0]); });
        const SymMatrixField h = covariant_hessian(u);
        double err = 0.0;
        for (std::size_t p = 0; p < g->size(); ++p) {
            const SymMatrix m = h.at(p);
            err = std::max(err, std::abs(m(0, 0) + u[p]));
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) {
                    if (a || b) EXPECT_NEAR(m(a, b), 0.0, 1e-13);
                }
            }
        }
        if (prev > 0.0) EXPECT_GT(std::log2(prev / err), 3.8);
        prev = err;
    }
}

TEST(Hessian, AxisymmetricHarmonicMaxNorm) {
    // u = cos θ₁: ∇²u = −u g₀ with second-order convergence in max norm.
    for (int n : {3, 4}) {
        const auto e16 = harmonic_hessian_error(build_round_sphere(n, 16), 0);
        const auto e32 = harmonic_hessian_error(build_round_sphere(n, 32), 0);
        EXPECT_LT(e32.max_norm, 1e-2);
        EXPECT_GT(std::log2(e16.max_norm / e32.max_norm), 1.9) << "n=" << n;
    }
}

TEST(Hessian, AllFirstHarmonicsConvergeInL2) {
    // Harmonics that depend on the inner polar angles or the azimuth carry an
    // O(1) frame error in the ring of cells touching a coordinate pole (the
    // cells shrink like h² there), so the rate is measured in L².
    for (int n : {3, 4}) {
        for (int i = 0; i <= n; ++i) {
            const auto e16 = harmonic_hessian_error(build_round_sphere(n, 16), i);
            const auto e32 = harmonic_hessian_error(build_round_sphere(n, 32), i);
            EXPECT_LT(e32.l2, 5e-2) << "n=" << n << " i=" << i;
            EXPECT_GT(std::log2(e16.l2 / e32.l2), 1.8) << "n=" << n << " i=" << i;
        }
    }
}

TEST(Gradient, LinearFunctionOnSyntheticWindow) {
    const auto g = build_synthetic(3, SymMatrix::identity(3, 0.5), 32);
    const ScalarField u = make_field(g, [](std::span<const double> x) { return x[0]; });
    const auto gn = gradient_and_norm(u);
    const Grid& grid = g->grid();
    std::vector<int> idx(3);
    for (std::size_t p = 0; p < g->size(); ++p) {
        grid.unflatten(p, idx);
        if (idx[0] == 0 || idx[0] == grid.shape[0] - 1) continue;
        EXPECT_NEAR(gn.norm2[p], 1.0, 1e-12);
    }
}

TEST(Gradient, CosineOnRoundSphere) {
    double prev = 0.0;
    for (int N : {16, 32}) {
        const auto g = build_round_sphere(3, N);
        const ScalarField u = make_field(g, [](std::span<const double> x) { return std::cos(x[0]); });
        const auto gn = gradient_and_norm(u);
        double err = 0.0;
        for (std::size_t p = 0; p < g->size(); ++p) {
            const double th = coordinates(g->grid(), p)[0];
            err = std::max(err, std::abs(gn.norm2[p] - std::sin(th) * std::sin(th)));
        }
        if (prev > 0.0) EXPECT_GT(std::log2(prev / err), 1.9);
        prev = err;
    }
}

TEST(Stencils, SummationByPartsOnPeriodicCharts) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int order : {2, 4}) {
        const auto g = build_synthetic(3, SymMatrix::identity(3, 0.5), 16, order);
        ScalarField u(g), v(g);
        for (std::size_t p = 0; p < g->size(); ++p) {
            u[p] = d(rng);
            v[p] = d(rng);
        }
        const auto du = coordinate_gradient(*g, u.values);
        const auto dv = coordinate_gradient(*g, v.values);
        for (int a = 0; a < 3; ++a) {
            double s = 0.0;
            for (std::size_t p = 0; p < g->size(); ++p) s += du[p * 3 + a] * v[p] + u[p] * dv[p * 3 + a];
            EXPECT_NEAR(s * g->vol_weight(0), 0.0, 1e-10);
        }
    }
}

TEST(Laplacian, FirstHarmonicEigenvalue) {
    double prev = 0.0;
    for (int N : {16, 32}) {
        const auto g = build_round_sphere(3, N);
        const ScalarField u = make_field(g, [](std::span<const double> x) { return embedding(x, 2); });
        const auto lap = laplacian(*g, u.values);
        std::vector<double> sq(g->size());
        for (std::size_t p = 0; p < g->size(); ++p) sq[p] = std::pow(lap[p] + 3.0 * u[p], 2);
        const double err = std::sqrt(integrate(*g, sq));
        if (prev > 0.0) EXPECT_GT(std::log2(prev / err), 1.8);
        prev = err;
    }
}
