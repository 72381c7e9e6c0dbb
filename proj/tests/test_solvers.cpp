#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sigmaflow/geometry.hpp"
#include "sigmaflow/krylov.hpp"
#include "sigmaflow/spectral.hpp"

using namespace sigmaflow;
using namespace sigmaflow::geometry;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST(Gmres, SolvesSmallNonsymmetricSystem) {
    const int n = 40;
    std::vector<double> a(n * n);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-0.2, 0.2);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a[i * n + j] = (i == j ? 4.0 : 0.0) + d(rng);
    }
    const auto apply = [&](std::span<const double> x, std::span<double> y) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += a[i * n + j] * x[j];
            y[i] = s;
        }
    };
    const auto xstar = random_vector(n, 9);
    std::vector<double> b(n);
    apply(xstar, b);
    std::vector<double> x(n, 0.0);
    krylov::Options opt;
    opt.rel_tol = 1e-12;
    opt.restart = 7;  // force restarts
    const auto r = krylov::gmres(apply, krylov::Identity{}, b, x, opt);
    EXPECT_TRUE(r.converged);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(x[i], xstar[i], 1e-10);
}

TEST(Gmres, ZeroRightHandSideReturnsImmediately) {
    std::vector<double> b(5, 0.0), x(5, 0.0);
    const auto r = krylov::gmres([](std::span<const double> in, std::span<double> out) {
        std::copy(in.begin(), in.end(), out.begin());
    }, krylov::Identity{}, b, x);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 0);
}

TEST(SeparableLaplacian, ReproducesStencilLaplacian) {
    for (auto g : {build_round_sphere(3, 16), build_round_sphere(4, 16), build_hopf_product(3, 0.6, 16),
                   build_synthetic(3, SymMatrix::identity(3, 0.5), 16)}) {
        const auto sep = spectral::SeparableLaplacian::build(*g);
        ASSERT_TRUE(sep.has_value()) << g->name();
        const auto u = random_vector(g->size(), 1);
        const auto ref = laplacian(*g, u);
        std::vector<double> got(g->size());
        sep->apply(u, got);
        std::vector<double> diff(g->size());
        for (std::size_t p = 0; p < g->size(); ++p) diff[p] = got[p] - ref[p];
        EXPECT_LT(max_abs(diff), 1e-8 * max_abs(ref)) << g->name() << " dim " << g->dim();
    }
}

TEST(SeparableLaplacian, SolveInvertsShiftedOperator) {
    const auto g = build_round_sphere(3, 16);
    const auto sep = spectral::SeparableLaplacian::build(*g);
    ASSERT_TRUE(sep.has_value());
    const auto b = random_vector(g->size(), 2);
    const double alpha = 1.0, beta = -0.05;
    std::vector<double> x(g->size());
    sep->solve(alpha, beta, b, x);
    const auto lap = laplacian(*g, x);
    double err = 0.0;
    for (std::size_t p = 0; p < g->size(); ++p) err = std::max(err, std::abs(alpha * x[p] + beta * lap[p] - b[p]));
    EXPECT_LT(err, 1e-8);
}

TEST(SeparableLaplacian, EigenvaluesAreNonPositiveWithOneZero) {
    const auto g = build_round_sphere(3, 16);
    const auto sep = spectral::SeparableLaplacian::build(*g);
    ASSERT_TRUE(sep.has_value());
    int zeros = 0;
    for (double v : sep->eigenvalues()) {
        EXPECT_LT(v, 1e-9);
        if (std::abs(v) < 1e-9) ++zeros;
    }
    EXPECT_EQ(zeros, 1);
}

TEST(SeparableLaplacian, RespectsStorageCap) {
    const auto g = build_round_sphere(3, 16);
    EXPECT_FALSE(spectral::SeparableLaplacian::build(*g, 1000).has_value());
}

TEST(Gmres, PreconditionedPoleStiffSystemConvergesFast) {
    const auto g = build_round_sphere(3, 32);
    const auto sep = spectral::SeparableLaplacian::build(*g);
    ASSERT_TRUE(sep.has_value());
    // (I − τ a(x) Δ) x = b with a mildly varying coefficient.
    std::vector<double> coef(g->size());
    std::vector<int> idx(3);
    for (std::size_t p = 0; p < g->size(); ++p) {
        g->grid().unflatten(p, idx);
        coef[p] = 1.0 + 0.3 * std::cos(g->grid().coordinate(0, idx[0]));
    }
    const double tau = 0.05;
    const auto apply = [&](std::span<const double> in, std::span<double> out) {
        const auto lap = laplacian(*g, in);
        for (std::size_t p = 0; p < g->size(); ++p) out[p] = in[p] - tau * coef[p] * lap[p];
    };
    const auto prec = [&](std::span<const double> in, std::span<double> out) { sep->solve(1.0, -tau, in, out); };
    const auto b = random_vector(g->size(), 4);
    std::vector<double> x(g->size(), 0.0);
    const auto r = krylov::gmres(apply, prec, b, x, {1e-8, 0.0, 200, 60});
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.iterations, 40);
}
