#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <span>

#include "sigmaflow/conformal.hpp"

using namespace sigmaflow;
using namespace sigmaflow::geometry;
using namespace sigmaflow::conformal;
using std::numbers::pi;

namespace {

double theta1(const Grid& g, std::size_t p) {
    std::vector<int> idx(g.n);
    g.unflatten(p, idx);
    return g.coordinate(0, idx[0]);
}

ScalarField smooth_bump(const GeometryHandle& g, double eps) {
    return make_field(g, [eps](std::span<const double> x) {
        return eps * (std::cos(x[0]) + 0.3 * std::cos(2 * x[0]) * std::sin(x[0]));
    });
}

double max_field_diff(const SymMatrixField& a, const SymMatrixField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.packed.size(); ++i) m = std::max(m, std::abs(a.packed[i] - b.packed[i]));
    return m;
}

}  // namespace

TEST(AssembleW, ConstantsGiveBackgroundSchouten) {
    const auto g = build_round_sphere(3, 16);
    for (double c : {0.0, 0.7, -2.0}) {
        const SymMatrixField w = assemble_W(ScalarField(g, c));
        for (std::size_t p = 0; p < g->size(); ++p) {
            EXPECT_EQ((w.at(p) - g->schouten0(p)).frobenius(), 0.0);
        }
    }
}

TEST(AssembleW, SyntheticSineMatchesClosedForm) {
    // u = ε sin x₁ on the flat box with S₀ = ½I:
    //   W₁₁ = ½ − ε sin x₁ + ½ε² cos² x₁,  W₂₂ = W₃₃ = ½ − ½ε² cos² x₁.
    const double eps = 1e-3;
    double prev = 0.0;
    for (int N : {16, 32}) {
        const auto g = build_synthetic(3, SymMatrix::identity(3, 0.5), N, 4);
        const ScalarField u = make_field(g, [eps](std::span<const double> x) { return eps * std::sin(x[0]); });
        const SymMatrixField w = assemble_W(u);
        double err = 0.0;
        std::vector<int> idx(3);
        for (std::size_t p = 0; p < g->size(); ++p) {
            g->grid().unflatten(p, idx);
            const double x = g->grid().coordinate(0, idx[0]);
            const double c2 = std::cos(x) * std::cos(x);
            SymMatrix exact = SymMatrix::diagonal({0.5 - eps * std::sin(x) + 0.5 * eps * eps * c2,
                                                   0.5 - 0.5 * eps * eps * c2, 0.5 - 0.5 * eps * eps * c2});
            err = std::max(err, (w.at(p) - exact).frobenius());
        }
        if (prev > 0.0) EXPECT_GT(std::log2(prev / err), 3.8);
        prev = err;
    }
}

TEST(AssembleW, LinearPartIsHessian) {
    const auto g = build_round_sphere(3, 24);
    const ScalarField phi = smooth_bump(g, 1.0);
    const SymMatrixField hphi = covariant_hessian(phi);
    double prev = 0.0;
    for (double eps : {1e-2, 5e-3}) {
        ScalarField u = phi;
        for (double& v : u.values) v *= eps;
        const SymMatrixField w = assemble_W(u);
        double err = 0.0;
        for (std::size_t p = 0; p < g->size(); ++p) {
            SymMatrix r = w.at(p) - g->schouten0(p) - eps * hphi.at(p);
            err = std::max(err, r.frobenius());
        }
        if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 0.05);
        prev = err;
    }
}

TEST(SigmaField, RoundAndHopfValues) {
    const auto g = build_round_sphere(3, 16);
    for (double c : {0.0, 0.4}) {
        const ConformalState s(ScalarField(g, c), 2);
        for (double v : sigma_k_field(s).values) EXPECT_NEAR(v, 0.75 * std::exp(4 * c), 1e-14);
    }
    const ConformalState h5(ScalarField(build_hopf_product(5, 1.0, 16), 0.0), 2);
    for (double v : sigma_k_field(h5).values) EXPECT_NEAR(v, 0.5, 1e-14);
}

TEST(SigmaField, ConeViolationCarriesNodeAndLabel) {
    const ConformalState s(ScalarField(build_hopf_product(3, 1.0, 16), 0.0), 2);
    try {
        (void)sigma_k_field(s);
        FAIL() << "expected ConeViolation";
    } catch (const ConeViolation& e) {
        EXPECT_EQ(e.label().first_failing_j, 2);
        ASSERT_TRUE(e.node().has_value());
        EXPECT_EQ(*e.node(), 0u);
        EXPECT_EQ(e.code(), ExitCode::cone);
    }
}

TEST(Volume, ConstantsAndRandomFields) {
    const auto g = build_round_sphere(3, 32);
    const double vol0 = ConformalState(ScalarField(g, 0.0), 1).volume();
    EXPECT_NEAR(vol0 / (2 * pi * pi), 1.0, 1e-3);
    EXPECT_NEAR(ConformalState(ScalarField(g, 0.3), 1).volume(), std::exp(-0.9) * vol0, 1e-12);
    const double v = ConformalState(smooth_bump(g, 0.2), 1).volume();
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
}

TEST(Rk, ConstantsAndJensen) {
    const auto g = build_round_sphere(3, 16);
    EXPECT_NEAR(r_k(ConformalState(ScalarField(g, 0.0), 1)), 1.5, 1e-14);
    EXPECT_NEAR(r_k(ConformalState(ScalarField(g, 0.0), 2)), 0.75, 1e-14);
    EXPECT_NEAR(r_k(ConformalState(ScalarField(g, 0.0), 3)), 0.125, 1e-15);
    for (int k = 1; k <= 3; ++k) {
        const ConformalState s(smooth_bump(g, 0.1), k);
        EXPECT_LE(r_k(s), total_curvature(s) / s.volume() * (1 + 1e-14));
    }
}

TEST(Fk, RoundValueAndShiftInvariance) {
    const auto g = build_round_sphere(3, 32);
    const ConformalState s(ScalarField(g, 0.0), 1);
    const double vol = s.volume();
    EXPECT_NEAR(F_k_functional(s), 1.5 * std::pow(vol, 2.0 / 3.0), 1e-12);
    EXPECT_NEAR(std::pow(vol, 2.0 / 3.0) / std::pow(2 * pi * pi, 2.0 / 3.0), 1.0, 1e-3);
    for (int k = 1; k <= 3; ++k) {
        ConformalState a(smooth_bump(g, 0.1), k);
        const double f = F_k_functional(a);
        a.shift(0.37);
        EXPECT_NEAR(F_k_functional(a), f, 1e-10 * std::abs(f)) << "k=" << k;
    }
}

TEST(Covariance, ConstantShiftScalesSigmaAndR) {
    const auto g = build_round_sphere(3, 16);
    for (int k = 1; k <= 3; ++k) {
        ConformalState s(smooth_bump(g, 0.1), k);
        const ScalarField before = sigma_k_field(s);
        const double r = r_k(s);
        const double c = -0.45;
        s.shift(c);
        const ScalarField after = sigma_k_field(s);
        for (std::size_t p = 0; p < g->size(); ++p) {
            EXPECT_NEAR(after[p], std::exp(2 * k * c) * before[p], 1e-12 * after[p]);
        }
        EXPECT_NEAR(r_k(s), std::exp(2 * k * c) * r, 1e-12 * r_k(s));
    }
}

TEST(Harnack, ValuesAndShiftInvariance) {
    const auto g = build_round_sphere(3, 32);
    EXPECT_EQ(harnack_quantity(ConformalState(ScalarField(g, 1.2), 1)), 0.0);
    const double eps = 0.1;
    ConformalState s(make_field(g, [eps](std::span<const double> x) { return eps * std::cos(x[0]); }), 1);
    const double h = harnack_quantity(s);
    // Discrete max of |sin θ₁| and the centered difference both lose O(h²).
    const double hstep = pi / 32;
    EXPECT_NEAR(h, eps, eps * hstep * hstep);
    s.shift(3.0);
    EXPECT_NEAR(harnack_quantity(s), h, 1e-14);
}

TEST(ConeCheck, Examples) {
    const auto g = build_round_sphere(3, 16);
    for (int k = 1; k <= 3; ++k) {
        const auto c = cone_check_field(ConformalState(ScalarField(g, 0.0), k));
        EXPECT_TRUE(c.label.inside);
        EXPECT_EQ(c.outside_count, 0u);
    }
    const auto hopf = cone_check_field(ConformalState(ScalarField(build_hopf_product(3, 1.0, 16), 0.0), 2));
    EXPECT_FALSE(hopf.label.inside);
    EXPECT_EQ(hopf.label.first_failing_j, 2);
    const auto gs = build_synthetic(3, SymMatrix(3), 8);
    for (int k = 1; k <= 3; ++k) {
        const auto c = cone_check_field(ConformalState(ScalarField(gs, 0.0), k));
        EXPECT_FALSE(c.label.inside);
        EXPECT_EQ(c.label.first_failing_j, 1);
        EXPECT_EQ(c.outside_count, gs->size());
    }
}

TEST(Cache, InterleavedUpdatesAreCoherent) {
    const auto g = build_round_sphere(3, 16);
    ConformalState s(ScalarField(g, 0.0), 2);
    EXPECT_NEAR(sigma_k_field(s)[0], 0.75, 1e-14);
    s.set_u(ScalarField(g, 0.5));
    EXPECT_FALSE(s.cached());
    EXPECT_NEAR(sigma_k_field(s)[0], 0.75 * std::exp(2.0), 1e-13);
    const ScalarField bump = smooth_bump(g, 0.05);
    s.set_u(bump);
    const SymMatrixField w = assemble_W(bump);
    EXPECT_EQ(max_field_diff(s.W(), w), 0.0);
    s.shift(0.1);
    EXPECT_LT(max_field_diff(s.W(), w), 1e-13);
    EXPECT_NEAR(s.u()[0], bump[0] + 0.1, 1e-15);
    EXPECT_THROW(s.set_u(ScalarField(build_round_sphere(3, 16), 0.0)), DomainError);
}

TEST(Quotient, ZeroOrderReducesToPlainCurvature) {
    const auto g = build_round_sphere(3, 16);
    const ScalarField u = smooth_bump(g, 0.1);
    const ConformalState a(u, 2), b(u, 2, 0);
    EXPECT_EQ(r_k(a), r_k(b));
    const ConformalState q(u, 2, 1);
    // σ₂/σ₁ of ½I is (3/4)/(3/2) = ½, rescaled by e^{2u}.
    const ConformalState q0(ScalarField(g, 0.0), 2, 1);
    EXPECT_NEAR(r_k(q0), 0.5, 1e-14);
    EXPECT_GT(r_k(q), 0.0);
    EXPECT_THROW(ConformalState(u, 2, 2), DomainError);
}

TEST(Dissipation, IntegrandIsNonNegative) {
    const auto g = build_round_sphere(3, 16);
    for (int k = 1; k <= 3; ++k) {
        const ConformalState s(smooth_bump(g, 0.2), k);
        EXPECT_GE(dissipation_integral(s), 0.0);
        const auto& c = s.curvature().values;
        const double r = r_k(s);
        for (double v : c) EXPECT_GE((v - r) * (std::log(v) - std::log(r)), 0.0);
    }
    EXPECT_NEAR(dissipation_integral(ConformalState(ScalarField(g, 0.2), 2)), 0.0, 1e-14);
    (void)theta1;
}
