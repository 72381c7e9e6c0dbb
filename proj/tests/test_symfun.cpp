#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sigmaflow/symfun.hpp"

using namespace sigmaflow;
using namespace sigmaflow::symfun;

namespace {

std::vector<double> as_vector(const Spectrum& s) {
    return {s.values().begin(), s.values().end()};
}

SymMatrix fd_gradient(const SymMatrix& a, int k, double step) {
    const int n = a.dim();
    SymMatrix g(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            SymMatrix p = a, m = a;
            p(i, j) += step;
            m(i, j) -= step;
            // A symmetric perturbation of an off-diagonal slot moves both A_ij and A_ji.
            const double d = (sigma_k_matrix(p, k) - sigma_k_matrix(m, k)) / (2.0 * step);
            g(i, j) = i == j ? d : 0.5 * d;
        }
    }
    return g;
}

double max_abs_diff(const SymMatrix& a, const SymMatrix& b) {
    double m = 0.0;
    for (int i = 0; i < a.dim(); ++i) {
        for (int j = i; j < a.dim(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
    }
    return m;
}

}  // namespace

TEST(SigmaK, SmallExamples) {
    EXPECT_DOUBLE_EQ(sigma_k(Spectrum{1, 1, 1}, 2), 3.0);
    EXPECT_DOUBLE_EQ(sigma_k(Spectrum{1, 2, 3}, 2), 11.0);
    EXPECT_DOUBLE_EQ(sigma_k(Spectrum{0.5, 0.5, 0.5}, 3), 0.125);
    EXPECT_DOUBLE_EQ(sigma_k(Spectrum{4, -2}, 0), 1.0);
}

TEST(SigmaK, RejectsOutOfRangeOrder) {
    EXPECT_THROW((void)sigma_k(Spectrum{1, 2, 3}, 4), DomainError);
    EXPECT_THROW((void)sigma_k(Spectrum{1, 2, 3}, -1), DomainError);
    EXPECT_THROW((void)sigma_k_matrix(SymMatrix::identity(3), 4), DomainError);
}

TEST(SigmaK, MatchesSubsetEnumeration) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 8;
        std::vector<double> lam(n);
        for (double& v : lam) v = d(rng);
        const Spectrum s(lam);
        for (int k = 0; k <= n; ++k) {
            EXPECT_NEAR(sigma_k(s, k), oracle::sigma_by_subsets(lam, k), 1e-12 * std::pow(2.0, k) * oracle::binomial(n, k));
        }
    }
}

TEST(SpectrumType, ValidatesInput) {
    EXPECT_THROW(Spectrum(std::vector<double>{}), DomainError);
    EXPECT_THROW((Spectrum{1.0, NAN}), DomainError);
    EXPECT_THROW(Spectrum(std::vector<double>(9, 1.0)), DomainError);
    const Spectrum s{1, 2, 3};
    EXPECT_EQ(as_vector(s.without(1)), (std::vector<double>{1, 3}));
}

TEST(SymMatrixType, SingleStoredCopy) {
    SymMatrix a(3);
    a(0, 2) = 5.0;
    EXPECT_EQ(a(2, 0), 5.0);
    a(2, 0) = -1.0;
    EXPECT_EQ(a(0, 2), -1.0);
}

TEST(SigmaKMatrix, DiagonalAndIdentity) {
    EXPECT_NEAR(sigma_k_matrix(SymMatrix::diagonal({1, 2, 3}), 2), 11.0, 1e-13);
    EXPECT_NEAR(sigma_k_matrix(SymMatrix::identity(4), 2), 6.0, 1e-13);
}

TEST(SigmaKMatrix, PrincipalMinorOracle) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 3 + trial % 4;
        const SymMatrix a = oracle::random_symmetric(rng, n);
        for (int k = 1; k <= n; ++k) {
            const auto ref = oracle::principal_minor_sum(a, k);
            EXPECT_NEAR(sigma_k_matrix(a, k), ref.value, 1e-12 * std::max(std::abs(ref.value), ref.scale))
                << "n=" << n << " k=" << k;
        }
    }
}

TEST(SigmaKMatrix, NonFiniteInputIsNumericError) {
    SymMatrix a = SymMatrix::identity(3);
    a(0, 1) = INFINITY;
    EXPECT_THROW((void)sigma_k_matrix(a, 2), NumericError);
}

TEST(NewtonTransform, Examples) {
    const SymMatrix a = SymMatrix::diagonal({1, 2, 3});
    EXPECT_LT(max_abs_diff(newton_transform(a, 1), SymMatrix::diagonal({5, 4, 3})), 1e-13);
    std::mt19937_64 rng(5);
    const SymMatrix r = oracle::random_symmetric(rng, 4);
    EXPECT_LT(max_abs_diff(newton_transform(r, 0), SymMatrix::identity(4)), 0.0 + 1e-300);
    EXPECT_THROW((void)newton_transform(r, 4), DomainError);
    EXPECT_THROW((void)newton_transform(r, -1), DomainError);
}

TEST(NewtonTransform, MatchesPolynomialDefinition) {
    // T_k = Σ_j (−1)^j σ_{k−j} A^j with σ from the principal-minor oracle.
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + trial % 4;
        const SymMatrix a = oracle::random_symmetric(rng, n);
        for (int k = 0; k < n; ++k) {
            std::vector<double> pow(n * n, 0.0), acc(n * n, 0.0), next(n * n);
            for (int i = 0; i < n; ++i) pow[i * n + i] = 1.0;
            for (int j = 0; j <= k; ++j) {
                const double c = (j % 2 ? -1.0 : 1.0) * oracle::principal_minor_sum(a, k - j).value;
                for (int t = 0; t < n * n; ++t) acc[t] += c * pow[t];
                for (int r = 0; r < n; ++r) {
                    for (int s = 0; s < n; ++s) {
                        double v = 0.0;
                        for (int l = 0; l < n; ++l) v += pow[r * n + l] * a(l, s);
                        next[r * n + s] = v;
                    }
                }
                pow = next;
            }
            const SymMatrix t = newton_transform(a, k);
            for (int r = 0; r < n; ++r) {
                for (int s = 0; s < n; ++s) EXPECT_NEAR(t(r, s), acc[r * n + s], 1e-11);
            }
        }
    }
}

TEST(NewtonTransform, TraceIdentity) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + trial % 4;
        const SymMatrix a = oracle::random_symmetric(rng, n);
        for (int k = 0; k < n; ++k) {
            const double sk = sigma_k_matrix(a, k);
            EXPECT_NEAR(newton_transform(a, k).trace(), (n - k) * sk,
                        1e-12 * std::max(1.0, oracle::principal_minor_sum(a, k).scale * n));
        }
    }
}

TEST(GradSigmaK, Examples) {
    EXPECT_LT(max_abs_diff(grad_sigma_k(SymMatrix::diagonal({1, 2, 3}), 2), SymMatrix::diagonal({5, 4, 3})), 1e-13);
    for (int n = 3; n <= 6; ++n) {
        for (int k = 1; k <= n; ++k) {
            const SymMatrix g = grad_sigma_k(SymMatrix::identity(n), k);
            EXPECT_LT(max_abs_diff(g, SymMatrix::identity(n, oracle::binomial(n - 1, k - 1))), 1e-12);
        }
    }
    EXPECT_THROW((void)grad_sigma_k(SymMatrix::identity(3), 0), DomainError);
}

TEST(GradSigmaK, FiniteDifferenceConsistency) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + trial % 4;
        const SymMatrix a = oracle::random_symmetric(rng, n);
        for (int k = 1; k <= n; ++k) {
            EXPECT_LT(max_abs_diff(grad_sigma_k(a, k), fd_gradient(a, k, 1e-5)), 1e-6);
        }
    }
}

TEST(GradSigmaK, PositiveDefiniteInCone) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + trial % 4;
        const int k = 1 + trial % n;
        const SymMatrix a = oracle::random_in_cone(rng, n, k);
        const Spectrum ev = eigenvalues(grad_sigma_k(a, k));
        for (double v : ev.values()) EXPECT_GT(v, 0.0);
    }
}

TEST(ConeTest, Examples) {
    const ConeLabel in = cone_test(Spectrum{1, 1, -0.1}, 2);
    EXPECT_TRUE(in.inside);
    EXPECT_FALSE(in.first_failing_j.has_value());
    const ConeLabel out = cone_test(Spectrum{-1, -1, 5}, 2);
    EXPECT_FALSE(out.inside);
    EXPECT_EQ(out.first_failing_j, 2);
    EXPECT_TRUE(cone_test(Spectrum{0.5, 0.5, 0.5}, 3).inside);
    EXPECT_EQ(cone_test(Spectrum{0, 0, 0}, 1).first_failing_j, 1);
    EXPECT_THROW((void)cone_test(Spectrum{1, 1}, 3), DomainError);
}

TEST(ConeTest, ConvexityAlongSegments) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 3 + trial % 4;
        const int k = 1 + trial % n;
        const SymMatrix a = oracle::random_in_cone(rng, n, k);
        const SymMatrix b = oracle::random_in_cone(rng, n, k);
        const double t = u(rng);
        EXPECT_TRUE(cone_test(eigenvalues(t * a + (1.0 - t) * b), k).inside);
    }
}

TEST(LogSigma, RoundValueAndGradient) {
    const auto r = log_sigma_k_and_grad(SymMatrix::identity(3, 0.5), 2);
    EXPECT_NEAR(r.value, std::log(0.75), 1e-15);
    EXPECT_LT(max_abs_diff(r.gradient, SymMatrix::identity(3, 4.0 / 3.0)), 1e-14);
}

TEST(LogSigma, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 3 + trial % 4;
        const int k = 1 + trial % n;
        const SymMatrix a = oracle::random_in_cone(rng, n, k);
        const auto r = log_sigma_k_and_grad(a, k);
        const double step = 1e-6;
        for (int i = 0; i < n; ++i) {
            for (int j = i; j < n; ++j) {
                SymMatrix p = a, m = a;
                p(i, j) += step;
                m(i, j) -= step;
                double d = (std::log(sigma_k_matrix(p, k)) - std::log(sigma_k_matrix(m, k))) / (2 * step);
                if (i != j) d *= 0.5;
                EXPECT_NEAR(r.gradient(i, j), d, 1e-5 * std::max(1.0, std::abs(d)));
            }
        }
    }
}

TEST(LogSigma, SmallPositiveSigmaStillSucceeds) {
    for (double eps : {1e-3, 1e-8, 1e-14}) {
        const auto r = log_sigma_k_and_grad(SymMatrix::diagonal({1.0, 1.0, eps}), 3);
        EXPECT_NEAR(r.value, std::log(eps), 1e-9);
    }
}

TEST(LogSigma, OutsideConeIsError) {
    try {
        (void)log_sigma_k_and_grad(SymMatrix::diagonal({-1, -1, 5}), 2);
        FAIL() << "expected ConeViolation";
    } catch (const ConeViolation& e) {
        EXPECT_EQ(e.label().first_failing_j, 2);
        EXPECT_EQ(e.code(), ExitCode::cone);
    }
}

TEST(LogSigma, ConcaveAlongLines) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + trial % 4;
        const int k = 1 + trial % n;
        const SymMatrix a = oracle::random_in_cone(rng, n, k);
        const SymMatrix b = oracle::random_symmetric(rng, n);
        const double t = 1e-3;
        const SymMatrix ap = a + t * b, am = a - t * b;
        if (!cone_test(eigenvalues(ap), k).inside || !cone_test(eigenvalues(am), k).inside) continue;
        const double second = std::log(sigma_k_matrix(ap, k)) - 2.0 * std::log(sigma_k_matrix(a, k)) +
                              std::log(sigma_k_matrix(am, k));
        EXPECT_LE(second, 1e-8);
    }
}

TEST(SigmaRoot, Examples) {
    const auto r = sigma_k_root_and_grad(SymMatrix::identity(3, 0.5), 2);
    EXPECT_NEAR(r.value, std::sqrt(3.0) / 2.0, 1e-15);
    EXPECT_THROW((void)sigma_k_root_and_grad(SymMatrix::diagonal({-1, -1, 5}), 2), ConeViolation);
}

TEST(SigmaRoot, HomogeneityAndEulerIdentity) {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> ts(0.1, 5.0);
    std::uniform_real_distribution<double> d(-0.5, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + trial % 4;
        const int k = 1 + trial % n;
        const SymMatrix a = oracle::random_in_cone(rng, n, k);
        const double t = ts(rng);
        const double f = sigma_k_root_and_grad(a, k).value;
        EXPECT_NEAR(sigma_k_root_and_grad(t * a, k).value, t * f, 1e-12 * t * std::max(1.0, f));

        // Euler identity at a diagonal point: Σ F^{ii} w_ii = F.
        std::vector<double> diag(n);
        Spectrum lam;
        do {
            for (double& v : diag) v = d(rng);
            lam = Spectrum(diag);
        } while (!cone_test(lam, k).inside);
        const auto r = sigma_k_root_and_grad(SymMatrix::diagonal(diag), k);
        double euler = 0.0;
        for (int i = 0; i < n; ++i) euler += r.gradient(i, i) * diag[i];
        EXPECT_NEAR(euler, r.value, 1e-12 * std::max(1.0, r.value));
    }
}

TEST(Identities, RowSumSecondOrderAndNewtonMacLaurin) {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> d(-1.0, 2.0);
    for (int trial = 0; trial < 400; ++trial) {
        const int n = 3 + trial % 4;
        std::vector<double> lam(n);
        for (double& v : lam) v = d(rng);
        const Spectrum s(lam);
        for (int k = 1; k <= n; ++k) {
            const double scale = std::pow(2.0, k + 1) * oracle::binomial(n, k) * n;
            double row = 0.0;
            double second = 0.0;
            for (int i = 0; i < n; ++i) {
                const double si = sigma_k(s.without(i), k - 1);
                row += si;
                second += si * lam[i] * lam[i];
            }
            EXPECT_NEAR(row, (n - k + 1) * sigma_k(s, k - 1), 1e-12 * scale);
            const double skp1 = k < n ? sigma_k(s, k + 1) : 0.0;
            EXPECT_NEAR(second, sigma_k(s, 1) * sigma_k(s, k) - (k + 1) * skp1, 1e-12 * scale);
            if (k < n && cone_test(s, k + 1).inside) {
                EXPECT_LE((k + 1) * skp1, double(n - k) / n * sigma_k(s, 1) * sigma_k(s, k) + 1e-12 * scale);
            }
        }
    }
}
