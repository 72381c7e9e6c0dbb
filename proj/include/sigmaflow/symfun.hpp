#pragma once

// Elementary symmetric functions, Newton transformations and the Γ_k⁺ cone
// for small real symmetric matrices (dimension ≤ 8).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>

#include "sigmaflow/error.hpp"

namespace sigmaflow::symfun {

inline constexpr int max_dim = 8;

/// Eigenvalue list λ₁,…,λₙ (1 ≤ n ≤ 8), stored inline.
class Spectrum {
public:
    Spectrum() = default;

    explicit Spectrum(std::span<const double> values) {
        if (values.empty() || values.size() > static_cast<std::size_t>(max_dim)) {
            throw DomainError("Spectrum: length must be in [1, 8]");
        }
        n_ = static_cast<int>(values.size());
        for (int i = 0; i < n_; ++i) {
            if (!std::isfinite(values[i])) throw DomainError("Spectrum: non-finite entry");
            values_[i] = values[i];
        }
    }

    Spectrum(std::initializer_list<double> values)
        : Spectrum(std::span<const double>(values.begin(), values.size())) {}

    [[nodiscard]] int size() const noexcept { return n_; }
    [[nodiscard]] double operator[](int i) const noexcept { return values_[i]; }
    [[nodiscard]] std::span<const double> values() const noexcept {
        return {values_.data(), static_cast<std::size_t>(n_)};
    }

    /// The spectrum with entry i removed (λ restricted to the complement of i).
    [[nodiscard]] Spectrum without(int i) const {
        std::array<double, max_dim> rest{};
        int m = 0;
        for (int j = 0; j < n_; ++j) {
            if (j != i) rest[m++] = values_[j];
        }
        return Spectrum(std::span<const double>(rest.data(), static_cast<std::size_t>(m)));
    }

private:
    std::array<double, max_dim> values_{};
    int n_ = 0;
};

/// Real symmetric n×n matrix with a single stored copy of each off-diagonal
/// entry (packed upper triangle).
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(int n) : n_(n) {
        if (n < 1 || n > max_dim) throw DomainError("SymMatrix: dimension must be in [1, 8]");
    }

    [[nodiscard]] static SymMatrix identity(int n, double scale = 1.0) {
        SymMatrix m(n);
        for (int i = 0; i < n; ++i) m(i, i) = scale;
        return m;
    }

    [[nodiscard]] static SymMatrix diagonal(std::span<const double> d) {
        SymMatrix m(static_cast<int>(d.size()));
        for (int i = 0; i < m.n_; ++i) m(i, i) = d[i];
        return m;
    }

    [[nodiscard]] static SymMatrix diagonal(std::initializer_list<double> d) {
        return diagonal(std::span<const double>(d.begin(), d.size()));
    }

    [[nodiscard]] int dim() const noexcept { return n_; }

    [[nodiscard]] double& operator()(int i, int j) noexcept { return data_[slot(i, j)]; }
    [[nodiscard]] double operator()(int i, int j) const noexcept { return data_[slot(i, j)]; }

    /// Packed upper-triangle storage, row-major: (0,0),(0,1),…,(0,n-1),(1,1),…
    [[nodiscard]] std::span<const double> packed() const noexcept {
        return {data_.data(), static_cast<std::size_t>(packed_size(n_))};
    }
    [[nodiscard]] std::span<double> packed() noexcept {
        return {data_.data(), static_cast<std::size_t>(packed_size(n_))};
    }

    [[nodiscard]] static constexpr int packed_size(int n) noexcept { return n * (n + 1) / 2; }

    [[nodiscard]] double trace() const noexcept {
        double t = 0.0;
        for (int i = 0; i < n_; ++i) t += (*this)(i, i);
        return t;
    }

    [[nodiscard]] double frobenius() const noexcept {
        double s = 0.0;
        for (int i = 0; i < n_; ++i) {
            for (int j = 0; j < n_; ++j) s += (*this)(i, j) * (*this)(i, j);
        }
        return std::sqrt(s);
    }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.begin() + packed_size(n_),
                           [](double v) { return std::isfinite(v); });
    }

    SymMatrix& operator+=(const SymMatrix& o) noexcept {
        for (int s = 0; s < packed_size(n_); ++s) data_[s] += o.data_[s];
        return *this;
    }
    SymMatrix& operator-=(const SymMatrix& o) noexcept {
        for (int s = 0; s < packed_size(n_); ++s) data_[s] -= o.data_[s];
        return *this;
    }
    SymMatrix& operator*=(double c) noexcept {
        for (int s = 0; s < packed_size(n_); ++s) data_[s] *= c;
        return *this;
    }

    friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) noexcept { return a += b; }
    friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) noexcept { return a -= b; }
    friend SymMatrix operator*(double c, SymMatrix a) noexcept { return a *= c; }
    friend SymMatrix operator*(SymMatrix a, double c) noexcept { return a *= c; }

    /// Frobenius inner product tr(AB).
    [[nodiscard]] friend double contract(const SymMatrix& a, const SymMatrix& b) noexcept {
        double s = 0.0;
        for (int i = 0; i < a.n_; ++i) {
            s += a(i, i) * b(i, i);
            for (int j = i + 1; j < a.n_; ++j) s += 2.0 * a(i, j) * b(i, j);
        }
        return s;
    }

private:
    [[nodiscard]] int slot(int i, int j) const noexcept {
        if (i > j) std::swap(i, j);
        return i * n_ - i * (i - 1) / 2 + (j - i);
    }

    std::array<double, max_dim * (max_dim + 1) / 2> data_{};
    int n_ = 0;
};

/// All elementary symmetric polynomials e_0..e_n of the list, by the
/// expanding-product recurrence e_j ← e_j + λ·e_{j-1}.
[[nodiscard]] inline std::array<double, max_dim + 1> sigma_all(const Spectrum& lam) noexcept {
    std::array<double, max_dim + 1> e{};
    e[0] = 1.0;
    const int n = lam.size();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j >= 1; --j) e[j] += lam[i] * e[j - 1];
    }
    return e;
}

[[nodiscard]] inline double sigma_k(const Spectrum& lam, int k) {
    if (k < 0 || k > lam.size()) {
        throw DomainError("sigma_k: k=" + std::to_string(k) + " outside [0, " +
                          std::to_string(lam.size()) + "]");
    }
    return sigma_all(lam)[k];
}

/// Eigenvalues by cyclic Jacobi rotations, iterated until the off-diagonal
/// Frobenius norm is below 1e-14 relative to the matrix norm.
[[nodiscard]] inline Spectrum eigenvalues(const SymMatrix& a) {
    const int n = a.dim();
    std::array<std::array<double, max_dim>, max_dim> m{};
    double norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            m[i][j] = a(i, j);
            norm2 += m[i][j] * m[i][j];
        }
    }
    if (!std::isfinite(norm2)) throw NumericError("eigenvalues: non-finite matrix entry");
    const double tol2 = 1e-28 * std::max(norm2, 1e-300);

    auto off2 = [&] {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) s += 2.0 * m[i][j] * m[i][j];
        }
        return s;
    };

    int sweep = 0;
    for (; sweep < 64 && off2() > tol2; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = m[p][q];
                if (apq == 0.0) continue;
                const double theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int r = 0; r < n; ++r) {
                    const double mrp = m[r][p];
                    const double mrq = m[r][q];
                    m[r][p] = c * mrp - s * mrq;
                    m[r][q] = s * mrp + c * mrq;
                }
                for (int r = 0; r < n; ++r) {
                    const double mpr = m[p][r];
                    const double mqr = m[q][r];
                    m[p][r] = c * mpr - s * mqr;
                    m[q][r] = s * mpr + c * mqr;
                }
            }
        }
    }
    if (off2() > tol2) throw NumericError("eigenvalues: Jacobi iteration did not converge");

    std::array<double, max_dim> d{};
    for (int i = 0; i < n; ++i) d[i] = m[i][i];
    return Spectrum(std::span<const double>(d.data(), static_cast<std::size_t>(n)));
}

[[nodiscard]] inline double sigma_k_matrix(const SymMatrix& a, int k) {
    if (k < 0 || k > a.dim()) throw DomainError("sigma_k_matrix: k out of range");
    if (k == 0) return 1.0;
    return sigma_k(eigenvalues(a), k);
}

namespace detail {

[[nodiscard]] inline SymMatrix product_symmetrized(const SymMatrix& a, const SymMatrix& b) {
    const int n = a.dim();
    SymMatrix out(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double ij = 0.0;
            double ji = 0.0;
            for (int l = 0; l < n; ++l) {
                ij += a(i, l) * b(l, j);
                ji += a(j, l) * b(l, i);
            }
            out(i, j) = 0.5 * (ij + ji);
        }
    }
    return out;
}

// T_k by T_j = σ_j I − A T_{j−1}, given σ_0..σ_k.
[[nodiscard]] inline SymMatrix newton_from_sigmas(const SymMatrix& a, int k,
                                                  const std::array<double, max_dim + 1>& e) {
    SymMatrix t = SymMatrix::identity(a.dim());
    for (int j = 1; j <= k; ++j) {
        SymMatrix next = SymMatrix::identity(a.dim(), e[j]);
        next -= product_symmetrized(a, t);
        t = next;
    }
    return t;
}

}  // namespace detail

/// T_k(A) = σ_k I − σ_{k−1} A + ⋯ + (−1)^k A^k, for 0 ≤ k ≤ n−1.
[[nodiscard]] inline SymMatrix newton_transform(const SymMatrix& a, int k) {
    if (k < 0 || k > a.dim() - 1) throw DomainError("newton_transform: k out of range");
    if (k == 0) return SymMatrix::identity(a.dim());
    return detail::newton_from_sigmas(a, k, sigma_all(eigenvalues(a)));
}

/// ∂σ_k/∂A = T_{k−1}(A), for 1 ≤ k ≤ n.
[[nodiscard]] inline SymMatrix grad_sigma_k(const SymMatrix& a, int k) {
    if (k < 1 || k > a.dim()) throw DomainError("grad_sigma_k: k out of range");
    return newton_transform(a, k - 1);
}

[[nodiscard]] inline ConeLabel cone_test(const Spectrum& lam, int k) {
    if (k < 1 || k > lam.size()) throw DomainError("cone_test: k out of range");
    const auto e = sigma_all(lam);
    ConeLabel label{k, true, std::nullopt};
    for (int j = 1; j <= k; ++j) {
        if (!(e[j] > 0.0)) {
            label.inside = false;
            label.first_failing_j = j;
            break;
        }
    }
    return label;
}

/// Everything pointwise consumers need from one eigen-decomposition.
struct PointData {
    std::array<double, max_dim + 1> sigmas{};
    ConeLabel cone;
};

[[nodiscard]] inline PointData point_data(const SymMatrix& a, int k) {
    const Spectrum lam = eigenvalues(a);
    return {sigma_all(lam), cone_test(lam, k)};
}

[[nodiscard]] inline std::string describe(const ConeLabel& label) {
    if (label.inside) return "inside Γ_" + std::to_string(label.k) + "⁺";
    return "outside Γ_" + std::to_string(label.k) + "⁺ (σ_" +
           std::to_string(label.first_failing_j.value_or(0)) + " ≤ 0)";
}

struct ValueAndGradient {
    double value = 0.0;
    SymMatrix gradient;
};

/// (log σ_k(A), T_{k−1}(A)/σ_k(A)); A must lie in Γ_k⁺.
[[nodiscard]] inline ValueAndGradient log_sigma_k_and_grad(const SymMatrix& a, int k) {
    if (k < 1 || k > a.dim()) throw DomainError("log_sigma_k_and_grad: k out of range");
    const auto pd = point_data(a, k);
    if (!pd.cone.inside) {
        throw ConeViolation("log_sigma_k_and_grad: matrix " + describe(pd.cone), pd.cone);
    }
    const double sk = pd.sigmas[k];
    return {std::log(sk), (1.0 / sk) * detail::newton_from_sigmas(a, k - 1, pd.sigmas)};
}

/// (σ_k(A)^{1/k}, (1/k) σ_k^{1/k−1} T_{k−1}(A)); A must lie in Γ_k⁺.
[[nodiscard]] inline ValueAndGradient sigma_k_root_and_grad(const SymMatrix& a, int k) {
    if (k < 1 || k > a.dim()) throw DomainError("sigma_k_root_and_grad: k out of range");
    const auto pd = point_data(a, k);
    if (!pd.cone.inside) {
        throw ConeViolation("sigma_k_root_and_grad: matrix " + describe(pd.cone), pd.cone);
    }
    const double sk = pd.sigmas[k];
    const double root = std::pow(sk, 1.0 / k);
    return {root, (root / (k * sk)) * detail::newton_from_sigmas(a, k - 1, pd.sigmas)};
}

}  // namespace sigmaflow::symfun
