#pragma once

// Exact eigen-decomposition of the discrete Laplace–Beltrami operator on the
// separable charts, used to invert (α I + β Δ_h) in one pass. Δ_h is always
// the 2nd-order operator, also on geometries built with 4th-order stencils.
//
// Δ_h is written level by level, Δ_d = c2·D² + c1·D + q·Δ_{d+1}, with the
// same three-point stencils and pole folding as geometry::laplacian. Each
// level is diagonalised per eigenmode of the level below it. Crossing a pole
// on axis d applies the reflection R_{d+1} to the later axes, so a sub-mode
// with R-parity ε folds the ghost value back as ε times the boundary value.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "sigmaflow/geometry.hpp"
#include "sigmaflow/parallel.hpp"

namespace sigmaflow::spectral {

using geometry::AxisKind;
using geometry::BackgroundGeometry;

class SeparableLaplacian {
public:
    /// Returns nothing when the chart is not separable in this sense, when a
    /// line operator has a complex spectrum, or when the dense line bases
    /// would exceed max_doubles of storage.
    [[nodiscard]] static std::optional<SeparableLaplacian> build(const BackgroundGeometry& g,
                                                                 std::size_t max_doubles = 1u << 24) {
        const auto& grid = g.grid();
        const int n = grid.n;
        if (static_cast<int>(g.levels().size()) != n) return std::nullopt;
        std::size_t storage = 0;
        for (int d = 0; d < n; ++d) {
            const std::size_t N = grid.shape[d];
            storage += grid.axis_kind[d] == AxisKind::periodic ? 2 * N * N : 2 * N * N * grid.stride[d];
        }
        if (storage > max_doubles) return std::nullopt;

        SeparableLaplacian s;
        s.n_ = n;
        s.shape_ = grid.shape;
        s.stride_ = grid.stride;
        s.total_ = grid.total_points;
        s.levels_.resize(n);

        std::vector<double> sub_lambda{0.0};
        std::vector<int> sub_parity{1};
        for (int d = n - 1; d >= 0; --d) {
            const auto& lv = g.levels()[d];
            const int N = grid.shape[d];
            const double h = grid.spacing[d];
            const std::size_t M = grid.stride[d];
            Level& L = s.levels_[d];
            L.periodic = grid.axis_kind[d] == AxisKind::periodic;
            std::vector<double> lambda(N * M);
            std::vector<int> parity(N * M);
            if (L.periodic) {
                for (int i = 0; i < N; ++i) {
                    if (lv.c1[i] != 0.0 || lv.c2[i] != lv.c2[0] || lv.q[i] != lv.q[0]) return std::nullopt;
                }
                // Real Fourier basis 1, cos(mx), sin(mx), …, cos(Nx/2).
                L.basis.resize(1);
                L.inverse.resize(1);
                Eigen::MatrixXd F(N, N);
                std::vector<double> omega(N);
                std::vector<int> mode(N);
                for (int col = 0; col < N; ++col) {
                    const int m = (col + 1) / 2;
                    const bool is_sin = col > 0 && col % 2 == 0;
                    mode[col] = m;
                    for (int i = 0; i < N; ++i) {
                        const double x = 2.0 * std::numbers::pi * m * i / N;
                        F(i, col) = is_sin ? std::sin(x) : std::cos(x);
                    }
                    const double sh = std::sin(0.5 * m * h);
                    omega[col] = -4.0 * sh * sh / (h * h);
                }
                L.basis[0] = F;
                L.inverse[0] = F.inverse();
                for (int col = 0; col < N; ++col) {
                    for (std::size_t mu = 0; mu < M; ++mu) {
                        lambda[col * M + mu] = lv.c2[0] * omega[col] + lv.q[0] * sub_lambda[mu];
                        parity[col * M + mu] = (mode[col] % 2 ? -1 : 1) * sub_parity[mu];
                    }
                }
            } else {
                L.basis.resize(M);
                L.inverse.resize(M);
                bool ok = true;
                for (std::size_t mu = 0; mu < M && ok; ++mu) {
                    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
                    const double eps = sub_parity[mu];
                    for (int i = 0; i < N; ++i) {
                        const double lo = lv.c2[i] / (h * h) - lv.c1[i] / (2 * h);
                        const double hi = lv.c2[i] / (h * h) + lv.c1[i] / (2 * h);
                        A(i, i) = -2.0 * lv.c2[i] / (h * h) + lv.q[i] * sub_lambda[mu];
                        if (i > 0) A(i, i - 1) += lo; else A(i, i) += eps * lo;
                        if (i < N - 1) A(i, i + 1) += hi; else A(i, i) += eps * hi;
                    }
                    // A commutes with the reversal J, so split into J-even and
                    // J-odd halves; this keeps near-degenerate pairs from mixing.
                    const int half = N / 2;
                    Eigen::MatrixXd V(N, N);
                    for (int sgn : {1, -1}) {
                        Eigen::MatrixXd B(half, half);
                        for (int i = 0; i < half; ++i) {
                            for (int j = 0; j < half; ++j) B(i, j) = A(i, j) + sgn * A(i, N - 1 - j);
                        }
                        Eigen::EigenSolver<Eigen::MatrixXd> es(B);
                        if (es.info() != Eigen::Success) { ok = false; break; }
                        const auto ev = es.eigenvalues();
                        const auto vec = es.eigenvectors();
                        double scale = 0.0;
                        for (int i = 0; i < half; ++i) scale = std::max(scale, std::abs(ev[i]));
                        for (int e = 0; e < half; ++e) {
                            if (std::abs(ev[e].imag()) > 1e-9 * scale) { ok = false; break; }
                            const int c = sgn > 0 ? e : half + e;
                            for (int i = 0; i < half; ++i) {
                                V(i, c) = vec(i, e).real();
                                V(N - 1 - i, c) = sgn * vec(i, e).real();
                            }
                            lambda[c * M + mu] = ev[e].real();
                            parity[c * M + mu] = sgn * sub_parity[mu];
                        }
                        if (!ok) break;
                    }
                    if (!ok) break;
                    Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
                    if (!lu.isInvertible()) { ok = false; break; }
                    L.basis[mu] = V;
                    L.inverse[mu] = lu.inverse();
                }
                if (!ok) return std::nullopt;
            }
            sub_lambda = std::move(lambda);
            sub_parity = std::move(parity);
        }
        s.eigenvalues_ = std::move(sub_lambda);
        return s;
    }

    /// Eigenvalues of Δ_h in modal index order.
    [[nodiscard]] const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }

    /// Physical values to modal coefficients.
    void forward(std::span<const double> in, std::span<double> out) const {
        std::copy(in.begin(), in.end(), out.begin());
        for (int d = n_ - 1; d >= 0; --d) apply_axis(d, out, true);
    }

    /// Modal coefficients to physical values.
    void backward(std::span<const double> in, std::span<double> out) const {
        std::copy(in.begin(), in.end(), out.begin());
        for (int d = 0; d < n_; ++d) apply_axis(d, out, false);
    }

    /// out = (α I + β Δ_h)⁻¹ in.
    void solve(double alpha, double beta, std::span<const double> in, std::span<double> out) const {
        std::vector<double> tmp(total_);
        forward(in, tmp);
        for (std::size_t i = 0; i < total_; ++i) {
            const double den = alpha + beta * eigenvalues_[i];
            tmp[i] = den != 0.0 ? tmp[i] / den : 0.0;
        }
        backward(tmp, out);
    }

    /// out = Δ_h in, through the modal representation (for tests).
    void apply(std::span<const double> in, std::span<double> out) const {
        std::vector<double> tmp(total_);
        forward(in, tmp);
        for (std::size_t i = 0; i < total_; ++i) tmp[i] *= eigenvalues_[i];
        backward(tmp, out);
    }

private:
    struct Level {
        bool periodic = false;
        std::vector<Eigen::MatrixXd> basis;    // one per sub-mode (or shared)
        std::vector<Eigen::MatrixXd> inverse;
    };

    void apply_axis(int d, std::span<double> data, bool to_modal) const {
        const int N = shape_[d];
        const std::size_t M = stride_[d];
        const std::size_t outer = total_ / (N * M);
        const Level& L = levels_[d];
        parallel_for(outer * M, [&](std::size_t lo, std::size_t hi) {
            Eigen::VectorXd line(N), res(N);
            for (std::size_t job = lo; job < hi; ++job) {
                const std::size_t o = job / M;
                const std::size_t mu = job % M;
                const std::size_t base = o * N * M + mu;
                for (int i = 0; i < N; ++i) line[i] = data[base + i * M];
                const std::size_t which = L.periodic ? 0 : mu;
                res.noalias() = (to_modal ? L.inverse[which] : L.basis[which]) * line;
                for (int i = 0; i < N; ++i) data[base + i * M] = res[i];
            }
        });
    }

    int n_ = 0;
    std::vector<int> shape_;
    std::vector<std::size_t> stride_;
    std::size_t total_ = 0;
    std::vector<Level> levels_;
    std::vector<double> eigenvalues_;
};

}  // namespace sigmaflow::spectral
