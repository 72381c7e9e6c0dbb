#pragma once

// Quantities of the conformal metric g = e^{−2u} g₀:
//   W(u) = ∇²u + du⊗du − ½|∇u|² g₀ + S₀,   σ_k(g) = e^{2ku} σ_k(W(u)),
// volume, geometric mean r_k, the functional F_k and the Harnack quantity.
// W is kept in the g₀-orthonormal frame.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sigmaflow/error.hpp"
#include "sigmaflow/geometry.hpp"
#include "sigmaflow/parallel.hpp"
#include "sigmaflow/symfun.hpp"

namespace sigmaflow::conformal {

using geometry::BackgroundGeometry;
using geometry::GeometryHandle;
using geometry::ScalarField;
using geometry::SymMatrixField;
using symfun::SymMatrix;

namespace detail {

inline void assemble_point(const BackgroundGeometry& g, std::size_t p, const double* grad,
                           const double* hess, double* w_out) {
    const int n = g.dim();
    double norm2 = 0.0;
    for (int a = 0; a < n; ++a) norm2 += grad[a] * grad[a];
    const SymMatrix s0 = g.schouten0(p);
    int t = 0;
    for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
            double w = hess[t] + grad[a] * grad[b] + s0(a, b);
            if (a == b) w -= 0.5 * norm2;
            w_out[t++] = w;
        }
    }
}

}  // namespace detail

/// W(u) in the orthonormal frame at every node.
[[nodiscard]] inline SymMatrixField assemble_W(const ScalarField& u) {
    const BackgroundGeometry& g = *u.geometry;
    const int n = g.dim();
    const int ps = SymMatrix::packed_size(n);
    const auto d = geometry::derivatives(g, u.values);
    SymMatrixField w(u.geometry);
    parallel_for(g.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            detail::assemble_point(g, p, &d.gradient[p * n], &d.hessian[p * ps], &w.packed[p * ps]);
        }
    });
    return w;
}

/// Result of scanning every node's W against Γ_k⁺.
struct ConeSummary {
    ConeLabel label;             // worst label found (inside if every node is)
    std::size_t node = 0;        // node carrying that label
    std::size_t outside_count = 0;
    double min_sigma_k = 0.0;    // min over nodes of σ_k(W)
};

/// u together with lazily computed, u-consistent caches.
///
/// With quotient order l (0 ≤ l < k) the "curvature" is σ_k(g)/σ_l(g); l = 0
/// is the plain σ_k case since σ₀ ≡ 1.
class ConformalState {
public:
    ConformalState(ScalarField u, int k, int l = 0) : u_(std::move(u)), k_(k), l_(l) {
        const int n = u_.geometry->dim();
        if (k < 1 || k > n) throw DomainError("ConformalState: k must be in [1, n]");
        if (l < 0 || l >= k) throw DomainError("ConformalState: quotient order must satisfy 0 <= l < k");
        for (double v : u_.values) {
            if (!std::isfinite(v)) throw NumericError("ConformalState: non-finite conformal factor");
        }
    }

    [[nodiscard]] const ScalarField& u() const noexcept { return u_; }
    [[nodiscard]] const GeometryHandle& geometry() const noexcept { return u_.geometry; }
    [[nodiscard]] const BackgroundGeometry& geom() const noexcept { return *u_.geometry; }
    [[nodiscard]] int k() const noexcept { return k_; }
    [[nodiscard]] int l() const noexcept { return l_; }
    [[nodiscard]] int dim() const noexcept { return u_.geometry->dim(); }

    void set_u(ScalarField u) {
        if (u.geometry != u_.geometry) throw DomainError("set_u: geometry mismatch");
        u_ = std::move(u);
        invalidate();
    }
    void set_values(std::vector<double> v) {
        if (v.size() != u_.size()) throw DomainError("set_values: size mismatch");
        u_.values = std::move(v);
        invalidate();
    }
    void shift(double c) {
        for (double& v : u_.values) v += c;
        invalidate();
    }
    [[nodiscard]] bool cached() const noexcept { return pointwise_.has_value(); }

    /// W(u) in the frame.
    [[nodiscard]] const SymMatrixField& W() const {
        ensure_pointwise();
        return pointwise_->w;
    }
    /// Frame gradient of u, n components per node.
    [[nodiscard]] const std::vector<double>& gradient() const {
        ensure_pointwise();
        return pointwise_->gradient;
    }
    /// σ_0..σ_n of W at node p.
    [[nodiscard]] const double* sigmas(std::size_t p) const {
        ensure_pointwise();
        return &pointwise_->sigmas[p * (dim() + 1)];
    }
    [[nodiscard]] const ConeSummary& cone_summary() const {
        ensure_pointwise();
        return pointwise_->cone;
    }

    /// Throws ConeViolation naming the worst node unless W ∈ Γ_k⁺ everywhere.
    void require_cone() const {
        const ConeSummary& c = cone_summary();
        if (!c.label.inside) {
            throw ConeViolation("W(u) leaves the cone at node " + std::to_string(c.node) + " (" +
                                    std::to_string(c.outside_count) + " nodes outside): " +
                                    symfun::describe(c.label),
                                c.label, c.node);
        }
    }

    /// log(σ_k(W)/σ_l(W)) per node.
    [[nodiscard]] const std::vector<double>& log_curvature_W() const {
        ensure_derived();
        return derived_->log_w;
    }
    /// T_{k−1}(W)/σ_k(W) − T_{l−1}(W)/σ_l(W) per node (packed), the gradient
    /// of log(σ_k/σ_l) with respect to W.
    [[nodiscard]] const SymMatrixField& log_curvature_gradient() const {
        ensure_derived();
        return derived_->log_grad;
    }
    /// σ_k(g)/σ_l(g) per node; equals σ_k(g) when l = 0.
    [[nodiscard]] const ScalarField& curvature() const {
        ensure_derived();
        return derived_->curvature;
    }
    /// e^{−n u} per node, the density of dvol(g) against dvol₀.
    [[nodiscard]] const std::vector<double>& density() const {
        ensure_derived();
        return derived_->density;
    }

    [[nodiscard]] double volume() const {
        ensure_derived();
        return derived_->volume;
    }
    /// log of the geometric mean of σ_k(g)/σ_l(g) under dvol(g).
    [[nodiscard]] double log_r() const {
        ensure_derived();
        return derived_->log_r;
    }

private:
    struct Pointwise {
        SymMatrixField w;
        std::vector<double> gradient;
        std::vector<double> sigmas;
        ConeSummary cone;
    };
    struct Derived {
        std::vector<double> log_w;
        SymMatrixField log_grad;
        ScalarField curvature;
        std::vector<double> density;
        double volume = 0.0;
        double log_r = 0.0;
    };

    void invalidate() noexcept {
        pointwise_.reset();
        derived_.reset();
    }

    void ensure_pointwise() const {
        if (pointwise_) return;
        const BackgroundGeometry& g = geom();
        const int n = g.dim();
        const int ps = SymMatrix::packed_size(n);
        const auto d = geometry::derivatives(g, u_.values);
        Pointwise pw{SymMatrixField(u_.geometry), d.gradient, std::vector<double>(g.size() * (n + 1)), {}};
        std::vector<std::uint8_t> failing(g.size(), 0);
        parallel_for(g.size(), [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                detail::assemble_point(g, p, &d.gradient[p * n], &d.hessian[p * ps], &pw.w.packed[p * ps]);
                const SymMatrix w = pw.w.at(p);
                if (!w.all_finite()) throw NumericError("W(u) is not finite at node " + std::to_string(p));
                const auto e = symfun::sigma_all(symfun::eigenvalues(w));
                for (int j = 0; j <= n; ++j) pw.sigmas[p * (n + 1) + j] = e[j];
                for (int j = 1; j <= k_; ++j) {
                    if (!(e[j] > 0.0)) {
                        failing[p] = static_cast<std::uint8_t>(j);
                        break;
                    }
                }
            }
        });
        // Worst node: smallest failing order, then smallest σ at that order;
        // lowest index breaks ties so the report is deterministic.
        ConeSummary c{{k_, true, std::nullopt}, 0, 0, std::numeric_limits<double>::infinity()};
        int worst_j = k_ + 1;
        double worst_val = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < g.size(); ++p) {
            const double sk = pw.sigmas[p * (n + 1) + k_];
            if (sk < c.min_sigma_k) {
                c.min_sigma_k = sk;
                if (c.label.inside) c.node = p;
            }
            const int j = failing[p];
            if (j == 0) continue;
            ++c.outside_count;
            const double v = pw.sigmas[p * (n + 1) + j];
            if (j < worst_j || (j == worst_j && v < worst_val)) {
                worst_j = j;
                worst_val = v;
                c.node = p;
                c.label = {k_, false, j};
            }
        }
        pw.cone = c;
        pointwise_ = std::move(pw);
    }

    void ensure_derived() const {
        if (derived_) return;
        require_cone();
        const BackgroundGeometry& g = geom();
        const int n = g.dim();
        Derived dv{std::vector<double>(g.size()), SymMatrixField(u_.geometry), ScalarField(u_.geometry),
                   std::vector<double>(g.size())};
        const int m = k_ - l_;
        parallel_for(g.size(), [&](std::size_t lo, std::size_t hi) {
            std::array<double, symfun::max_dim + 1> e{};
            for (std::size_t p = lo; p < hi; ++p) {
                const double* s = &pointwise_->sigmas[p * (n + 1)];
                for (int j = 0; j <= n; ++j) e[j] = s[j];
                const SymMatrix w = pointwise_->w.at(p);
                SymMatrix grad = (1.0 / e[k_]) * symfun::detail::newton_from_sigmas(w, k_ - 1, e);
                if (l_ > 0) grad -= (1.0 / e[l_]) * symfun::detail::newton_from_sigmas(w, l_ - 1, e);
                dv.log_grad.set(p, grad);
                dv.log_w[p] = std::log(e[k_]) - std::log(e[l_]);
                dv.curvature[p] = std::exp(2.0 * m * u_[p]) * e[k_] / e[l_];
                dv.density[p] = std::exp(-n * u_[p]);
            }
        });
        dv.volume = geometry::integrate(g, dv.density);
        std::vector<double> logc(g.size());
        for (std::size_t p = 0; p < g.size(); ++p) {
            if (!(dv.curvature[p] > 0.0) || !std::isfinite(dv.curvature[p])) {
                throw PositivityError("σ_k(g) is not positive and finite at node " + std::to_string(p));
            }
            logc[p] = dv.log_w[p] + 2.0 * m * u_[p];
        }
        dv.log_r = geometry::integrate(g, logc, dv.density) / dv.volume;
        if (!std::isfinite(dv.log_r)) throw PositivityError("r_k(g) is not finite");
        derived_ = std::move(dv);
    }

    ScalarField u_;
    int k_;
    int l_;
    mutable std::optional<Pointwise> pointwise_;
    mutable std::optional<Derived> derived_;
};

/// out(x) = ⟨C(x), δW(x)⟩ where δW = ∇²ρ + du⊗dρ + dρ⊗du − ⟨∇u, ∇ρ⟩ g₀ is
/// the derivative of W at u in direction ρ and C is a packed frame field.
inline void contract_W_variation(const ConformalState& s, const SymMatrixField& coeff,
                                 std::span<const double> rho, std::span<double> out) {
    const BackgroundGeometry& g = s.geom();
    const int n = g.dim();
    const int ps = SymMatrix::packed_size(n);
    const auto d = geometry::derivatives(g, rho);
    const auto& gu = s.gradient();
    parallel_for(g.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const double* c = &coeff.packed[p * ps];
            const double* du = &gu[p * n];
            const double* dr = &d.gradient[p * n];
            const double* hr = &d.hessian[p * ps];
            double cross = 0.0, trace_c = 0.0, acc = 0.0;
            for (int a = 0; a < n; ++a) cross += du[a] * dr[a];
            int t = 0;
            for (int a = 0; a < n; ++a) {
                for (int b = a; b < n; ++b, ++t) {
                    const double dw = hr[t] + du[a] * dr[b] + dr[a] * du[b];
                    if (a == b) {
                        acc += c[t] * dw;
                        trace_c += c[t];
                    } else {
                        acc += 2.0 * c[t] * dw;
                    }
                }
            }
            out[p] = acc - cross * trace_c;
        }
    });
}

/// σ_k(g) = e^{2ku} σ_k(W) per node (σ_k/σ_l of g for a quotient state).
[[nodiscard]] inline ScalarField sigma_k_field(const ConformalState& s) { return s.curvature(); }

/// ∫ e^{−nu} dvol₀.
[[nodiscard]] inline double volume(const ConformalState& s) { return s.volume(); }

/// Geometric mean of σ_k(g) under dvol(g).
[[nodiscard]] inline double r_k(const ConformalState& s) { return std::exp(s.log_r()); }

/// ∫ σ_k(g) dvol(g).
[[nodiscard]] inline double total_curvature(const ConformalState& s) {
    return geometry::integrate(s.geom(), s.curvature().values, s.density());
}

/// F_k = vol^{−(n−2k)/n} ∫ σ_k(g) dvol(g).
[[nodiscard]] inline double F_k_functional(const ConformalState& s) {
    const int n = s.dim();
    return std::pow(s.volume(), -double(n - 2 * s.k()) / n) * total_curvature(s);
}

/// ‖σ_k(g) − r_k‖_{L²(g)} and ‖σ_k(g)‖_{L²(g)}.
struct L2Deviation {
    double deviation = 0.0;
    double norm = 0.0;
};

[[nodiscard]] inline L2Deviation l2_sigma_minus_r(const ConformalState& s) {
    const double r = r_k(s);
    const auto& c = s.curvature().values;
    std::vector<double> d2(c.size()), c2(c.size());
    for (std::size_t p = 0; p < c.size(); ++p) {
        d2[p] = (c[p] - r) * (c[p] - r);
        c2[p] = c[p] * c[p];
    }
    return {std::sqrt(geometry::integrate(s.geom(), d2, s.density())),
            std::sqrt(geometry::integrate(s.geom(), c2, s.density()))};
}

/// ∫ (σ_k − r_k)(log σ_k − log r_k) dvol(g), non-negative.
[[nodiscard]] inline double dissipation_integral(const ConformalState& s) {
    const double lr = s.log_r();
    const double r = std::exp(lr);
    const auto& c = s.curvature().values;
    const auto& u = s.u().values;
    const auto& lw = s.log_curvature_W();
    const int m = s.k() - s.l();
    std::vector<double> f(c.size());
    for (std::size_t p = 0; p < c.size(); ++p) f[p] = (c[p] - r) * (lw[p] + 2.0 * m * u[p] - lr);
    return geometry::integrate(s.geom(), f, s.density());
}

/// sup |∇u|_{g₀}; with v = e^u this is sup |∇v|/v.
[[nodiscard]] inline double harnack_quantity(const ConformalState& s) {
    const auto& grad = s.gradient();
    const int n = s.dim();
    double m = 0.0;
    for (std::size_t p = 0; p * n < grad.size(); ++p) {
        double q = 0.0;
        for (int a = 0; a < n; ++a) q += grad[p * n + a] * grad[p * n + a];
        m = std::max(m, std::sqrt(q));
    }
    return m;
}

/// Runs the cone test on every node's W; never throws for points outside.
[[nodiscard]] inline ConeSummary cone_check_field(const ConformalState& s) { return s.cone_summary(); }

/// max over nodes and entries of |W|.
[[nodiscard]] inline double max_abs_W(const ConformalState& s) {
    double m = 0.0;
    for (double v : s.W().packed) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace sigmaflow::conformal
