#pragma once

// Structured-grid charts for the model backgrounds: round Sⁿ, S¹(r)×S^{n−1}
// and a flat periodic box with a prescribed constant Schouten tensor. All
// charts have a diagonal metric g₀ = Σ H_a² (dx^a)², so tensors are kept in
// the g₀-orthonormal frame e_a = ∂_a / H_a.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sigmaflow/error.hpp"
#include "sigmaflow/parallel.hpp"
#include "sigmaflow/symfun.hpp"

namespace sigmaflow::geometry {

using symfun::SymMatrix;

enum class AxisKind : std::uint8_t { periodic, pole_shifted };

enum class ChartKind { round_sphere, hopf_product, synthetic };

[[nodiscard]] inline const char* to_string(AxisKind k) noexcept {
    return k == AxisKind::periodic ? "periodic" : "pole_shifted";
}

[[nodiscard]] inline const char* to_string(ChartKind k) noexcept {
    switch (k) {
        case ChartKind::round_sphere: return "round_sphere";
        case ChartKind::hopf_product: return "hopf_product";
        case ChartKind::synthetic: return "synthetic";
    }
    return "unknown";
}

/// Logically rectangular grid, row-major with the last axis fastest.
///
/// Pole-shifted axes sample (i+½)h on (0, π); crossing either end maps to the
/// mirrored node on the same axis and sends the remaining sphere coordinates
/// to their antipode (later polar axes reflect θ → π−θ, the azimuth shifts by
/// π). Periodic axes sample i·h on [0, 2π).
struct Grid {
    int n = 0;
    std::vector<int> shape;
    std::vector<double> spacing;
    std::vector<AxisKind> axis_kind;
    std::vector<std::size_t> stride;
    std::size_t total_points = 0;

    Grid() = default;

    Grid(std::vector<int> shape_, std::vector<AxisKind> kinds)
        : n(static_cast<int>(shape_.size())), shape(std::move(shape_)), axis_kind(std::move(kinds)) {
        spacing.resize(n);
        stride.resize(n);
        total_points = 1;
        for (int a = n - 1; a >= 0; --a) {
            stride[a] = total_points;
            total_points *= static_cast<std::size_t>(shape[a]);
            spacing[a] = (axis_kind[a] == AxisKind::periodic ? 2.0 * std::numbers::pi
                                                             : std::numbers::pi) /
                         shape[a];
        }
    }

    [[nodiscard]] double coordinate(int axis, int index) const noexcept {
        return axis_kind[axis] == AxisKind::periodic ? index * spacing[axis]
                                                     : (index + 0.5) * spacing[axis];
    }

    void unflatten(std::size_t p, std::span<int> idx) const noexcept {
        for (int a = 0; a < n; ++a) {
            idx[a] = static_cast<int>(p / stride[a]);
            p %= stride[a];
        }
    }

    [[nodiscard]] std::size_t flat(std::span<const int> idx) const noexcept {
        std::size_t p = 0;
        for (int a = 0; a < n; ++a) p += static_cast<std::size_t>(idx[a]) * stride[a];
        return p;
    }

    /// Folds an index that is at most one period out of range back onto the
    /// grid. Returns a bit mask of the axes whose coordinate direction is
    /// reversed at the folded node.
    std::uint32_t normalize(std::span<int> idx) const noexcept {
        std::uint32_t flips = 0;
        for (int a = 0; a < n; ++a) {
            const int N = shape[a];
            if (axis_kind[a] == AxisKind::periodic) {
                idx[a] = ((idx[a] % N) + N) % N;
                continue;
            }
            if (idx[a] >= 0 && idx[a] < N) continue;
            idx[a] = idx[a] < 0 ? -1 - idx[a] : 2 * N - 1 - idx[a];
            flips ^= 1u << a;
            for (int b = a + 1; b < n; ++b) {
                if (axis_kind[b] == AxisKind::pole_shifted) {
                    idx[b] = shape[b] - 1 - idx[b];
                    flips ^= 1u << b;
                } else {
                    idx[b] += shape[b] / 2;
                }
            }
        }
        return flips;
    }
};

/// Analytic scale factors H_a(x) of a chart, evaluated anywhere (including
/// outside the coordinate box).
using ScaleFactorFn = std::function<void(std::span<const double> x, std::span<double> h)>;

/// Per-axis coefficients of the discrete Laplace–Beltrami operator written
/// recursively as Δ = c2·D²_a + c1·D_a + q·Δ_sub, where Δ_sub acts on the
/// later axes only. Indexed by the node index along the axis.
struct AxisLevel {
    std::vector<double> c2;
    std::vector<double> c1;
    std::vector<double> q;
};

/// Frozen metric data of a chart on its grid.
class BackgroundGeometry {
public:
    struct Spec {
        ChartKind chart = ChartKind::synthetic;
        std::string name;
        Grid grid;
        std::vector<bool> metric_axis;  // axes the metric depends on
        ScaleFactorFn scale_factors;
        ScaleFactorFn scale_derivatives;  // out[a*n+b] = ∂_b H_a
        std::function<SymMatrix(std::span<const double> x)> schouten;
        std::function<double(std::span<const double> x)> scalar_curvature;
        std::vector<AxisLevel> levels;
        double analytic_volume = 0.0;
        double circle_radius = 1.0;
        int fd_order = 2;
    };

    explicit BackgroundGeometry(Spec spec) : spec_(std::move(spec)) {
        const Grid& g = spec_.grid;
        const int n = g.n;
        if (spec_.fd_order != 2 && spec_.fd_order != 4) {
            throw ConfigurationError("finite-difference order must be 2 or 4");
        }
        reach_ = spec_.fd_order / 2;

        // Metric slots collapse the axes the metric does not depend on.
        std::vector<std::size_t> slot_stride(n, 0);
        slot_count_ = 1;
        for (int a = n - 1; a >= 0; --a) {
            if (spec_.metric_axis[a]) {
                slot_stride[a] = slot_count_;
                slot_count_ *= static_cast<std::size_t>(g.shape[a]);
            }
        }
        slot_of_point_.resize(g.total_points);
        std::vector<int> idx(n);
        for (std::size_t p = 0; p < g.total_points; ++p) {
            g.unflatten(p, idx);
            std::size_t s = 0;
            for (int a = 0; a < n; ++a) s += static_cast<std::size_t>(idx[a]) * slot_stride[a];
            slot_of_point_[p] = static_cast<std::uint32_t>(s);
        }

        const int ps = SymMatrix::packed_size(n);
        scale_.assign(slot_count_ * n, 0.0);
        dscale_.assign(slot_count_ * n * n, 0.0);
        schouten_.assign(slot_count_ * ps, 0.0);
        vol_weight_.assign(slot_count_, 0.0);
        r0_.assign(slot_count_, 0.0);
        std::vector<bool> done(slot_count_, false);
        double cell = 1.0;
        for (int a = 0; a < n; ++a) cell *= g.spacing[a];

        std::vector<double> x(n), h(n);
        for (std::size_t p = 0; p < g.total_points; ++p) {
            const std::size_t s = slot_of_point_[p];
            if (done[s]) continue;
            done[s] = true;
            g.unflatten(p, idx);
            for (int a = 0; a < n; ++a) x[a] = g.coordinate(a, idx[a]);
            spec_.scale_factors(x, h);
            double vol = cell;
            for (int a = 0; a < n; ++a) {
                if (!(h[a] > 0.0)) throw NumericError("non-positive metric coefficient");
                scale_[s * n + a] = h[a];
                vol *= h[a];
            }
            vol_weight_[s] = vol;
            spec_.scale_derivatives(x, std::span<double>(&dscale_[s * n * n], n * n));
            const SymMatrix s0 = spec_.schouten(x);
            for (int t = 0; t < ps; ++t) schouten_[s * ps + t] = s0.packed()[t];
            r0_[s] = spec_.scalar_curvature(x);
        }
        build_neighbors();
    }

    [[nodiscard]] const Grid& grid() const noexcept { return spec_.grid; }
    [[nodiscard]] int dim() const noexcept { return spec_.grid.n; }
    [[nodiscard]] std::size_t size() const noexcept { return spec_.grid.total_points; }
    [[nodiscard]] ChartKind chart() const noexcept { return spec_.chart; }
    [[nodiscard]] const std::string& name() const noexcept { return spec_.name; }
    [[nodiscard]] bool synthetic() const noexcept { return spec_.chart == ChartKind::synthetic; }
    /// F_k monotonicity and other variational monitors are meaningless on
    /// the synthetic box (its Schouten tensor is not that of its metric).
    [[nodiscard]] bool variational_monitors() const noexcept { return !synthetic(); }
    [[nodiscard]] int fd_order() const noexcept { return spec_.fd_order; }
    [[nodiscard]] double analytic_volume() const noexcept { return spec_.analytic_volume; }
    [[nodiscard]] double circle_radius() const noexcept { return spec_.circle_radius; }
    [[nodiscard]] const ScaleFactorFn& scale_factor_fn() const noexcept { return spec_.scale_factors; }
    [[nodiscard]] const std::vector<AxisLevel>& levels() const noexcept { return spec_.levels; }

    [[nodiscard]] std::size_t slot(std::size_t p) const noexcept { return slot_of_point_[p]; }

    /// H_a at node p.
    [[nodiscard]] double scale(std::size_t p, int a) const noexcept {
        return scale_[slot_of_point_[p] * dim() + a];
    }
    /// ∂_b H_a at node p.
    [[nodiscard]] double dscale(std::size_t p, int a, int b) const noexcept {
        const int n = dim();
        return dscale_[(slot_of_point_[p] * n + a) * n + b];
    }
    [[nodiscard]] double g0_diag(std::size_t p, int a) const noexcept {
        const double h = scale(p, a);
        return h * h;
    }

    /// Γ^c_{ab} of the diagonal metric at node p.
    [[nodiscard]] double christoffel(std::size_t p, int c, int a, int b) const noexcept {
        if (a != b) {
            if (c == a) return dscale(p, a, b) / scale(p, a);
            if (c == b) return dscale(p, b, a) / scale(p, b);
            return 0.0;
        }
        if (c == a) return dscale(p, a, a) / scale(p, a);
        const double hc = scale(p, c);
        return -scale(p, a) * dscale(p, a, c) / (hc * hc);
    }

    [[nodiscard]] SymMatrix schouten0(std::size_t p) const {
        const int n = dim();
        const int ps = SymMatrix::packed_size(n);
        SymMatrix s(n);
        const double* src = &schouten_[slot_of_point_[p] * ps];
        for (int t = 0; t < ps; ++t) s.packed()[t] = src[t];
        return s;
    }

    [[nodiscard]] double vol_weight(std::size_t p) const noexcept {
        return vol_weight_[slot_of_point_[p]];
    }
    [[nodiscard]] double scalar_curvature(std::size_t p) const noexcept {
        return r0_[slot_of_point_[p]];
    }

    [[nodiscard]] int stencil_reach() const noexcept { return reach_; }

    /// Neighbor of p at signed offset (±1, or ±2 for 4th order) along axis a,
    /// with the direction-flip mask of the folded node.
    [[nodiscard]] std::pair<std::size_t, std::uint32_t> neighbor(std::size_t p, int a,
                                                                 int offset) const noexcept {
        const std::size_t e = entry(p, a, offset);
        return {nbr_index_[e], nbr_flips_[e]};
    }
    [[nodiscard]] std::size_t neighbor_index(std::size_t p, int a, int offset) const noexcept {
        return nbr_index_[entry(p, a, offset)];
    }

    /// Smallest physical edge length H_a·h_a over the grid.
    [[nodiscard]] double min_edge() const noexcept {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < size(); ++p) {
            for (int a = 0; a < dim(); ++a) m = std::min(m, scale(p, a) * grid().spacing[a]);
        }
        return m;
    }

private:
    [[nodiscard]] std::size_t entry(std::size_t p, int a, int offset) const noexcept {
        const int k = offset < 0 ? offset + reach_ : offset + reach_ - 1;
        return (p * dim() + a) * (2 * reach_) + k;
    }

    void build_neighbors() {
        const Grid& g = spec_.grid;
        const int n = g.n;
        const std::size_t per = static_cast<std::size_t>(n) * 2 * reach_;
        nbr_index_.resize(g.total_points * per);
        nbr_flips_.resize(g.total_points * per);
        std::vector<int> idx(n), moved(n);
        for (std::size_t p = 0; p < g.total_points; ++p) {
            g.unflatten(p, idx);
            for (int a = 0; a < n; ++a) {
                for (int off = -reach_; off <= reach_; ++off) {
                    if (off == 0) continue;
                    moved = idx;
                    moved[a] += off;
                    const std::uint32_t flips = g.normalize(moved);
                    const std::size_t e = entry(p, a, off);
                    nbr_index_[e] = static_cast<std::uint32_t>(g.flat(moved));
                    nbr_flips_[e] = static_cast<std::uint8_t>(flips);
                }
            }
        }
    }

    Spec spec_;
    int reach_ = 1;
    std::size_t slot_count_ = 0;
    std::vector<std::uint32_t> slot_of_point_;
    std::vector<double> scale_;
    std::vector<double> dscale_;
    std::vector<double> schouten_;
    std::vector<double> vol_weight_;
    std::vector<double> r0_;
    std::vector<std::uint32_t> nbr_index_;
    std::vector<std::uint8_t> nbr_flips_;
};

using GeometryHandle = std::shared_ptr<const BackgroundGeometry>;

// ---------------------------------------------------------------------------
// Fields

struct ScalarField {
    GeometryHandle geometry;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(GeometryHandle g, double fill = 0.0)
        : geometry(std::move(g)), values(geometry->size(), fill) {}
    ScalarField(GeometryHandle g, std::vector<double> v) : geometry(std::move(g)), values(std::move(v)) {
        if (values.size() != geometry->size()) throw DomainError("ScalarField: size mismatch");
    }

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] double operator[](std::size_t p) const noexcept { return values[p]; }
    [[nodiscard]] double& operator[](std::size_t p) noexcept { return values[p]; }
};

/// Covector/vector field in the orthonormal frame, n components per node.
struct VectorField {
    GeometryHandle geometry;
    std::vector<double> values;

    [[nodiscard]] double at(std::size_t p, int a) const noexcept {
        return values[p * geometry->dim() + a];
    }
};

/// Symmetric tensor field in the orthonormal frame, packed upper triangle per node.
struct SymMatrixField {
    GeometryHandle geometry;
    std::vector<double> packed;

    SymMatrixField() = default;
    explicit SymMatrixField(GeometryHandle g)
        : geometry(std::move(g)),
          packed(geometry->size() * SymMatrix::packed_size(geometry->dim()), 0.0) {}

    [[nodiscard]] SymMatrix at(std::size_t p) const {
        const int n = geometry->dim();
        const int ps = SymMatrix::packed_size(n);
        SymMatrix m(n);
        for (int t = 0; t < ps; ++t) m.packed()[t] = packed[p * ps + t];
        return m;
    }

    void set(std::size_t p, const SymMatrix& m) {
        const int ps = SymMatrix::packed_size(m.dim());
        for (int t = 0; t < ps; ++t) packed[p * ps + t] = m.packed()[t];
    }
};

template <class F>
[[nodiscard]] ScalarField make_field(const GeometryHandle& g, F&& f) {
    ScalarField out(g);
    const Grid& grid = g->grid();
    std::vector<int> idx(grid.n);
    std::vector<double> x(grid.n);
    for (std::size_t p = 0; p < grid.total_points; ++p) {
        grid.unflatten(p, idx);
        for (int a = 0; a < grid.n; ++a) x[a] = grid.coordinate(a, idx[a]);
        out[p] = f(std::span<const double>(x));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chart construction

namespace detail {

inline constexpr double pi = std::numbers::pi;

[[nodiscard]] inline double sphere_volume(int m) {
    // |S^m| = 2 π^{(m+1)/2} / Γ((m+1)/2)
    return 2.0 * std::pow(pi, 0.5 * (m + 1)) / std::tgamma(0.5 * (m + 1));
}

// Scale factors of the unit S^m in hyperspherical coordinates stored at
// x[first .. first+m-1]: H_0 = 1, H_j = Π_{i<j} sin x_i.
inline void sphere_scales(std::span<const double> x, std::span<double> h, int first, int m) {
    double prod = 1.0;
    for (int j = 0; j < m; ++j) {
        h[first + j] = prod;
        prod *= std::sin(x[first + j]);
    }
}

inline void sphere_scale_derivatives(std::span<const double> x, std::span<double> dh, int n,
                                     int first, int m) {
    std::array<double, symfun::max_dim> h{};
    sphere_scales(x, h, first, m);
    for (int j = 0; j < m; ++j) {
        const int a = first + j;
        for (int i = 0; i < j; ++i) {
            const int b = first + i;
            dh[a * n + b] = h[a] * std::cos(x[b]) / std::sin(x[b]);
        }
    }
}

// Laplacian levels of the unit S^m: polar axis j has c1 = (m−1−j) cot θ and
// q = 1/sin²θ; the azimuth is a plain second difference.
inline void sphere_levels(const Grid& g, int first, int m, double outer_scale,
                          std::vector<AxisLevel>& levels) {
    for (int j = 0; j < m; ++j) {
        const int a = first + j;
        const int N = g.shape[a];
        AxisLevel lv;
        lv.c2.assign(N, j == 0 ? outer_scale : 1.0);
        lv.c1.assign(N, 0.0);
        lv.q.assign(N, 1.0);
        if (g.axis_kind[a] == AxisKind::pole_shifted) {
            for (int i = 0; i < N; ++i) {
                const double th = g.coordinate(a, i);
                lv.c1[i] = (m - 1 - j) * std::cos(th) / std::sin(th);
                lv.q[i] = 1.0 / (std::sin(th) * std::sin(th));
                if (j == 0) {
                    lv.c1[i] *= outer_scale;
                    lv.q[i] *= outer_scale;
                }
            }
        }
        levels.push_back(std::move(lv));
    }
}

inline void check_resolution(int points_per_axis) {
    if (points_per_axis < 16) {
        throw ConfigurationError("points_per_axis must be at least 16 (got " +
                                 std::to_string(points_per_axis) + ")");
    }
    if (points_per_axis % 2 != 0) {
        throw ConfigurationError("points_per_axis must be even (pole flips shift the azimuth by π)");
    }
}

}  // namespace detail

/// Unit round Sⁿ, n ∈ {3,4,5}: n−1 pole-shifted polar angles and one periodic
/// azimuth. Schouten tensor ½·I, scalar curvature n(n−1).
[[nodiscard]] inline GeometryHandle build_round_sphere(int n, int points_per_axis, int fd_order = 2) {
    if (n < 3 || n > 5) throw ConfigurationError("round sphere: n must be 3, 4 or 5");
    detail::check_resolution(points_per_axis);
    std::vector<AxisKind> kinds(n, AxisKind::pole_shifted);
    kinds[n - 1] = AxisKind::periodic;
    BackgroundGeometry::Spec spec;
    spec.chart = ChartKind::round_sphere;
    spec.name = "round_sphere";
    spec.grid = Grid(std::vector<int>(n, points_per_axis), kinds);
    spec.metric_axis.assign(n, true);
    spec.metric_axis[n - 1] = false;
    spec.scale_factors = [n](std::span<const double> x, std::span<double> h) {
        detail::sphere_scales(x, h, 0, n);
    };
    spec.scale_derivatives = [n](std::span<const double> x, std::span<double> dh) {
        std::fill(dh.begin(), dh.end(), 0.0);
        detail::sphere_scale_derivatives(x, dh, n, 0, n);
    };
    spec.schouten = [n](std::span<const double>) { return SymMatrix::identity(n, 0.5); };
    spec.scalar_curvature = [n](std::span<const double>) { return double(n * (n - 1)); };
    detail::sphere_levels(spec.grid, 0, n, 1.0, spec.levels);
    spec.analytic_volume = detail::sphere_volume(n);
    spec.fd_order = fd_order;
    return std::make_shared<const BackgroundGeometry>(std::move(spec));
}

/// S¹(r) × S^{n−1}(1): axis 0 is the circle, the rest hyperspherical.
/// Schouten eigenvalues (−½, ½, …, ½).
[[nodiscard]] inline GeometryHandle build_hopf_product(int n, double circle_radius,
                                                       int points_per_axis, int fd_order = 2) {
    if (n < 3 || n > 5) throw ConfigurationError("hopf product: n must be 3, 4 or 5");
    if (!(circle_radius > 0.0)) throw ConfigurationError("hopf product: circle_radius must be > 0");
    detail::check_resolution(points_per_axis);
    std::vector<AxisKind> kinds(n, AxisKind::pole_shifted);
    kinds[0] = AxisKind::periodic;
    kinds[n - 1] = AxisKind::periodic;
    BackgroundGeometry::Spec spec;
    spec.chart = ChartKind::hopf_product;
    spec.name = "hopf_product";
    spec.grid = Grid(std::vector<int>(n, points_per_axis), kinds);
    spec.metric_axis.assign(n, false);
    for (int a = 1; a < n - 1; ++a) spec.metric_axis[a] = true;
    spec.scale_factors = [n, circle_radius](std::span<const double> x, std::span<double> h) {
        h[0] = circle_radius;
        detail::sphere_scales(x, h, 1, n - 1);
    };
    spec.scale_derivatives = [n](std::span<const double> x, std::span<double> dh) {
        std::fill(dh.begin(), dh.end(), 0.0);
        detail::sphere_scale_derivatives(x, dh, n, 1, n - 1);
    };
    spec.schouten = [n](std::span<const double>) {
        SymMatrix s = SymMatrix::identity(n, 0.5);
        s(0, 0) = -0.5;
        return s;
    };
    spec.scalar_curvature = [n](std::span<const double>) { return double((n - 1) * (n - 2)); };
    AxisLevel circle;
    circle.c2.assign(points_per_axis, 1.0 / (circle_radius * circle_radius));
    circle.c1.assign(points_per_axis, 0.0);
    circle.q.assign(points_per_axis, 1.0);
    spec.levels.push_back(std::move(circle));
    detail::sphere_levels(spec.grid, 1, n - 1, 1.0, spec.levels);
    spec.analytic_volume = 2.0 * std::numbers::pi * circle_radius * detail::sphere_volume(n - 1);
    spec.circle_radius = circle_radius;
    spec.fd_order = fd_order;
    return std::make_shared<const BackgroundGeometry>(std::move(spec));
}

/// Flat periodic box [0, 2π)ⁿ with g₀ = I, Γ ≡ 0 and the Schouten tensor
/// overridden by a constant frame matrix. A verification harness only.
[[nodiscard]] inline GeometryHandle build_synthetic(int n, const SymMatrix& schouten_frame,
                                                    int points_per_axis, int fd_order = 2) {
    if (n < 3 || n > symfun::max_dim) throw ConfigurationError("synthetic: n must be in [3, 8]");
    if (schouten_frame.dim() != n) throw ConfigurationError("synthetic: Schouten dimension mismatch");
    if (points_per_axis < 4) throw ConfigurationError("synthetic: points_per_axis must be >= 4");
    BackgroundGeometry::Spec spec;
    spec.chart = ChartKind::synthetic;
    spec.name = "synthetic";
    spec.grid = Grid(std::vector<int>(n, points_per_axis), std::vector<AxisKind>(n, AxisKind::periodic));
    spec.metric_axis.assign(n, false);
    spec.scale_factors = [](std::span<const double>, std::span<double> h) {
        for (double& v : h) v = 1.0;
    };
    spec.scale_derivatives = [](std::span<const double>, std::span<double> dh) {
        std::fill(dh.begin(), dh.end(), 0.0);
    };
    spec.schouten = [schouten_frame](std::span<const double>) { return schouten_frame; };
    const double r0 = 2.0 * (n - 1) * schouten_frame.trace();
    spec.scalar_curvature = [r0](std::span<const double>) { return r0; };
    for (int a = 0; a < n; ++a) {
        AxisLevel lv;
        lv.c2.assign(points_per_axis, 1.0);
        lv.c1.assign(points_per_axis, 0.0);
        lv.q.assign(points_per_axis, 1.0);
        spec.levels.push_back(std::move(lv));
    }
    spec.analytic_volume = std::pow(2.0 * std::numbers::pi, n);
    spec.fd_order = fd_order;
    return std::make_shared<const BackgroundGeometry>(std::move(spec));
}

// ---------------------------------------------------------------------------
// Differential operators

/// Coordinate derivatives ∂_a u, n per node, centered.
[[nodiscard]] inline std::vector<double> coordinate_gradient(const BackgroundGeometry& g,
                                                             std::span<const double> u) {
    const int n = g.dim();
    const auto& h = g.grid().spacing;
    std::vector<double> du(g.size() * n);
    const bool fourth = g.fd_order() == 4;
    parallel_for(g.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            for (int a = 0; a < n; ++a) {
                const double up = u[g.neighbor_index(p, a, 1)];
                const double um = u[g.neighbor_index(p, a, -1)];
                if (fourth) {
                    const double up2 = u[g.neighbor_index(p, a, 2)];
                    const double um2 = u[g.neighbor_index(p, a, -2)];
                    du[p * n + a] = (-up2 + 8.0 * up - 8.0 * um + um2) / (12.0 * h[a]);
                } else {
                    du[p * n + a] = (up - um) / (2.0 * h[a]);
                }
            }
        }
    });
    return du;
}

/// Frame gradient and covariant Hessian of u at every node.
struct Derivatives {
    std::vector<double> gradient;  // frame components, n per node
    std::vector<double> hessian;   // frame, packed upper triangle per node
};

namespace detail {

// Frame gradient and Hessian at node p given coordinate derivatives du.
inline void point_derivatives(const BackgroundGeometry& g, std::span<const double> u,
                              std::span<const double> du, std::size_t p, double* grad_out,
                              double* hess_out) {
    const int n = g.dim();
    const auto& h = g.grid().spacing;
    const bool fourth = g.fd_order() == 4;
    std::array<double, symfun::max_dim * symfun::max_dim> d2{};

    auto flip_sign = [](std::uint32_t flips, int a) { return (flips >> a) & 1u ? -1.0 : 1.0; };

    for (int a = 0; a < n; ++a) {
        const double up = u[g.neighbor_index(p, a, 1)];
        const double um = u[g.neighbor_index(p, a, -1)];
        if (fourth) {
            const double up2 = u[g.neighbor_index(p, a, 2)];
            const double um2 = u[g.neighbor_index(p, a, -2)];
            d2[a * n + a] = (-up2 + 16.0 * up - 30.0 * u[p] + 16.0 * um - um2) / (12.0 * h[a] * h[a]);
        } else {
            d2[a * n + a] = (up - 2.0 * u[p] + um) / (h[a] * h[a]);
        }
    }
    // Mixed derivatives as ∂_b of the centered ∂_a, carrying the direction
    // flip of axis a at folded neighbors.
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            const auto [qp, fp] = g.neighbor(p, b, 1);
            const auto [qm, fm] = g.neighbor(p, b, -1);
            const double vp = flip_sign(fp, a) * du[qp * n + a];
            const double vm = flip_sign(fm, a) * du[qm * n + a];
            double v;
            if (fourth) {
                const auto [qp2, fp2] = g.neighbor(p, b, 2);
                const auto [qm2, fm2] = g.neighbor(p, b, -2);
                const double vp2 = flip_sign(fp2, a) * du[qp2 * n + a];
                const double vm2 = flip_sign(fm2, a) * du[qm2 * n + a];
                v = (-vp2 + 8.0 * vp - 8.0 * vm + vm2) / (12.0 * h[b]);
            } else {
                v = (vp - vm) / (2.0 * h[b]);
            }
            d2[a * n + b] = v;
        }
    }

    std::array<double, symfun::max_dim> hs{};
    for (int a = 0; a < n; ++a) {
        hs[a] = g.scale(p, a);
        grad_out[a] = du[p * n + a] / hs[a];
    }
    int t = 0;
    for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
            double cov;
            if (a == b) {
                cov = d2[a * n + a];
                for (int c = 0; c < n; ++c) cov -= g.christoffel(p, c, a, a) * du[p * n + c];
            } else {
                cov = 0.5 * (d2[a * n + b] + d2[b * n + a]);
                cov -= g.christoffel(p, a, a, b) * du[p * n + a];
                cov -= g.christoffel(p, b, a, b) * du[p * n + b];
            }
            hess_out[t++] = cov / (hs[a] * hs[b]);
        }
    }
}

}  // namespace detail

[[nodiscard]] inline Derivatives derivatives(const BackgroundGeometry& g, std::span<const double> u) {
    const int n = g.dim();
    const int ps = SymMatrix::packed_size(n);
    const std::vector<double> du = coordinate_gradient(g, u);
    Derivatives out;
    out.gradient.resize(g.size() * n);
    out.hessian.resize(g.size() * ps);
    parallel_for(g.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            detail::point_derivatives(g, u, du, p, &out.gradient[p * n], &out.hessian[p * ps]);
        }
    });
    return out;
}

/// (∇²u)_{ab} = ∂_a∂_b u − Γ^c_{ab} ∂_c u, in the orthonormal frame.
[[nodiscard]] inline SymMatrixField covariant_hessian(const ScalarField& u) {
    SymMatrixField out;
    out.geometry = u.geometry;
    out.packed = derivatives(*u.geometry, u.values).hessian;
    return out;
}

struct GradientAndNorm {
    VectorField gradient;
    ScalarField norm2;
};

[[nodiscard]] inline GradientAndNorm gradient_and_norm(const ScalarField& u) {
    const BackgroundGeometry& g = *u.geometry;
    const int n = g.dim();
    const std::vector<double> du = coordinate_gradient(g, u.values);
    GradientAndNorm out{{u.geometry, std::vector<double>(g.size() * n)}, ScalarField(u.geometry)};
    for (std::size_t p = 0; p < g.size(); ++p) {
        double s = 0.0;
        for (int a = 0; a < n; ++a) {
            const double v = du[p * n + a] / g.scale(p, a);
            out.gradient.values[p * n + a] = v;
            s += v * v;
        }
        out.norm2[p] = s;
    }
    return out;
}

/// Laplace–Beltrami Δu = tr_{g₀} ∇²u with the same stencils as the Hessian.
[[nodiscard]] inline std::vector<double> laplacian(const BackgroundGeometry& g,
                                                   std::span<const double> u) {
    const int n = g.dim();
    const int ps = SymMatrix::packed_size(n);
    const Derivatives d = derivatives(g, u);
    std::vector<double> out(g.size(), 0.0);
    for (std::size_t p = 0; p < g.size(); ++p) {
        int t = 0;
        for (int a = 0; a < n; ++a) {
            out[p] += d.hessian[p * ps + t];
            t += n - a;
        }
    }
    return out;
}

/// Σ f · vol_weight · (weight or 1): midpoint quadrature of ∫ f dvol₀.
[[nodiscard]] inline double integrate(const BackgroundGeometry& g, std::span<const double> f,
                                      std::span<const double> weight = {}) {
    // Neumaier-compensated serial sum keeps reductions deterministic.
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        double term = f[p] * g.vol_weight(p);
        if (!weight.empty()) term *= weight[p];
        const double t = sum + term;
        comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
        sum = t;
    }
    return sum + comp;
}

[[nodiscard]] inline double integrate(const ScalarField& f) {
    return integrate(*f.geometry, f.values);
}

[[nodiscard]] inline double integrate(const ScalarField& f, const ScalarField& weight) {
    return integrate(*f.geometry, f.values, weight.values);
}

}  // namespace sigmaflow::geometry
