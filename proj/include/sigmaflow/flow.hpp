#pragma once

// Time integration of the normalized σ_k flow in scalar form
//   u_t = ½ (log σ_k(W(u)) − log σ_l(W(u)) + 2(k−l) u − log r),
// where r is the geometric mean of σ_k(g)/σ_l(g) under dvol(g). l = 0 gives
// the plain σ_k flow. The speed has zero mean under dvol(g), so the
// semi-discrete system conserves the discrete volume exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sigmaflow/conformal.hpp"
#include "sigmaflow/error.hpp"
#include "sigmaflow/field_io.hpp"
#include "sigmaflow/geometry.hpp"
#include "sigmaflow/krylov.hpp"
#include "sigmaflow/parallel.hpp"
#include "sigmaflow/spectral.hpp"
#include "sigmaflow/symfun.hpp"

namespace sigmaflow::flow {

using conformal::ConformalState;
using geometry::BackgroundGeometry;
using geometry::GeometryHandle;
using geometry::ScalarField;
using geometry::SymMatrixField;
using symfun::SymMatrix;

enum class Integrator {
    implicit_euler,  // linearly implicit, one Krylov solve per step
    euler,
    midpoint,
};

[[nodiscard]] inline std::string_view to_string(Integrator i) noexcept {
    switch (i) {
        case Integrator::implicit_euler: return "implicit";
        case Integrator::euler: return "euler";
        case Integrator::midpoint: return "midpoint";
    }
    return "?";
}

[[nodiscard]] inline Integrator parse_integrator(std::string_view s) {
    if (s == "implicit") return Integrator::implicit_euler;
    if (s == "euler") return Integrator::euler;
    if (s == "midpoint") return Integrator::midpoint;
    throw ConfigurationError("unknown integrator '" + std::string(s) + "' (implicit, euler, midpoint)");
}

struct FlowConfig {
    int k = 1;
    int quotient_l = 0;
    double t_end = 1.0;
    double dt_initial = 1e-2;
    double cfl_safety = 0.9;  // explicit integrators only
    int monitor_every = 1;
    double convergence_tol = 1e-5;  // on ‖σ − r‖/‖σ‖ in L²(g)
    bool stop_on_convergence = true;
    Integrator integrator = Integrator::implicit_euler;
    int max_rejections = 30;
    krylov::Options krylov{1e-10, 0.0, 400, 60};

    void validate(int n) const {
        if (k < 1 || k > n) throw ConfigurationError("k must be in [1, " + std::to_string(n) + "]");
        if (quotient_l < 0 || quotient_l >= k) throw ConfigurationError("quotient_l must satisfy 0 <= l < k");
        if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ConfigurationError("t_end must be >= 0");
        if (!(dt_initial > 0.0) || !std::isfinite(dt_initial)) throw ConfigurationError("dt must be > 0");
        if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) throw ConfigurationError("cfl_safety must be in (0, 1]");
        if (monitor_every < 1) throw ConfigurationError("monitor_every must be >= 1");
        if (!(convergence_tol > 0.0)) throw ConfigurationError("convergence_tol must be > 0");
        if (max_rejections < 1) throw ConfigurationError("max_rejections must be >= 1");
    }
};

struct FlowState {
    ConformalState state;
    double time = 0.0;
    std::size_t step_count = 0;
    double last_dt = 0.0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    int last_krylov_iterations = 0;
};

struct MonitorRecord {
    double time = 0.0;
    double volume = 0.0;
    double F_k = 0.0;
    double r_k = 0.0;
    double l2_sigma_minus_r = 0.0;
    double min_sigma = 0.0;
    double max_abs_W = 0.0;
    double harnack = 0.0;
    double max_abs_u = 0.0;
    double relative_l2 = 0.0;  // l2_sigma_minus_r / ‖σ‖; not part of the CSV
};

/// Pointwise flow speed.
[[nodiscard]] inline ScalarField speed(const ConformalState& s) {
    const auto& lw = s.log_curvature_W();
    const double lr = s.log_r();
    const double m = s.k() - s.l();
    ScalarField out(s.geometry());
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = 0.5 * (lw[p] + 2.0 * m * s.u()[p] - lr);
    return out;
}

/// Directional derivative of speed() at s in direction rho.
inline void speed_derivative(const ConformalState& s, std::span<const double> rho, std::span<double> out) {
    const BackgroundGeometry& g = s.geom();
    const int n = g.dim();
    const double m = s.k() - s.l();
    conformal::contract_W_variation(s, s.log_curvature_gradient(), rho, out);
    const auto& lw = s.log_curvature_W();
    const auto& u = s.u().values;
    const double lr = s.log_r();
    std::vector<double> f(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
        out[p] += 2.0 * m * rho[p];
        f[p] = out[p] - n * (lw[p] + 2.0 * m * u[p] - lr) * rho[p];
    }
    const double dlr = geometry::integrate(g, f, s.density()) / s.volume();
    for (std::size_t p = 0; p < g.size(); ++p) out[p] = 0.5 * (out[p] - dlr);
}

/// Explicit stability bound from the principal part ½⟨G, ∇²·⟩ of the speed,
/// G = ∂ log(σ_k/σ_l)/∂W: dt = safety / max_x λ_max(G) Σ_a 1/(H_a h_a)².
[[nodiscard]] inline double cfl_dt(const ConformalState& s, double safety) {
    const BackgroundGeometry& g = s.geom();
    const int n = g.dim();
    const auto& G = s.log_curvature_gradient();
    const auto& h = g.grid().spacing;
    double worst = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        const auto ev = symfun::eigenvalues(G.at(p));
        double lmax = 0.0;
        for (int i = 0; i < n; ++i) lmax = std::max(lmax, ev[i]);
        double inv = 0.0;
        for (int a = 0; a < n; ++a) {
            const double e = g.scale(p, a) * h[a];
            inv += 1.0 / (e * e);
        }
        worst = std::max(worst, lmax * inv);
    }
    if (!(worst > 0.0) || !std::isfinite(worst)) throw NumericError("cfl_dt: degenerate diffusion coefficient");
    return safety / worst;
}

/// −((n−2k)/2) vol^a ∫(σ − r)(log σ − log r) dvol(g) for a volume exponent a.
/// With a = −(n−2k)/n this is the exact rate of F_k along the flow when the
/// volume is constant.
[[nodiscard]] inline double dissipation_rate(const ConformalState& s, double volume_exponent) {
    const int n = s.dim();
    return -0.5 * (n - 2 * s.k()) * std::pow(s.volume(), volume_exponent) * conformal::dissipation_integral(s);
}

[[nodiscard]] inline double functional_volume_exponent(int n, int k) noexcept {
    return -double(n - 2 * k) / n;
}

[[nodiscard]] inline MonitorRecord monitor(const ConformalState& s, double time) {
    MonitorRecord r;
    r.time = time;
    r.volume = s.volume();
    r.F_k = conformal::F_k_functional(s);
    r.r_k = conformal::r_k(s);
    const auto l2 = conformal::l2_sigma_minus_r(s);
    r.l2_sigma_minus_r = l2.deviation;
    r.relative_l2 = l2.norm > 0.0 ? l2.deviation / l2.norm : l2.deviation;
    const auto& c = s.curvature().values;
    r.min_sigma = *std::min_element(c.begin(), c.end());
    r.max_abs_W = conformal::max_abs_W(s);
    r.harnack = conformal::harnack_quantity(s);
    double mu = 0.0;
    for (double v : s.u().values) mu = std::max(mu, std::abs(v));
    r.max_abs_u = mu;
    return r;
}

inline constexpr std::string_view monitor_header =
    "time,volume,F_k,r_k,l2_sigma_minus_r,min_sigma,max_abs_W,harnack,max_abs_u";

inline void write_monitors(std::ostream& os, std::span<const MonitorRecord> records) {
    os << monitor_header << '\n';
    for (const auto& r : records) {
        const double v[] = {r.time, r.volume, r.F_k, r.r_k, r.l2_sigma_minus_r,
                            r.min_sigma, r.max_abs_W, r.harnack, r.max_abs_u};
        for (std::size_t i = 0; i < std::size(v); ++i) {
            if (i) os << ',';
            os << io::format_double(v[i]);
        }
        os << '\n';
    }
}

inline void write_monitors(const std::filesystem::path& path, std::span<const MonitorRecord> records) {
    io::detail::write_atomically(path, [&](std::ostream& os) { write_monitors(os, records); });
}

/// Largest c with min_sigma(t) ≥ c·exp(−eᵗ/c) along the series.
struct PositivityReport {
    bool positive = true;
    std::optional<std::size_t> first_violation;
    double c = 0.0;
};

[[nodiscard]] inline PositivityReport positivity_monitor(std::span<const MonitorRecord> records) {
    PositivityReport rep;
    rep.c = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const double m = records[i].min_sigma;
        if (!(m > 0.0)) {
            rep.positive = false;
            if (!rep.first_violation) rep.first_violation = i;
            continue;
        }
        // c·exp(−E/c) is increasing in c; bisect on log c for equality with m.
        const double E = std::exp(records[i].time);
        auto f = [&](double lc) { return lc - E * std::exp(-lc) - std::log(m); };
        double lo = std::log(m), hi = std::log(m) + 1.0;
        while (f(hi) < 0.0) hi += 2.0 * (hi - lo);
        for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (f(mid) < 0.0 ? lo : hi) = mid;
        }
        rep.c = std::min(rep.c, std::exp(lo));
    }
    if (!rep.positive || records.empty()) rep.c = 0.0;
    return rep;
}

/// Rejects W(u) that is outside Γ_k⁺ or within round-off of its boundary
/// (σ_j of W − ε·max|W|·I must still be positive).
inline void require_strict_cone(const ConformalState& s) {
    s.require_cone();
    const BackgroundGeometry& g = s.geom();
    const int n = g.dim();
    const auto& w = s.W();
    for (std::size_t p = 0; p < g.size(); ++p) {
        SymMatrix a = w.at(p);
        double scale = 0.0;
        for (double v : a.packed()) scale = std::max(scale, std::abs(v));
        const double eps = 1e-12 * std::max(scale, 1e-300);
        for (int i = 0; i < n; ++i) a(i, i) -= eps;
        const ConeLabel label = symfun::cone_test(symfun::eigenvalues(a), s.k());
        if (!label.inside) {
            throw ConeViolation("W(u) lies on the boundary of the cone at node " + std::to_string(p) + ": " +
                                    symfun::describe(label) + " within round-off",
                                label, p);
        }
    }
}

/// Owns the per-geometry solver data (the preconditioner) and advances states.
class Stepper {
public:
    Stepper(GeometryHandle g, FlowConfig cfg) : geometry_(std::move(g)), cfg_(std::move(cfg)) {
        cfg_.validate(geometry_->dim());
        if (cfg_.integrator == Integrator::implicit_euler) {
            spectral_ = spectral::SeparableLaplacian::build(*geometry_);
        }
    }

    [[nodiscard]] const FlowConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] bool spectral_preconditioner() const noexcept { return spectral_.has_value(); }

    /// One attempt at a step of size dt. Throws on cone exit, non-finite data
    /// or a failed linear solve; the input is not modified.
    [[nodiscard]] ConformalState advance(const ConformalState& s, double dt, int* krylov_iterations = nullptr) const {
        const std::size_t N = s.u().size();
        std::vector<double> next = s.u().values;
        const ScalarField v = speed(s);
        switch (cfg_.integrator) {
            case Integrator::euler:
                for (std::size_t p = 0; p < N; ++p) next[p] += dt * v[p];
                break;
            case Integrator::midpoint: {
                std::vector<double> half = s.u().values;
                for (std::size_t p = 0; p < N; ++p) half[p] += 0.5 * dt * v[p];
                ConformalState mid(ScalarField(s.geometry(), std::move(half)), s.k(), s.l());
                const ScalarField vm = speed(mid);
                for (std::size_t p = 0; p < N; ++p) next[p] += dt * vm[p];
                break;
            }
            case Integrator::implicit_euler: {
                const int its = implicit_increment(s, v, dt, next);
                if (krylov_iterations) *krylov_iterations = its;
                break;
            }
        }
        for (double x : next) {
            if (!std::isfinite(x)) throw NumericError("non-finite conformal factor after step");
        }
        ConformalState out(ScalarField(s.geometry(), std::move(next)), s.k(), s.l());
        out.require_cone();
        (void)out.log_r();  // positivity of σ and r
        return out;
    }

    /// Advances fs by dt, halving on rejection. Throws NonConvergence after
    /// max_rejections consecutive rejections; fs then still holds the last
    /// valid state.
    void step(FlowState& fs, double dt) const {
        std::string cause;
        for (int attempt = 0; attempt < cfg_.max_rejections; ++attempt) {
            double h = dt;
            if (cfg_.integrator != Integrator::implicit_euler) h = std::min(h, cfl_dt(fs.state, cfg_.cfl_safety));
            try {
                int its = 0;
                ConformalState next = advance(fs.state, h, &its);
                fs.state = std::move(next);
                fs.time += h;
                fs.last_dt = h;
                fs.last_krylov_iterations = its;
                ++fs.step_count;
                ++fs.accepted;
                return;
            } catch (const Error& e) {
                cause = e.what();
                ++fs.rejected;
                dt = 0.5 * h;
            }
        }
        throw NonConvergence("time step rejected " + std::to_string(cfg_.max_rejections) +
                             " times in a row at t=" + io::format_double(fs.time) + "; last cause: " + cause);
    }

private:
    // Solves (I − dt J) Δ = dt·v and adds Δ to next. Returns Krylov iterations.
    int implicit_increment(const ConformalState& s, const ScalarField& v, double dt, std::vector<double>& next) const {
        const BackgroundGeometry& g = s.geom();
        const std::size_t N = g.size();
        const int n = g.dim();
        const int ps = SymMatrix::packed_size(n);
        const auto& G = s.log_curvature_gradient();
        std::vector<double> b(N), x(N, 0.0), tmp(N);
        for (std::size_t p = 0; p < N; ++p) {
            b[p] = dt * v[p];
            x[p] = b[p];
        }
        const auto apply = [&](std::span<const double> in, std::span<double> out) {
            speed_derivative(s, in, out);
            for (std::size_t p = 0; p < N; ++p) out[p] = in[p] - dt * out[p];
        };
        krylov::Result res;
        if (spectral_) {
            double mean_trace = 0.0;
            for (std::size_t p = 0; p < N; ++p) {
                int t = 0;
                for (int a = 0; a < n; ++a) {
                    mean_trace += G.packed[p * ps + t];
                    t += n - a;
                }
            }
            const double c = 0.5 * mean_trace / (double(N) * n);
            const auto prec = [&](std::span<const double> in, std::span<double> out) {
                spectral_->solve(1.0, -dt * c, in, out);
            };
            res = krylov::gmres(apply, prec, b, x, cfg_.krylov);
        } else {
            std::vector<double> diag(N);
            const auto& h = g.grid().spacing;
            for (std::size_t p = 0; p < N; ++p) {
                double d = 1.0;
                int t = 0;
                for (int a = 0; a < n; ++a) {
                    const double e = g.scale(p, a) * h[a];
                    d += dt * G.packed[p * ps + t] / (e * e);
                    t += n - a;
                }
                diag[p] = d;
            }
            const auto prec = [&](std::span<const double> in, std::span<double> out) {
                for (std::size_t p = 0; p < N; ++p) out[p] = in[p] / diag[p];
            };
            res = krylov::gmres(apply, prec, b, x, cfg_.krylov);
        }
        const double bnorm = krylov::norm2(b);
        if (!res.converged && !(res.final_residual <= 1e-6 * bnorm)) {
            throw NonConvergence("implicit step: Krylov solve stalled at relative residual " +
                                 io::format_double(bnorm > 0 ? res.final_residual / bnorm : res.final_residual));
        }
        for (std::size_t p = 0; p < N; ++p) next[p] += x[p];
        return res.iterations;
    }

    GeometryHandle geometry_;
    FlowConfig cfg_;
    std::optional<spectral::SeparableLaplacian> spectral_;
};

struct RunResult {
    FlowState final_state;
    std::vector<MonitorRecord> records;
    bool converged = false;
    std::optional<double> convergence_time;
    /// Final r_k; withheld when 2(k−l) = n, where no limit is claimed.
    std::optional<double> beta;
    bool spectral_preconditioner = false;
};

/// Called after every accepted step with the new state.
using StepObserver = std::function<void(const FlowState&)>;

/// Integrates from u0 to t_end or until the relative L² deviation of σ from
/// r drops below the tolerance.
[[nodiscard]] inline RunResult run(const ScalarField& u0, const FlowConfig& cfg, const StepObserver& observer = {}) {
    const GeometryHandle& g = u0.geometry;
    cfg.validate(g->dim());
    ConformalState initial(u0, cfg.k, cfg.quotient_l);
    require_strict_cone(initial);
    (void)initial.log_r();

    const Stepper stepper(g, cfg);
    RunResult result{FlowState{std::move(initial)}, {}, false, std::nullopt, std::nullopt,
                     stepper.spectral_preconditioner()};
    FlowState& fs = result.final_state;
    const int m = cfg.k - cfg.quotient_l;
    const bool borderline = 2 * m == g->dim();

    MonitorRecord rec = monitor(fs.state, fs.time);
    result.records.push_back(rec);
    auto converged_now = [&](const MonitorRecord& r) { return r.relative_l2 < cfg.convergence_tol; };
    if (converged_now(rec)) {
        result.converged = true;
        result.convergence_time = fs.time;
    }

    const double t_eps = 1e-12 * std::max(1.0, cfg.t_end);
    double dt_next = cfg.dt_initial;
    while (!(result.converged && cfg.stop_on_convergence) && fs.time < cfg.t_end - t_eps) {
        const double dt = std::min(dt_next, cfg.t_end - fs.time);
        stepper.step(fs, dt);
        if (fs.last_dt < dt) {
            dt_next = std::min(cfg.dt_initial, 2.0 * fs.last_dt);
        } else {
            dt_next = cfg.dt_initial;
        }
        if (observer) observer(fs);
        rec = monitor(fs.state, fs.time);
        const bool done = converged_now(rec);
        const bool last = done || fs.time >= cfg.t_end - t_eps;
        if (fs.step_count % static_cast<std::size_t>(cfg.monitor_every) == 0 || (last && cfg.stop_on_convergence) ||
            fs.time >= cfg.t_end - t_eps) {
            result.records.push_back(rec);
        }
        if (done && !result.converged) {
            result.converged = true;
            result.convergence_time = fs.time;
        }
    }
    if (!borderline) result.beta = conformal::r_k(fs.state);
    return result;
}

}  // namespace sigmaflow::flow
