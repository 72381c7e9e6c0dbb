#pragma once

// The nonlinear eigenvalue problem σ_k^{1/k}(W(φ)) = λ, reached through the
// auxiliary equations σ_k^{1/k}(W(u)) = h·e^u + rhs by continuation in the
// right-hand side and bisection in λ.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
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

namespace sigmaflow::eigen {

using conformal::ConformalState;
using geometry::BackgroundGeometry;
using geometry::GeometryHandle;
using geometry::ScalarField;
using geometry::SymMatrixField;
using symfun::SymMatrix;

/// Continuation could not reach t = 1 (λ presumed at or above λ*).
class ContinuationFailure : public NonConvergence {
public:
    explicit ContinuationFailure(const std::string& what) : NonConvergence(what) {}
};

/// σ_k^{1/k}(W(u)) = h e^u + f with f > 0 and h ≥ 0.
struct AuxiliaryProblem {
    GeometryHandle geometry;
    int k = 1;
    ScalarField f;
    ScalarField h;
    double bound = 1.0;  // 1/bound ≤ f ≤ bound

    AuxiliaryProblem(ScalarField f_, ScalarField h_, int k_)
        : geometry(f_.geometry), k(k_), f(std::move(f_)), h(std::move(h_)) {
        if (h.geometry != geometry) throw DomainError("AuxiliaryProblem: geometry mismatch");
        if (k < 1 || k > geometry->dim()) throw DomainError("AuxiliaryProblem: k out of range");
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (std::size_t p = 0; p < f.size(); ++p) {
            if (!(f[p] > 0.0) || !std::isfinite(f[p])) throw DomainError("AuxiliaryProblem: f must be positive");
            if (!(h[p] >= 0.0) || !std::isfinite(h[p])) throw DomainError("AuxiliaryProblem: h must be non-negative");
            lo = std::min(lo, f[p]);
            hi = std::max(hi, f[p]);
        }
        bound = std::max(hi, 1.0 / lo);
    }
};

/// σ_k^{1/k}(W) and its W-gradient (1/k)σ_k^{1/k−1} T_{k−1}(W) at every node.
struct RootData {
    std::vector<double> value;
    SymMatrixField gradient;
};

[[nodiscard]] inline RootData root_data(const ConformalState& s) {
    s.require_cone();
    const BackgroundGeometry& g = s.geom();
    const int n = g.dim();
    const int k = s.k();
    RootData out{std::vector<double>(g.size()), SymMatrixField(s.geometry())};
    parallel_for(g.size(), [&](std::size_t lo, std::size_t hi) {
        std::array<double, symfun::max_dim + 1> e{};
        for (std::size_t p = lo; p < hi; ++p) {
            const double* sg = s.sigmas(p);
            for (int j = 0; j <= n; ++j) e[j] = sg[j];
            const double root = std::pow(e[k], 1.0 / k);
            out.value[p] = root;
            const SymMatrix t = symfun::detail::newton_from_sigmas(s.W().at(p), k - 1, e);
            out.gradient.set(p, (root / (k * e[k])) * t);
        }
    });
    return out;
}

/// σ_k^{1/k}(W(u)) − h e^u − rhs; h = 1 when empty.
[[nodiscard]] inline ScalarField residual(const ConformalState& s, std::span<const double> rhs,
                                          std::span<const double> h = {}) {
    const RootData rd = root_data(s);
    ScalarField out(s.geometry());
    for (std::size_t p = 0; p < out.size(); ++p) {
        const double hp = h.empty() ? 1.0 : h[p];
        out[p] = rd.value[p] - hp * std::exp(s.u()[p]) - rhs[p];
    }
    return out;
}

/// Fréchet derivative of residual() at s applied to rho.
inline void linearize_apply(const ConformalState& s, const RootData& rd, std::span<const double> h,
                            std::span<const double> rho, std::span<double> out) {
    conformal::contract_W_variation(s, rd.gradient, rho, out);
    for (std::size_t p = 0; p < out.size(); ++p) {
        const double hp = h.empty() ? 1.0 : h[p];
        out[p] -= hp * std::exp(s.u()[p]) * rho[p];
    }
}

inline void linearize_apply(const ConformalState& s, std::span<const double> h, std::span<const double> rho,
                            std::span<double> out) {
    linearize_apply(s, root_data(s), h, rho, out);
}

[[nodiscard]] inline double max_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

struct NewtonOptions {
    double tol = 1e-10;  // on the residual max-norm
    int max_iterations = 50;
    int max_halvings = 30;
    double floor_factor = 100.0;  // a stalled line search below floor_factor·tol counts as converged
    krylov::Options krylov{1e-8, 0.0, 500, 60};
};

struct NewtonResult {
    ScalarField u;
    int iterations = 0;
    int krylov_iterations = 0;
    std::vector<double> residual_history;  // max-norms, starting at the guess
    bool stalled_at_floor = false;
};

/// Levels with e^{δ̲} + λ < σ_k^{1/k}(S₀) < e^{δ̄} + λ and δ̲ < 0 < δ̄.
struct StartBounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// λ ≤ c ∫R₀ dvol₀ / vol₀ with c = C(n,k)^{1/k} / (2n(n−1)), from
/// σ_k^{1/k} ≤ C(n,k)^{1/k} σ₁/n and ∫σ₁(W) dvol₀ ≤ ∫ R₀/(2(n−1)) dvol₀.
[[nodiscard]] inline double lambda_ceiling(const BackgroundGeometry& g, int k) {
    const int n = g.dim();
    double binom = 1.0;
    for (int i = 1; i <= k; ++i) binom = binom * (n - k + i) / i;
    const double c = std::pow(binom, 1.0 / k) / (2.0 * n * (n - 1));
    std::vector<double> r0(g.size()), one(g.size(), 1.0);
    for (std::size_t p = 0; p < g.size(); ++p) r0[p] = g.scalar_curvature(p);
    return c * geometry::integrate(g, r0) / geometry::integrate(g, one);
}

struct ContinuationOptions {
    NewtonOptions newton;
    double initial_step = 0.25;
    double min_step = 1e-6;
    double max_u_floor = -20.0;  // solutions escaping below this count as failure
    double start_offset = 0.0;   // lowers δ̲ by this amount
    std::optional<ScalarField> start_perturbation;  // added to the t = 0 guess
};

struct ContinuationState {
    double t = 0.0;
    ScalarField u;
    double lambda = 0.0;
    int newton_iterations = 0;
    int krylov_iterations = 0;
    int continuation_steps = 0;
    int rejected_steps = 0;
    StartBounds bounds;
    bool bounds_respected = true;  // δ̲ ≤ u ≤ δ̄ on every accepted state
};

struct SearchOptions {
    ContinuationOptions continuation;
    double tolerance = 1e-6;  // final bracket width
    int max_bisections = 200;
};

struct LambdaStarResult {
    double lambda_star = 0.0;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    double ceiling = 0.0;
    ScalarField phi;             // u − max u at the largest solvable λ
    double eigen_residual = 0.0; // max |σ_k^{1/k}(W(φ)) − λ*|
    int bisections = 0;
    int continuation_runs = 0;
    int continuation_steps = 0;
    int newton_iterations = 0;
    int krylov_iterations = 0;
};

/// Newton/continuation driver bound to one geometry and curvature order.
class AuxiliarySolver {
public:
    AuxiliarySolver(GeometryHandle g, int k) : geometry_(std::move(g)), k_(k) {
        if (k < 1 || k > geometry_->dim()) throw ConfigurationError("k must be in [1, n]");
        spectral_ = spectral::SeparableLaplacian::build(*geometry_);
    }

    [[nodiscard]] const GeometryHandle& geometry() const noexcept { return geometry_; }
    [[nodiscard]] int k() const noexcept { return k_; }
    [[nodiscard]] bool spectral_preconditioner() const noexcept { return spectral_.has_value(); }

    /// Damped Newton for residual(u) = 0 with the given rhs and h.
    [[nodiscard]] NewtonResult newton_solve(std::span<const double> rhs, std::span<const double> h,
                                            const ScalarField& guess, const NewtonOptions& opt = {}) const {
        const std::size_t N = geometry_->size();
        NewtonResult out{guess, 0, 0, {}};
        ConformalState s(guess, k_);
        if (!s.cone_summary().label.inside) {
            throw ConeViolation("newton_solve: initial guess is not admissible", s.cone_summary().label,
                                s.cone_summary().node);
        }
        RootData rd = root_data(s);
        ScalarField r = residual(s, rhs, h);
        double rnorm = max_norm(r.values);
        out.residual_history.push_back(rnorm);
        std::vector<double> delta(N), b(N);
        while (rnorm > opt.tol) {
            if (out.iterations >= opt.max_iterations) {
                throw NonConvergence("newton_solve: no convergence in " + std::to_string(opt.max_iterations) +
                                     " iterations (residual " + io::format_double(rnorm) + ")");
            }
            ++out.iterations;
            for (std::size_t p = 0; p < N; ++p) b[p] = -r[p];
            std::fill(delta.begin(), delta.end(), 0.0);
            // No oversolving: a linear residual a decade under the Newton
            // tolerance (2-norm, so scaled by √N) is enough.
            krylov::Options kopt = opt.krylov;
            kopt.abs_tol = std::max(kopt.abs_tol, 0.1 * opt.tol * std::sqrt(double(N)));
            out.krylov_iterations += solve_linear(s, rd, h, b, delta, kopt);

            double alpha = 1.0;
            bool accepted = false;
            for (int halving = 0; halving <= opt.max_halvings; ++halving, alpha *= 0.5) {
                std::vector<double> trial = s.u().values;
                bool finite = true;
                for (std::size_t p = 0; p < N; ++p) {
                    trial[p] += alpha * delta[p];
                    finite = finite && std::isfinite(trial[p]);
                }
                if (!finite) continue;
                ConformalState ts(ScalarField(geometry_, std::move(trial)), k_);
                if (!ts.cone_summary().label.inside) continue;
                ScalarField tr = residual(ts, rhs, h);
                const double tn = max_norm(tr.values);
                if (!std::isfinite(tn) || tn >= (1.0 - 1e-4 * alpha) * rnorm) continue;
                s = std::move(ts);
                r = std::move(tr);
                rnorm = tn;
                accepted = true;
                break;
            }
            if (!accepted) {
                // Round-off floor of the residual evaluation.
                if (rnorm <= opt.floor_factor * opt.tol) {
                    out.stalled_at_floor = true;
                    break;
                }
                throw NonConvergence("newton_solve: line search stalled at residual " + io::format_double(rnorm));
            }
            rd = root_data(s);
            out.residual_history.push_back(rnorm);
        }
        out.u = s.u();
        return out;
    }

    [[nodiscard]] NewtonResult newton_solve(const AuxiliaryProblem& problem, const ScalarField& guess,
                                            const NewtonOptions& opt = {}) const {
        return newton_solve(problem.f.values, problem.h.values, guess, opt);
    }

    /// Pointwise range of σ_k^{1/k}(S₀); throws when S₀ is not in Γ_k⁺.
    [[nodiscard]] std::pair<double, double> background_root_range() const {
        const ConformalState s0(ScalarField(geometry_, 0.0), k_);
        if (!s0.cone_summary().label.inside) {
            throw ConeViolation("background Schouten tensor is not in the cone: " +
                                    symfun::describe(s0.cone_summary().label),
                                s0.cone_summary().label, s0.cone_summary().node);
        }
        const RootData rd = root_data(s0);
        const auto [lo, hi] = std::minmax_element(rd.value.begin(), rd.value.end());
        return {*lo, *hi};
    }

    /// Walks rhs = tλ + (1−t)f from t = 0, where u ≡ δ̲ solves the problem
    /// with f = σ_k^{1/k}(S₀) − e^{δ̲}, to t = 1.
    [[nodiscard]] ContinuationState continuation_run(double lambda, const ContinuationOptions& opt = {}) const {
        if (!(lambda > 0.0)) throw ConfigurationError("continuation: lambda must be > 0");
        const std::size_t N = geometry_->size();
        const auto [smin, smax] = background_root_range();
        if (!(smin - lambda > 0.0)) {
            throw ContinuationFailure("continuation: no admissible start, σ_k^{1/k}(S₀) - λ has no positive lower bound");
        }
        ContinuationState cs;
        cs.lambda = lambda;
        cs.bounds.lower = std::min(std::log(0.5 * (smin - lambda)), -0.1) - opt.start_offset;
        cs.bounds.upper = std::max(std::log(smax - lambda) + 0.1, 0.1);
        if (cs.bounds.lower < opt.max_u_floor) {
            throw ContinuationFailure("continuation: start level below the max-u floor");
        }

        const ConformalState s0(ScalarField(geometry_, 0.0), k_);
        const RootData r0 = root_data(s0);
        std::vector<double> f(N), rhs(N);
        for (std::size_t p = 0; p < N; ++p) f[p] = r0.value[p] - std::exp(cs.bounds.lower);

        ScalarField guess(geometry_, cs.bounds.lower);
        if (opt.start_perturbation) {
            for (std::size_t p = 0; p < N; ++p) guess[p] += (*opt.start_perturbation)[p];
        }
        // t = 0.
        {
            const auto nr = newton_solve(f, {}, guess, opt.newton);
            cs.u = nr.u;
            cs.newton_iterations += nr.iterations;
            cs.krylov_iterations += nr.krylov_iterations;
            note_bounds(cs);
        }
        double step = opt.initial_step;
        while (cs.t < 1.0) {
            const double t = std::min(1.0, cs.t + step);
            for (std::size_t p = 0; p < N; ++p) rhs[p] = t * lambda + (1.0 - t) * f[p];
            try {
                const auto nr = newton_solve(rhs, {}, cs.u, opt.newton);
                cs.newton_iterations += nr.iterations;
                cs.krylov_iterations += nr.krylov_iterations;
                const double umax = *std::max_element(nr.u.values.begin(), nr.u.values.end());
                if (umax < opt.max_u_floor) {
                    throw ContinuationFailure("continuation: max u fell below the floor at t=" + io::format_double(t));
                }
                cs.u = nr.u;
                cs.t = t;
                ++cs.continuation_steps;
                note_bounds(cs);
                if (nr.iterations <= 4) step *= 2.0;
            } catch (const ContinuationFailure&) {
                throw;
            } catch (const Error& e) {
                ++cs.rejected_steps;
                step *= 0.5;
                if (step < opt.min_step) {
                    throw ContinuationFailure("continuation: t-step underflow at t=" + io::format_double(cs.t) +
                                              " (" + e.what() + ")");
                }
            }
        }
        return cs;
    }

    /// Bisection on λ between a solvable 0.1·min σ_k^{1/k}(S₀) and the
    /// a-priori ceiling.
    [[nodiscard]] LambdaStarResult lambda_star_search(const SearchOptions& opt = {}) const {
        LambdaStarResult res;
        const auto [smin, smax] = background_root_range();
        (void)smax;
        res.ceiling = lambda_ceiling(*geometry_, k_);
        double lo = 0.1 * smin;
        double hi = res.ceiling;
        std::optional<ContinuationState> best;
        auto attempt = [&](double lambda) -> std::optional<ContinuationState> {
            ++res.continuation_runs;
            try {
                auto cs = continuation_run(lambda, opt.continuation);
                res.continuation_steps += cs.continuation_steps;
                res.newton_iterations += cs.newton_iterations;
                res.krylov_iterations += cs.krylov_iterations;
                return cs;
            } catch (const ContinuationFailure&) {
                return std::nullopt;
            }
        };
        best = attempt(lo);
        if (!best) throw ConfigurationError("lambda search: no solvable lambda found at " + io::format_double(lo));
        if (!(hi > lo)) throw NumericError("lambda search: ceiling below the solvable start");
        if (auto up = attempt(hi)) {
            throw NumericError("lambda search: the ceiling " + io::format_double(hi) + " is solvable");
        }
        while (hi - lo > opt.tolerance) {
            if (res.bisections >= opt.max_bisections) throw NonConvergence("lambda search: bisection cap reached");
            ++res.bisections;
            const double mid = 0.5 * (lo + hi);
            if (auto cs = attempt(mid)) {
                lo = mid;
                best = std::move(cs);
            } else {
                hi = mid;
            }
        }
        res.bracket_lo = lo;
        res.bracket_hi = hi;
        res.lambda_star = 0.5 * (lo + hi);
        res.phi = best->u;
        const double umax = *std::max_element(res.phi.values.begin(), res.phi.values.end());
        for (double& v : res.phi.values) v -= umax;
        const ConformalState sphi(res.phi, k_);
        const RootData rd = root_data(sphi);
        for (double v : rd.value) res.eigen_residual = std::max(res.eigen_residual, std::abs(v - res.lambda_star));
        return res;
    }

private:
    int solve_linear(const ConformalState& s, const RootData& rd, std::span<const double> h,
                     std::span<const double> b, std::span<double> x, const krylov::Options& kopt) const {
        const BackgroundGeometry& g = *geometry_;
        const std::size_t N = g.size();
        const int n = g.dim();
        const int ps = SymMatrix::packed_size(n);
        const auto apply = [&](std::span<const double> in, std::span<double> out) {
            linearize_apply(s, rd, h, in, out);
        };
        double mean_e = 0.0, mean_c = 0.0;
        std::vector<double> diag(N);
        const auto& sp = g.grid().spacing;
        for (std::size_t p = 0; p < N; ++p) {
            const double he = (h.empty() ? 1.0 : h[p]) * std::exp(s.u()[p]);
            mean_e += he;
            double d = -he;
            int t = 0;
            for (int a = 0; a < n; ++a) {
                const double c = rd.gradient.packed[p * ps + t];
                mean_c += c;
                const double e = g.scale(p, a) * sp[a];
                d -= 2.0 * c / (e * e);
                t += n - a;
            }
            diag[p] = d;
        }
        mean_e /= double(N);
        mean_c /= double(N) * n;
        krylov::Result res;
        if (spectral_) {
            const auto prec = [&](std::span<const double> in, std::span<double> out) {
                spectral_->solve(-mean_e, mean_c, in, out);
            };
            res = krylov::gmres(apply, prec, b, x, kopt);
        } else {
            const auto prec = [&](std::span<const double> in, std::span<double> out) {
                for (std::size_t p = 0; p < N; ++p) out[p] = in[p] / diag[p];
            };
            res = krylov::gmres(apply, prec, b, x, kopt);
        }
        for (std::size_t p = 0; p < N; ++p) {
            if (!std::isfinite(x[p])) throw NumericError("newton_solve: non-finite Newton direction");
        }
        return res.iterations;
    }

    static void note_bounds(ContinuationState& cs) {
        const auto [lo, hi] = std::minmax_element(cs.u.values.begin(), cs.u.values.end());
        const double slack = 1e-8;
        if (*lo < cs.bounds.lower - slack || *hi > cs.bounds.upper + slack) cs.bounds_respected = false;
    }

    GeometryHandle geometry_;
    int k_;
    std::optional<spectral::SeparableLaplacian> spectral_;
};

inline constexpr std::string_view report_header =
    "lambda_star,bracket_lo,bracket_hi,bracket_width,ceiling,eigen_residual,bisections,continuation_runs,"
    "continuation_steps,newton_iterations,krylov_iterations";

inline void write_report(std::ostream& os, const LambdaStarResult& r) {
    os << report_header << '\n';
    os << io::format_double(r.lambda_star) << ',' << io::format_double(r.bracket_lo) << ','
       << io::format_double(r.bracket_hi) << ',' << io::format_double(r.bracket_hi - r.bracket_lo) << ','
       << io::format_double(r.ceiling) << ',' << io::format_double(r.eigen_residual) << ',' << r.bisections << ','
       << r.continuation_runs << ',' << r.continuation_steps << ',' << r.newton_iterations << ','
       << r.krylov_iterations << '\n';
}

inline void write_report(const std::filesystem::path& path, const LambdaStarResult& r) {
    io::detail::write_atomically(path, [&](std::ostream& os) { write_report(os, r); });
}

}  // namespace sigmaflow::eigen
