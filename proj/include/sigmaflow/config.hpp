#pragma once

// Run configuration: flat key=value files with '#' comments, overridable key
// by key, validated into a RunConfig.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sigmaflow/conformal.hpp"
#include "sigmaflow/error.hpp"
#include "sigmaflow/field_io.hpp"
#include "sigmaflow/flow.hpp"
#include "sigmaflow/geometry.hpp"
#include "sigmaflow/symfun.hpp"

namespace sigmaflow::config {

using geometry::ChartKind;
using geometry::GeometryHandle;
using geometry::ScalarField;
using symfun::SymMatrix;

enum class Subcommand { flow, eigen, check, geometry_validate };

[[nodiscard]] inline const char* to_string(Subcommand s) noexcept {
    switch (s) {
        case Subcommand::flow: return "flow";
        case Subcommand::eigen: return "eigen";
        case Subcommand::check: return "check";
        case Subcommand::geometry_validate: return "geometry-validate";
    }
    return "?";
}

[[nodiscard]] inline Subcommand parse_subcommand(std::string_view s) {
    if (s == "flow") return Subcommand::flow;
    if (s == "eigen") return Subcommand::eigen;
    if (s == "check") return Subcommand::check;
    if (s == "geometry-validate") return Subcommand::geometry_validate;
    throw ConfigurationError("unknown subcommand '" + std::string(s) + "'");
}

/// Initial conformal factor generators.
enum class InitialKind { zero, constant, cos_axis, random };

struct RunConfig {
    Subcommand subcommand = Subcommand::flow;
    ChartKind chart = ChartKind::round_sphere;
    int n = 3;
    int k = 1;
    int quotient_l = 0;
    int resolution = 32;
    int fd_order = 4;
    double circle_radius = 1.0;
    std::vector<double> schouten;  // synthetic only: n diagonal or n(n+1)/2 packed entries
    double t_end = 1.0;
    double dt = 1e-2;
    double cfl_safety = 0.9;
    flow::Integrator integrator = flow::Integrator::implicit_euler;
    double convergence_tol = 1e-5;
    bool stop_on_convergence = true;
    int monitor_every = 1;
    int max_rejections = 30;
    double krylov_tol = 1e-10;
    double newton_tol = 1e-10;
    double lambda_tol = 1e-6;
    double max_u_floor = -20.0;
    InitialKind initial = InitialKind::zero;
    double initial_amplitude = 0.1;
    int initial_axis = 0;
    std::uint64_t seed = 0;
    int snapshot_every = 0;  // steps between field snapshots; 0 = final only
    std::filesystem::path output_dir = ".";
    int check_samples = 1000;
};

struct KeyInfo {
    std::string_view name;
    std::string_view help;
};

/// Every recognized key, in documentation order.
inline constexpr KeyInfo keys[] = {
    {"chart", "round_sphere | hopf_product | synthetic"},
    {"n", "manifold dimension, 3..5 (synthetic: 3..8)"},
    {"k", "curvature order, 1..n"},
    {"quotient_l", "quotient flow σ_k/σ_l when > 0 (flow only), 0..k-1"},
    {"resolution", "points per axis (>= 16 on round/hopf charts, >= 4 on synthetic)"},
    {"fd_order", "finite-difference order, 2 or 4"},
    {"circle_radius", "radius of the S^1 factor (hopf_product)"},
    {"schouten", "synthetic Schouten tensor: n diagonal or n(n+1)/2 upper-triangle entries, comma separated"},
    {"t_end", "final flow time"},
    {"dt", "initial time step"},
    {"cfl_safety", "safety factor on the explicit stability bound"},
    {"integrator", "implicit | euler | midpoint"},
    {"convergence_tol", "relative L2 deviation of σ_k from r_k counted as converged"},
    {"stop_on_convergence", "stop the flow once converged (true/false)"},
    {"monitor_every", "steps between monitor rows"},
    {"max_rejections", "step halvings before giving up"},
    {"krylov_tol", "relative tolerance of implicit-step Krylov solves"},
    {"newton_tol", "residual max-norm tolerance of eigen Newton solves"},
    {"lambda_tol", "final λ bracket width"},
    {"max_u_floor", "max u below this ends a continuation as unsolvable"},
    {"initial", "zero | constant | cos_axis | random"},
    {"initial_amplitude", "amplitude of the initial conformal factor"},
    {"initial_axis", "coordinate axis used by initial=cos_axis"},
    {"seed", "seed for initial=random"},
    {"snapshot_every", "steps between field snapshots, 0 for the final state only"},
    {"output_dir", "directory receiving CSV and field files"},
    {"check_samples", "random matrices per symmetric-function check"},
};

[[nodiscard]] inline bool is_known_key(std::string_view name) {
    return std::any_of(std::begin(keys), std::end(keys), [&](const KeyInfo& k) { return k.name == name; });
}

/// Ordered (key, value) pairs; later entries override earlier ones.
using Assignments = std::vector<std::pair<std::string, std::string>>;

/// Parses key=value lines. Blank lines and text after '#' are ignored.
/// Unknown keys and duplicate keys are usage errors naming the key.
[[nodiscard]] inline Assignments parse_text(std::string_view text, const std::string& origin = "config") {
    Assignments out;
    std::map<std::string, int> seen;
    std::istringstream is{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = io::detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigurationError(where + ": expected key=value, got '" + body + "'");
        std::string key = io::detail::trim(body.substr(0, eq));
        std::string value = io::detail::trim(body.substr(eq + 1));
        if (key.empty()) throw ConfigurationError(where + ": empty key");
        if (!is_known_key(key)) throw ConfigurationError(where + ": unknown key '" + key + "'");
        if (const auto it = seen.find(key); it != seen.end()) {
            throw ConfigurationError(where + ": key '" + key + "' already set on line " + std::to_string(it->second));
        }
        seen[key] = lineno;
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

[[nodiscard]] inline Assignments parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot read config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path.string());
}

namespace detail {

[[noreturn]] inline void bad_value(std::string_view key, std::string_view expected, std::string_view value) {
    throw ConfigurationError("config key '" + std::string(key) + "': expected " + std::string(expected) +
                             ", got '" + std::string(value) + "'");
}

inline long long to_integer(std::string_view key, const std::string& v) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        bad_value(key, "an integer", v);
    }
    if (used != v.size()) bad_value(key, "an integer", v);
    return out;
}

inline int to_int(std::string_view key, const std::string& v) {
    const long long x = to_integer(key, v);
    if (x < -1'000'000'000LL || x > 1'000'000'000LL) bad_value(key, "an integer in range", v);
    return static_cast<int>(x);
}

inline double to_real(std::string_view key, const std::string& v) {
    double x = 0.0;
    try {
        x = io::parse_double(v);
    } catch (const std::exception&) {
        bad_value(key, "a number", v);
    }
    if (!std::isfinite(x)) bad_value(key, "a finite number", v);
    return x;
}

inline bool to_bool(std::string_view key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, "true or false", v);
}

inline ChartKind to_chart(std::string_view key, const std::string& v) {
    if (v == "round_sphere") return ChartKind::round_sphere;
    if (v == "hopf_product") return ChartKind::hopf_product;
    if (v == "synthetic") return ChartKind::synthetic;
    bad_value(key, "round_sphere, hopf_product or synthetic", v);
}

inline InitialKind to_initial(std::string_view key, const std::string& v) {
    if (v == "zero") return InitialKind::zero;
    if (v == "constant") return InitialKind::constant;
    if (v == "cos_axis") return InitialKind::cos_axis;
    if (v == "random") return InitialKind::random;
    bad_value(key, "zero, constant, cos_axis or random", v);
}

inline std::vector<double> to_list(std::string_view key, const std::string& v) {
    std::vector<double> out;
    for (const std::string& part : io::detail::split(v, ',')) out.push_back(to_real(key, io::detail::trim(part)));
    return out;
}

}  // namespace detail

/// Applies one assignment. Throws ConfigurationError naming the key.
inline void assign(RunConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "chart") c.chart = to_chart(key, value);
    else if (key == "n") c.n = to_int(key, value);
    else if (key == "k") c.k = to_int(key, value);
    else if (key == "quotient_l") c.quotient_l = to_int(key, value);
    else if (key == "resolution") c.resolution = to_int(key, value);
    else if (key == "fd_order") c.fd_order = to_int(key, value);
    else if (key == "circle_radius") c.circle_radius = to_real(key, value);
    else if (key == "schouten") c.schouten = to_list(key, value);
    else if (key == "t_end") c.t_end = to_real(key, value);
    else if (key == "dt") c.dt = to_real(key, value);
    else if (key == "cfl_safety") c.cfl_safety = to_real(key, value);
    else if (key == "integrator") {
        try {
            c.integrator = flow::parse_integrator(value);
        } catch (const ConfigurationError&) {
            bad_value(key, "implicit, euler or midpoint", value);
        }
    } else if (key == "convergence_tol") c.convergence_tol = to_real(key, value);
    else if (key == "stop_on_convergence") c.stop_on_convergence = to_bool(key, value);
    else if (key == "monitor_every") c.monitor_every = to_int(key, value);
    else if (key == "max_rejections") c.max_rejections = to_int(key, value);
    else if (key == "krylov_tol") c.krylov_tol = to_real(key, value);
    else if (key == "newton_tol") c.newton_tol = to_real(key, value);
    else if (key == "lambda_tol") c.lambda_tol = to_real(key, value);
    else if (key == "max_u_floor") c.max_u_floor = to_real(key, value);
    else if (key == "initial") c.initial = to_initial(key, value);
    else if (key == "initial_amplitude") c.initial_amplitude = to_real(key, value);
    else if (key == "initial_axis") c.initial_axis = to_int(key, value);
    else if (key == "seed") {
        const long long s = to_integer(key, value);
        if (s < 0) bad_value(key, "a non-negative integer", value);
        c.seed = static_cast<std::uint64_t>(s);
    } else if (key == "snapshot_every") c.snapshot_every = to_int(key, value);
    else if (key == "output_dir") {
        if (value.empty()) bad_value(key, "a directory path", value);
        c.output_dir = value;
    } else if (key == "check_samples") c.check_samples = to_int(key, value);
    else throw ConfigurationError("unknown key '" + key + "'");
}

/// Synthetic Schouten tensor from the configured entries (default ½I).
[[nodiscard]] inline SymMatrix synthetic_schouten(const RunConfig& c) {
    const int n = c.n;
    if (c.schouten.empty()) return SymMatrix::identity(n, 0.5);
    if (static_cast<int>(c.schouten.size()) == n) return SymMatrix::diagonal(c.schouten);
    if (static_cast<int>(c.schouten.size()) == SymMatrix::packed_size(n)) {
        SymMatrix m(n);
        int t = 0;
        for (int a = 0; a < n; ++a) {
            for (int b = a; b < n; ++b) m(a, b) = c.schouten[t++];
        }
        return m;
    }
    throw ConfigurationError("config key 'schouten': expected " + std::to_string(n) + " or " +
                             std::to_string(SymMatrix::packed_size(n)) + " entries, got " +
                             std::to_string(c.schouten.size()));
}

[[nodiscard]] inline GeometryHandle build_geometry(const RunConfig& c) {
    switch (c.chart) {
        case ChartKind::round_sphere: return geometry::build_round_sphere(c.n, c.resolution, c.fd_order);
        case ChartKind::hopf_product: return geometry::build_hopf_product(c.n, c.circle_radius, c.resolution, c.fd_order);
        case ChartKind::synthetic: return geometry::build_synthetic(c.n, synthetic_schouten(c), c.resolution, c.fd_order);
    }
    throw ConfigurationError("config key 'chart': unsupported chart");
}

/// Range and compatibility checks that need no geometry.
inline void validate_scalars(const RunConfig& c) {
    auto fail = [](std::string_view key, const std::string& why) {
        throw ConfigurationError("config key '" + std::string(key) + "': " + why);
    };
    if (c.n < 3 || c.n > symfun::max_dim) fail("n", "must be in [3, " + std::to_string(symfun::max_dim) + "]");
    if (c.chart != ChartKind::synthetic && c.n > 5) fail("n", "round_sphere and hopf_product support n = 3, 4, 5");
    if (c.k < 1 || c.k > c.n) fail("k", "must be in [1, n]");
    if (c.quotient_l < 0 || c.quotient_l >= c.k) fail("quotient_l", "must be in [0, k-1]");
    if (c.quotient_l > 0 && c.subcommand == Subcommand::eigen) fail("quotient_l", "is only used by flow");
    const int min_res = c.chart == ChartKind::synthetic ? 4 : 16;
    if (c.resolution < min_res) fail("resolution", "must be at least " + std::to_string(min_res) + " on this chart");
    if (c.chart != ChartKind::synthetic && c.resolution % 2 != 0) fail("resolution", "must be even on pole charts");
    if (c.fd_order != 2 && c.fd_order != 4) fail("fd_order", "must be 2 or 4");
    if (!(c.circle_radius > 0.0)) fail("circle_radius", "must be positive");
    if (!c.schouten.empty() && c.chart != ChartKind::synthetic) fail("schouten", "only applies to chart=synthetic");
    if (!(c.t_end > 0.0)) fail("t_end", "must be positive");
    if (!(c.dt > 0.0)) fail("dt", "must be positive");
    if (!(c.cfl_safety > 0.0 && c.cfl_safety <= 1.0)) fail("cfl_safety", "must be in (0, 1]");
    if (!(c.convergence_tol > 0.0)) fail("convergence_tol", "must be positive");
    if (c.monitor_every < 1) fail("monitor_every", "must be at least 1");
    if (c.max_rejections < 1) fail("max_rejections", "must be at least 1");
    if (!(c.krylov_tol > 0.0 && c.krylov_tol < 1.0)) fail("krylov_tol", "must be in (0, 1)");
    if (!(c.newton_tol > 0.0)) fail("newton_tol", "must be positive");
    if (!(c.lambda_tol > 0.0)) fail("lambda_tol", "must be positive");
    if (!(c.max_u_floor < 0.0)) fail("max_u_floor", "must be negative");
    if (c.initial_axis < 0 || c.initial_axis >= c.n) fail("initial_axis", "must be in [0, n-1]");
    if (c.snapshot_every < 0) fail("snapshot_every", "must be non-negative");
    if (c.check_samples < 1) fail("check_samples", "must be at least 1");
    if (c.chart == ChartKind::synthetic) (void)synthetic_schouten(c);
}

/// Background Schouten tensor must lie in Γ_k⁺ for the flow and the
/// eigenvalue problem to be (degenerate-)elliptic. Throws ConeViolation
/// (exit code 3) with the offending spectrum.
inline void require_background_cone(const GeometryHandle& g, int k) {
    const conformal::ConformalState s0(ScalarField(g, 0.0), k);
    const auto& c = s0.cone_summary();
    if (c.label.inside) return;
    const symfun::Spectrum lam = symfun::eigenvalues(g->schouten0(c.node));
    std::ostringstream os;
    os << "chart " << g->name() << " n=" << g->dim() << ": background Schouten eigenvalues (";
    for (int i = 0; i < lam.size(); ++i) os << (i ? ", " : "") << io::format_double(lam[i]);
    const int j = c.label.first_failing_j.value_or(k);
    os << ") have sigma_" << j << " = " << io::format_double(symfun::sigma_k(lam, j)) << ", "
       << symfun::describe(c.label) << "; the k=" << k << " flow and eigenvalue problem need S_0 inside the cone";
    throw ConeViolation(os.str(), c.label, c.node);
}

/// Builds a RunConfig: defaults, then the file, then overrides in order.
[[nodiscard]] inline RunConfig make_config(Subcommand sub, const Assignments& file, const Assignments& overrides) {
    RunConfig c;
    c.subcommand = sub;
    for (const auto& [k, v] : file) assign(c, k, v);
    for (const auto& [k, v] : overrides) {
        if (!is_known_key(k)) throw ConfigurationError("unknown key '" + k + "'");
        assign(c, k, v);
    }
    validate_scalars(c);
    return c;
}

// ---------------------------------------------------------------------------
// Initial data

/// Embedding coordinates of a point of a round chart (unit sphere), or the
/// (cos, sin) pair of the circle followed by the S^{n-1} embedding on Hopf.
[[nodiscard]] inline std::vector<double> embedding(ChartKind chart, std::span<const double> x) {
    const auto sphere = [](std::span<const double> ang) {
        std::vector<double> e;
        double s = 1.0;
        for (std::size_t i = 0; i + 1 < ang.size(); ++i) {
            e.push_back(s * std::cos(ang[i]));
            s *= std::sin(ang[i]);
        }
        e.push_back(s * std::cos(ang.back()));
        e.push_back(s * std::sin(ang.back()));
        return e;
    };
    switch (chart) {
        case ChartKind::round_sphere: return sphere(x);
        case ChartKind::hopf_product: {
            std::vector<double> e{std::cos(x[0]), std::sin(x[0])};
            const auto rest = sphere(x.subspan(1));
            e.insert(e.end(), rest.begin(), rest.end());
            return e;
        }
        case ChartKind::synthetic: {
            std::vector<double> e;
            for (double v : x) {
                e.push_back(std::cos(v));
                e.push_back(std::sin(v));
            }
            return e;
        }
    }
    return {};
}

/// Initial conformal factor. initial=random draws a quadratic polynomial in
/// the embedding coordinates (smooth on every chart), scaled to max |u| = A.
[[nodiscard]] inline ScalarField initial_field(const RunConfig& c, const GeometryHandle& g) {
    const double a = c.initial_amplitude;
    switch (c.initial) {
        case InitialKind::zero: return ScalarField(g, 0.0);
        case InitialKind::constant: return ScalarField(g, a);
        case InitialKind::cos_axis: {
            const int axis = c.initial_axis;
            return geometry::make_field(g, [&](std::span<const double> x) { return a * std::cos(x[axis]); });
        }
        case InitialKind::random: {
            std::mt19937_64 rng(c.seed);
            std::uniform_real_distribution<double> dist(-1.0, 1.0);
            std::vector<double> probe(g->dim(), 0.3);
            const std::size_t m = embedding(c.chart, probe).size();
            std::vector<double> lin(m), quad(m * m);
            for (double& v : lin) v = dist(rng);
            for (double& v : quad) v = dist(rng);
            ScalarField f = geometry::make_field(g, [&](std::span<const double> x) {
                const auto e = embedding(c.chart, x);
                double s = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    s += lin[i] * e[i];
                    for (std::size_t j = i; j < m; ++j) s += 0.5 * quad[i * m + j] * e[i] * e[j];
                }
                return s;
            });
            double mean = 0.0, peak = 0.0;
            for (double v : f.values) mean += v;
            mean /= double(f.size());
            for (double& v : f.values) {
                v -= mean;
                peak = std::max(peak, std::abs(v));
            }
            if (peak > 0.0) {
                for (double& v : f.values) v *= a / peak;
            }
            return f;
        }
    }
    return ScalarField(g, 0.0);
}

[[nodiscard]] inline flow::FlowConfig flow_config(const RunConfig& c) {
    flow::FlowConfig f;
    f.k = c.k;
    f.quotient_l = c.quotient_l;
    f.t_end = c.t_end;
    f.dt_initial = c.dt;
    f.cfl_safety = c.cfl_safety;
    f.monitor_every = c.monitor_every;
    f.convergence_tol = c.convergence_tol;
    f.stop_on_convergence = c.stop_on_convergence;
    f.integrator = c.integrator;
    f.max_rejections = c.max_rejections;
    f.krylov.rel_tol = c.krylov_tol;
    return f;
}

}  // namespace sigmaflow::config
