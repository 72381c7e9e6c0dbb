#pragma once

// Subcommand drivers behind the sigmaflow executable. Each returns a
// RunReport; module errors propagate as sigmaflow::Error with their exit code.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sigmaflow/checks.hpp"
#include "sigmaflow/config.hpp"
#include "sigmaflow/conformal.hpp"
#include "sigmaflow/curvature.hpp"
#include "sigmaflow/eigen.hpp"
#include "sigmaflow/error.hpp"
#include "sigmaflow/field_io.hpp"
#include "sigmaflow/flow.hpp"
#include "sigmaflow/geometry.hpp"

namespace sigmaflow::cli {

using config::RunConfig;
namespace fs = std::filesystem;

struct RunReport {
    ExitCode status = ExitCode::success;
    std::string summary;
    std::vector<fs::path> files;
};

namespace detail {

inline void prepare_output(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw ConfigurationError("config key 'output_dir': cannot create directory '" + dir.string() + "'");
    }
}

template <class Writer>
void write_text(const fs::path& path, Writer&& writer) {
    io::detail::write_atomically(path, std::forward<Writer>(writer));
}

inline std::string snapshot_name(std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "u_step%08zu.field", step);
    return buf;
}

}  // namespace detail

[[nodiscard]] inline RunReport run_flow(const RunConfig& cfg, std::ostream& log) {
    const auto g = config::build_geometry(cfg);
    config::require_background_cone(g, cfg.k);
    detail::prepare_output(cfg.output_dir);
    const geometry::ScalarField u0 = config::initial_field(cfg, g);
    const flow::FlowConfig fcfg = config::flow_config(cfg);

    RunReport report;
    std::vector<std::pair<std::size_t, geometry::ScalarField>> snapshots;
    flow::StepObserver observer;
    if (cfg.snapshot_every > 0) {
        observer = [&](const flow::FlowState& fs) {
            if (fs.step_count % static_cast<std::size_t>(cfg.snapshot_every) == 0) {
                const fs::path p = cfg.output_dir / detail::snapshot_name(fs.step_count);
                io::write_field(p, fs.state.u());
                report.files.push_back(p);
            }
        };
    }
    const flow::RunResult res = flow::run(u0, fcfg, observer);
    const flow::FlowState& fin = res.final_state;

    const fs::path monitors = cfg.output_dir / "monitors.csv";
    flow::write_monitors(monitors, res.records);
    report.files.push_back(monitors);
    const fs::path ufinal = cfg.output_dir / "u_final.field";
    io::write_field(ufinal, fin.state.u());
    report.files.push_back(ufinal);
    const fs::path sfinal = cfg.output_dir / "sigma_final.field";
    io::write_field(sfinal, conformal::sigma_k_field(fin.state));
    report.files.push_back(sfinal);

    const flow::PositivityReport pos = flow::positivity_monitor(res.records);
    const flow::MonitorRecord& last = res.records.back();
    const fs::path summary = cfg.output_dir / "flow_summary.csv";
    detail::write_text(summary, [&](std::ostream& os) {
        os << "converged,convergence_time,beta,final_time,steps,accepted,rejected,relative_l2,volume,F_k,"
              "positivity_holds,positivity_c\n";
        os << (res.converged ? "true" : "false") << ','
           << (res.convergence_time ? io::format_double(*res.convergence_time) : "") << ','
           << (res.beta ? io::format_double(*res.beta) : "") << ',' << io::format_double(fin.time) << ','
           << fin.step_count << ',' << fin.accepted << ',' << fin.rejected << ','
           << io::format_double(last.relative_l2) << ',' << io::format_double(last.volume) << ','
           << io::format_double(last.F_k) << ',' << (pos.positive ? "true" : "false") << ','
           << io::format_double(pos.c) << '\n';
    });
    report.files.push_back(summary);

    std::ostringstream s;
    s << "flow: ";
    if (res.converged) {
        s << "converged at t=" << io::format_double(*res.convergence_time);
    } else {
        s << "not converged by t=" << io::format_double(fin.time) << " (relative L2 deviation "
          << io::format_double(last.relative_l2) << ")";
    }
    if (res.beta) {
        s << ", beta=" << io::format_double(*res.beta);
    } else {
        s << ", beta withheld (2(k-l) = n)";
    }
    s << ", steps=" << fin.step_count << ", rejected=" << fin.rejected;
    report.summary = s.str();
    log << report.summary << '\n';
    return report;
}

[[nodiscard]] inline RunReport run_eigen(const RunConfig& cfg, std::ostream& log) {
    const auto g = config::build_geometry(cfg);
    config::require_background_cone(g, cfg.k);
    detail::prepare_output(cfg.output_dir);
    const eigen::AuxiliarySolver solver(g, cfg.k);
    eigen::SearchOptions opt;
    opt.tolerance = cfg.lambda_tol;
    opt.continuation.newton.tol = cfg.newton_tol;
    opt.continuation.max_u_floor = cfg.max_u_floor;
    if (cfg.initial != config::InitialKind::zero) {
        opt.continuation.start_perturbation = config::initial_field(cfg, g);
    }
    const eigen::LambdaStarResult res = solver.lambda_star_search(opt);

    RunReport report;
    const fs::path rep = cfg.output_dir / "eigen_report.csv";
    eigen::write_report(rep, res);
    report.files.push_back(rep);
    const fs::path phi = cfg.output_dir / "phi.field";
    io::write_field(phi, res.phi);
    report.files.push_back(phi);

    const auto [lo, hi] = std::minmax_element(res.phi.values.begin(), res.phi.values.end());
    std::ostringstream s;
    s << "eigen: lambda*=" << io::format_double(res.lambda_star) << " (bracket width "
      << io::format_double(res.bracket_hi - res.bracket_lo) << ", ceiling " << io::format_double(res.ceiling)
      << "), phi spread " << io::format_double(*hi - *lo) << ", eigen residual "
      << io::format_double(res.eigen_residual);
    report.summary = s.str();
    log << report.summary << '\n';
    return report;
}

/// Finite-difference Schouten tensor at two resolutions against the stored
/// analytic one; passes when the observed order is at least 1.9 (or both
/// deviations are at round-off).
[[nodiscard]] inline RunReport run_geometry_validate(const RunConfig& cfg, std::ostream& log) {
    detail::prepare_output(cfg.output_dir);
    RunConfig coarse = cfg, fine = cfg;
    coarse.resolution = std::max(cfg.chart == geometry::ChartKind::synthetic ? 4 : 16, (cfg.resolution / 4) * 2);
    if (coarse.resolution == cfg.resolution) fine.resolution = 2 * cfg.resolution;
    const auto gc = config::build_geometry(coarse);
    const auto gf = config::build_geometry(fine);
    const double ec = geometry::curvature_oracle_deviation(gc);
    const double ef = geometry::curvature_oracle_deviation(gf);
    auto volume_error = [](const geometry::GeometryHandle& g) {
        const std::vector<double> one(g->size(), 1.0);
        return std::abs(geometry::integrate(*g, one) / g->analytic_volume() - 1.0);
    };
    const double vc = volume_error(gc), vf = volume_error(gf);
    const bool roundoff = ef < 1e-12 && ec < 1e-12;
    const double order = roundoff ? 0.0 : std::log2(ec / ef) / std::log2(double(fine.resolution) / coarse.resolution);
    const bool passed = roundoff || order >= 1.9;

    RunReport report;
    const fs::path csv = cfg.output_dir / "geometry_validation.csv";
    detail::write_text(csv, [&](std::ostream& os) {
        os << "resolution,schouten_deviation,volume_error\n";
        os << coarse.resolution << ',' << io::format_double(ec) << ',' << io::format_double(vc) << '\n';
        os << fine.resolution << ',' << io::format_double(ef) << ',' << io::format_double(vf) << '\n';
    });
    report.files.push_back(csv);
    const fs::path field = cfg.output_dir / "schouten_oracle.field";
    io::write_field(field, geometry::curvature_oracle(gc));
    report.files.push_back(field);

    std::ostringstream s;
    s << "geometry-validate: " << gc->name() << " n=" << cfg.n << " Schouten deviation "
      << io::format_double(ec) << " (N=" << coarse.resolution << ") -> " << io::format_double(ef)
      << " (N=" << fine.resolution << "), ";
    if (roundoff) {
        s << "at round-off";
    } else {
        s << "order " << io::format_double(order);
    }
    s << (passed ? " PASS" : " FAIL (order < 1.9)");
    report.summary = s.str();
    report.status = passed ? ExitCode::success : ExitCode::numeric;
    log << report.summary << '\n';
    return report;
}

[[nodiscard]] inline RunReport run_check(const RunConfig& cfg, std::ostream& log) {
    detail::prepare_output(cfg.output_dir);
    const auto results = checks::run_all(cfg.check_samples, cfg.seed);
    int failed = 0;
    for (const auto& r : results) {
        if (!r.passed) ++failed;
        log << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << io::format_double(r.value) << " vs "
            << io::format_double(r.threshold) << " (" << r.detail << ")\n";
    }
    RunReport report;
    const fs::path csv = cfg.output_dir / "check_report.csv";
    detail::write_text(csv, [&](std::ostream& os) { checks::write_report(os, results); });
    report.files.push_back(csv);
    report.summary = "check: " + std::to_string(results.size() - failed) + "/" + std::to_string(results.size()) +
                     " properties pass";
    report.status = failed == 0 ? ExitCode::success : ExitCode::numeric;
    log << report.summary << '\n';
    return report;
}

[[nodiscard]] inline RunReport dispatch(const RunConfig& cfg, std::ostream& log) {
    switch (cfg.subcommand) {
        case config::Subcommand::flow: return run_flow(cfg, log);
        case config::Subcommand::eigen: return run_eigen(cfg, log);
        case config::Subcommand::check: return run_check(cfg, log);
        case config::Subcommand::geometry_validate: return run_geometry_validate(cfg, log);
    }
    throw ConfigurationError("unknown subcommand");
}

}  // namespace sigmaflow::cli
