// sigmaflow command-line front end.
//
//   sigmaflow <flow|eigen|check|geometry-validate> [--config FILE] [--KEY VALUE ...] [KEY=VALUE ...]
//
// Settings come from defaults, then the config file, then flags and
// key=value arguments. Exit codes: 0 ok, 2 usage, 3 cone, 4 nonconvergence,
// 5 numeric.

#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sigmaflow/cli.hpp"

namespace {

using namespace sigmaflow;

struct SubcommandOptions {
    CLI::App* app = nullptr;
    std::string config_file;
    std::map<std::string, std::string> flags;
    std::vector<std::string> assignments;
};

void add_options(SubcommandOptions& s) {
    s.app->add_option("--config", s.config_file, "flat key=value configuration file");
    for (const auto& key : config::keys) {
        const std::string name(key.name);
        s.app->add_option("--" + name, s.flags[name], std::string(key.help));
    }
    s.app->add_option("assignments", s.assignments, "KEY=VALUE overrides");
}

config::Assignments collect_overrides(const SubcommandOptions& s) {
    config::Assignments out;
    for (const auto& key : config::keys) {
        const std::string name(key.name);
        if (s.app->count("--" + name) > 0) out.emplace_back(name, s.flags.at(name));
    }
    for (const std::string& a : s.assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigurationError("expected KEY=VALUE, got '" + a + "'");
        }
        std::string key = a.substr(0, eq);
        if (!config::is_known_key(key)) throw ConfigurationError("unknown key '" + key + "'");
        out.emplace_back(std::move(key), a.substr(eq + 1));
    }
    return out;
}

int fail(ExitCode code, const std::string& message) {
    std::cerr << "sigmaflow: error: " << message << '\n';
    return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conformal σ_k-curvature flows and the σ_k eigenvalue problem"};
    app.require_subcommand(1);
    const std::pair<const char*, const char*> subs[] = {
        {"flow", "run the volume-preserving σ_k (or σ_k/σ_l) flow"},
        {"eigen", "search for λ* and the renormalized eigenfunction φ"},
        {"check", "run the property suite"},
        {"geometry-validate", "check the finite-difference Schouten tensor against the chart's analytic one"},
    };
    std::vector<SubcommandOptions> options(std::size(subs));
    for (std::size_t i = 0; i < std::size(subs); ++i) {
        options[i].app = app.add_subcommand(subs[i].first, subs[i].second);
        add_options(options[i]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ExtrasError& e) {
        return fail(ExitCode::usage, std::string("unknown option or key: ") + e.what());
    } catch (const CLI::ParseError& e) {
        return fail(ExitCode::usage, e.what());
    }

    try {
        for (const auto& s : options) {
            if (!s.app->parsed()) continue;
            const config::Assignments file =
                s.config_file.empty() ? config::Assignments{} : config::parse_file(s.config_file);
            const config::RunConfig cfg =
                config::make_config(config::parse_subcommand(s.app->get_name()), file, collect_overrides(s));
            const cli::RunReport report = cli::dispatch(cfg, std::cout);
            for (const auto& f : report.files) std::cout << "wrote " << f.string() << '\n';
            return static_cast<int>(report.status);
        }
        return fail(ExitCode::usage, "no subcommand given");
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail(ExitCode::numeric, std::string("internal error: ") + e.what());
    }
}
