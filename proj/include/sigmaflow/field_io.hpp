#pragma once

// Field dumps: one header line
//   sigmaflow-field v1; dims=<d1,d2,...>; axis=<kinds>; chart=<name>
// followed by one row per grid point in row-major order. Scalar rows hold one
// value, tensor rows the n(n+1)/2 upper-triangle entries.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sigmaflow/error.hpp"
#include "sigmaflow/geometry.hpp"

namespace sigmaflow::io {

/// Shortest form is not required; 17 significant digits round-trip doubles.
[[nodiscard]] inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

[[nodiscard]] inline double parse_double(std::string_view text) {
    const std::string s(text);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw ConfigurationError("not a number: '" + s + "'");
    }
    return v;
}

[[nodiscard]] inline std::string field_header(const geometry::BackgroundGeometry& g) {
    const auto& grid = g.grid();
    std::string dims, axes;
    for (int a = 0; a < grid.n; ++a) {
        if (a) {
            dims += ',';
            axes += ',';
        }
        dims += std::to_string(grid.shape[a]);
        axes += geometry::to_string(grid.axis_kind[a]);
    }
    return "sigmaflow-field v1; dims=" + dims + "; axis=" + axes + "; chart=" + g.name();
}

namespace detail {

inline void write_rows(std::ostream& os, const std::vector<double>& values, int per_row) {
    for (std::size_t i = 0; i < values.size(); i += per_row) {
        for (int c = 0; c < per_row; ++c) {
            if (c) os << ',';
            os << format_double(values[i + c]);
        }
        os << '\n';
    }
}

// Writes through a sibling temporary so a failed run never leaves a partial file.
template <class Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer) {
    const std::filesystem::path tmp = path.string() + ".partial";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ConfigurationError("cannot open '" + tmp.string() + "' for writing");
        writer(os);
        os.flush();
        if (!os) throw NumericError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline void write_field(std::ostream& os, const geometry::ScalarField& f) {
    os << field_header(*f.geometry) << '\n';
    detail::write_rows(os, f.values, 1);
}

inline void write_field(std::ostream& os, const geometry::SymMatrixField& f) {
    os << field_header(*f.geometry) << '\n';
    detail::write_rows(os, f.packed, symfun::SymMatrix::packed_size(f.geometry->dim()));
}

template <class Field>
void write_field(const std::filesystem::path& path, const Field& f) {
    detail::write_atomically(path, [&](std::ostream& os) { write_field(os, f); });
}

/// Parsed dump.
struct FieldDump {
    std::vector<int> dims;
    std::vector<std::string> axis;
    std::string chart;
    int components = 0;
    std::vector<double> values;
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

[[nodiscard]] inline FieldDump read_field(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigurationError("field dump: empty input");
    const auto parts = detail::split(line, ';');
    if (parts.size() != 4 || detail::trim(parts[0]) != "sigmaflow-field v1") {
        throw ConfigurationError("field dump: bad header '" + line + "'");
    }
    FieldDump dump;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const std::string kv = detail::trim(parts[i]);
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigurationError("field dump: bad header entry '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "dims") {
            for (const auto& d : detail::split(val, ',')) dump.dims.push_back(std::stoi(d));
        } else if (key == "axis") {
            dump.axis = detail::split(val, ',');
        } else if (key == "chart") {
            dump.chart = val;
        } else {
            throw ConfigurationError("field dump: unknown header key '" + key + "'");
        }
    }
    if (dump.dims.empty() || dump.dims.size() != dump.axis.size()) {
        throw ConfigurationError("field dump: dims/axis mismatch");
    }
    std::size_t points = 1;
    for (int d : dump.dims) points *= static_cast<std::size_t>(d);
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split(line, ',');
        if (dump.components == 0) dump.components = static_cast<int>(cells.size());
        if (static_cast<int>(cells.size()) != dump.components) {
            throw ConfigurationError("field dump: ragged row " + std::to_string(rows + 2));
        }
        for (const auto& c : cells) dump.values.push_back(parse_double(c));
        ++rows;
    }
    if (rows != points) {
        throw ConfigurationError("field dump: expected " + std::to_string(points) + " rows, got " +
                                 std::to_string(rows));
    }
    return dump;
}

[[nodiscard]] inline FieldDump read_field(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigurationError("cannot open '" + path.string() + "'");
    return read_field(is);
}

}  // namespace sigmaflow::io
