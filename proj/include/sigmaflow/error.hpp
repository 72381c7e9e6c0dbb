#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace sigmaflow {

/// Process exit codes shared by the CLI and the error hierarchy.
enum class ExitCode : int {
    success = 0,
    usage = 2,
    cone = 3,
    nonconvergence = 4,
    numeric = 5,
};

/// Label produced by a cone test: is the spectrum inside Γ_k⁺, and if not,
/// which σ_j was the first to fail.
struct ConeLabel {
    int k = 0;
    bool inside = false;
    std::optional<int> first_failing_j;
};

class Error : public std::runtime_error {
public:
    Error(const std::string& what, ExitCode code)
        : std::runtime_error(what), code_(code) {}

    [[nodiscard]] ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Invalid arguments to a library routine (k out of range, dimension mismatch).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what, ExitCode::usage) {}
};

/// Bad run configuration or geometry request.
class ConfigurationError : public Error {
public:
    explicit ConfigurationError(const std::string& what) : Error(what, ExitCode::usage) {}
};

/// A floating point routine failed (non-convergent eigen iteration, NaN).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what, ExitCode::numeric) {}
};

/// A matrix or field left the admissible cone Γ_k⁺.
class ConeViolation : public Error {
public:
    ConeViolation(const std::string& what, ConeLabel label,
                  std::optional<std::size_t> node = std::nullopt)
        : Error(what, ExitCode::cone), label_(label), node_(node) {}

    [[nodiscard]] const ConeLabel& label() const noexcept { return label_; }
    [[nodiscard]] std::optional<std::size_t> node() const noexcept { return node_; }

private:
    ConeLabel label_;
    std::optional<std::size_t> node_;
};

/// σ_k(g) or r_k(g) not strictly positive where a logarithm is needed.
class PositivityError : public Error {
public:
    explicit PositivityError(const std::string& what) : Error(what, ExitCode::cone) {}
};

/// Newton, continuation or time stepping gave up.
class NonConvergence : public Error {
public:
    explicit NonConvergence(const std::string& what)
        : Error(what, ExitCode::nonconvergence) {}
    NonConvergence(const std::string& what, ExitCode code) : Error(what, code) {}
};

}  // namespace sigmaflow
