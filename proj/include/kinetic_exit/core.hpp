#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace kinetic_exit {

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a Monte Carlo estimator cannot produce a meaningful answer
/// (all particles extinct, survival exhausted before a fit window, too few
/// survivors at a checkpoint, indistinguishable estimates in a fit).
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point of the phase space: position q and velocity p.
struct PhaseState {
    double q = 0.0;
    double p = 0.0;

    bool interior() const { return q > 0.0 && q < 1.0; }
    friend bool operator==(const PhaseState&, const PhaseState&) = default;
};

enum class BoundaryClass { Interior, Exiting, Entering, Singular, Outside };

/// Boundary classification of the strip (0,1) x R: exiting velocity (Gamma+),
/// entering velocity (Gamma-), tangential (Gamma0).
inline BoundaryClass classify(const PhaseState& s) {
    if (s.interior()) return BoundaryClass::Interior;
    if (s.q == 0.0) {
        if (s.p < 0.0) return BoundaryClass::Exiting;
        if (s.p > 0.0) return BoundaryClass::Entering;
        return BoundaryClass::Singular;
    }
    if (s.q == 1.0) {
        if (s.p > 0.0) return BoundaryClass::Exiting;
        if (s.p < 0.0) return BoundaryClass::Entering;
        return BoundaryClass::Singular;
    }
    return BoundaryClass::Outside;
}

/// Coefficients of dq = p dt, dp = -(alpha q + beta) dt - gamma p dt + sigma dB.
struct ModelParams {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double sigma = 1.0;

    void validate() const {
        if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma) ||
            !std::isfinite(sigma))
            throw ConfigError("model parameters must be finite");
        if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
        if (sigma <= 0.0) throw ConfigError("sigma must be > 0");
    }

    /// sqrt(alpha + gamma^2/2)/sqrt(11), the G-envelope rate for the full model.
    double lambda_eff() const { return std::sqrt((alpha + 0.5 * gamma * gamma) / 11.0); }

    bool is_free() const { return alpha == 0.0 && beta == 0.0 && gamma == 0.0; }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

}  // namespace kinetic_exit
