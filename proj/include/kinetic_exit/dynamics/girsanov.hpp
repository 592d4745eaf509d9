#pragma once

#include <cmath>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/simulate.hpp"

namespace kinetic_exit::dynamics {

/// log Z_t for the change of measure from the integrated Brownian motion with
/// noise sigma to the linear Langevin model, after integrating the stochastic
/// integral by parts so that only end points and the time integrals of p^2,
/// q^2 and q remain:
///
///   log Z = -(a/s2)(q_t p_t - q_0 p_0) - (b/s2)(p_t - p_0) - (g/(2 s2))(p_t^2 - p_0^2) + g t/2
///           + ((a - g^2/2)/s2) int p^2 - (g a/(2 s2))(q_t^2 - q_0^2) - (g b/s2)(q_t - q_0)
///           - (1/(2 s2)) (a^2 int q^2 + 2 a b int q) - b^2 t/(2 s2)
///
/// with (a, b, g, s2) = (alpha, beta, gamma, sigma^2).
inline double girsanov_log_weight_endpoint(const ModelParams& m, const PhaseState& start, const PhaseState& end,
                                           double t, const PathWeight& w) {
    if (w.sigma != 0.0 && w.sigma != m.sigma)
        throw ConfigError("girsanov_log_weight_endpoint: integrals were accumulated with a different sigma");
    const double a = m.alpha, b = m.beta, g = m.gamma, s2 = m.sigma * m.sigma;
    const double q0 = start.q, p0 = start.p, q1 = end.q, p1 = end.p;
    double lw = 0.0;
    lw -= a / s2 * (q1 * p1 - q0 * p0);
    lw -= b / s2 * (p1 - p0);
    lw -= g / (2.0 * s2) * (p1 * p1 - p0 * p0);
    lw += 0.5 * g * t;
    lw += (a - 0.5 * g * g) / s2 * w.int_p2;
    lw -= g * a / (2.0 * s2) * (q1 * q1 - q0 * q0);
    lw -= g * b / s2 * (q1 - q0);
    lw -= (a * a * w.int_q2 + 2.0 * a * b * w.int_q) / (2.0 * s2);
    lw -= b * b * t / (2.0 * s2);
    return lw;
}

}  // namespace kinetic_exit::dynamics
