#pragma once

#include <cmath>
#include <numbers>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/specfun/gamma.hpp"
#include "kinetic_exit/specfun/quadrature.hpp"

// Closed-form hitting laws of the integrated Brownian motion (sigma = 1),
// used as Monte Carlo oracles.

namespace kinetic_exit::specfun {

/// 2F1(1/6, 5/6; 7/6; q) from its Euler integral, valid on all of [0,1].
inline double hyp2f1_exit_side(double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("hyp2f1_exit_side: requires 0 <= q <= 1");
    auto integrand = [q](double, double da, double db) {
        // 1 - q x = (1 - q) + q (1 - x)
        const double one_minus_qx = (1.0 - q) + q * db;
        return std::pow(da, -1.0 / 6.0) * std::pow(db, -2.0 / 3.0) * std::pow(one_minus_qx, -1.0 / 6.0);
    };
    const double integral = tanh_sinh(integrand, 0.0, 1.0, {1e-14, 14, 0.0}).value;
    return integral / beta_fn(5.0 / 6.0, 1.0 / 3.0);
}

/// P_{(q,0)}(tau_0 > tau_1): probability that the integrated Brownian motion
/// started at rest at q leaves (0,1) through 1.
inline double exit_right_first_prob_at_rest(double q) {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("exit_right_first_prob_at_rest: requires 0 < q < 1");
    const double g16 = gamma_fn(1.0 / 6.0);
    return 6.0 * gamma_fn(1.0 / 3.0) / (g16 * g16) * std::pow(q, 1.0 / 6.0) * hyp2f1_exit_side(q);
}

inline double velocity_zero_density_constant() {
    return gamma_fn(2.0 / 3.0) / (std::numbers::pi * std::pow(2.0, 2.0 / 3.0) * std::pow(3.0, 1.0 / 6.0));
}

/// Density at z of the position when the velocity first hits 0, starting from
/// (q, p) with p > 0.
inline double velocity_zero_position_density(double q, double p, double z) {
    if (!(p > 0.0)) throw DomainError("velocity_zero_position_density: requires p > 0");
    if (!(z > q)) throw DomainError("velocity_zero_position_density: requires z > q");
    const double d = z - q;
    return velocity_zero_density_constant() * p * std::pow(d, -4.0 / 3.0) * std::exp(-2.0 * p * p * p / (9.0 * d));
}

/// Distribution function of the same law, by quadrature of the density in
/// v = 1/(z - q).
inline double velocity_zero_position_cdf(double q, double p, double z) {
    if (!(p > 0.0)) throw DomainError("velocity_zero_position_cdf: requires p > 0");
    if (z <= q) return 0.0;
    const double c = 2.0 * p * p * p / 9.0;
    const double v0 = 1.0 / (z - q);
    // int_{v0}^inf K p v^{-2/3} e^{-c v} dv
    auto f = [&](double v, double) { return std::pow(v, -2.0 / 3.0) * std::exp(-c * v); };
    const double tail = exp_sinh(f, v0, {1e-13, 12, 0.0}).value;
    return velocity_zero_density_constant() * p * tail;
}

/// Total mass of the same density, by quadrature over v = 1/(z - q) in (0, inf).
inline double velocity_zero_total_mass(double q, double p) {
    if (!(p > 0.0)) throw DomainError("velocity_zero_total_mass: requires p > 0");
    (void)q;
    const double c = 2.0 * p * p * p / 9.0;
    auto f = [&](double v, double) { return std::pow(v, -2.0 / 3.0) * std::exp(-c * v); };
    return velocity_zero_density_constant() * p * exp_sinh(f, 0.0, {1e-13, 12, 0.0}).value;
}

}  // namespace kinetic_exit::specfun
