#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "kinetic_exit/core.hpp"

namespace kinetic_exit::specfun {

namespace detail {
// Lanczos approximation, g = 7, n = 9.
inline constexpr double kLanczosG = 7.0;
inline constexpr std::array<double, 9> kLanczosCoef = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
}  // namespace detail

/// Gamma function for real arguments that are not non-positive integers.
inline double gamma_fn(double x) {
    using std::numbers::pi;
    if (x == std::floor(x) && x <= 0.0) throw DomainError("gamma_fn: pole at non-positive integer");
    if (x < 0.5) return pi / (std::sin(pi * x) * gamma_fn(1.0 - x));
    const double z = x - 1.0;
    double a = detail::kLanczosCoef[0];
    const double t = z + detail::kLanczosG + 0.5;
    for (std::size_t i = 1; i < detail::kLanczosCoef.size(); ++i)
        a += detail::kLanczosCoef[i] / (z + static_cast<double>(i));
    return std::sqrt(2.0 * pi) * std::pow(t, z + 0.5) * std::exp(-t) * a;
}

inline double beta_fn(double a, double b) { return gamma_fn(a) * gamma_fn(b) / gamma_fn(a + b); }

}  // namespace kinetic_exit::specfun
