#pragma once

#include <algorithm>
#include <cmath>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/specfun/g_function.hpp"

namespace kinetic_exit::specfun {

/// h(q,p) = q^{1/6} g(p / q^{1/3}), harmonic for the integrated Brownian
/// generator on q > 0. Extended by 0 on {q = 0, p <= 0}.
inline double h(double q, double p) {
    if (!std::isfinite(q) || !std::isfinite(p)) throw DomainError("h: arguments must be finite");
    if (q > 0.0) return std::pow(q, 1.0 / 6.0) * g(p / std::cbrt(q));
    if (q == 0.0 && p <= 0.0) return 0.0;
    throw DomainError("h: requires q > 0 (or q = 0 with p <= 0)");
}

/// log h(q,p) for q > 0; no underflow for strongly negative velocities.
inline double log_h(double q, double p) {
    if (!(q > 0.0)) throw DomainError("log_h: requires q > 0");
    return std::log(q) / 6.0 + g_log(p / std::cbrt(q));
}

namespace detail {
inline void require_open_strip(double q, const char* who) {
    if (!(q > 0.0 && q < 1.0)) throw DomainError(std::string(who) + ": requires 0 < q < 1");
}
}  // namespace detail

/// H(q,p) = min(h(q,p), h(1-q,-p)).
inline double envelope_H(double q, double p) {
    detail::require_open_strip(q, "envelope_H");
    return std::min(h(q, p), h(1.0 - q, -p));
}

/// G_{lambda,sigma}(q,p) = min(h(q, v), e^{-3 lambda p/sigma^2} h(1-q, -v)),
/// v = (p + 3 lambda q)/sigma^{2/3}.
inline double envelope_G(double lambda, double sigma, double q, double p) {
    detail::require_open_strip(q, "envelope_G");
    if (!(lambda >= 0.0)) throw DomainError("envelope_G: requires lambda >= 0");
    if (!(sigma > 0.0)) throw DomainError("envelope_G: requires sigma > 0");
    const double v = (p + 3.0 * lambda * q) / std::cbrt(sigma * sigma);
    const double left = h(q, v);
    const double right = std::exp(-3.0 * lambda * p / (sigma * sigma)) * h(1.0 - q, -v);
    return std::min(left, right);
}

/// Gaussian-type correction factor T_{alpha,beta,gamma,sigma}(q,p).
inline double envelope_T(const ModelParams& m, double q, double p) {
    const double s2 = m.sigma * m.sigma;
    const double quad = m.gamma / 2.0 - 2.0 * std::sqrt((m.alpha + m.gamma * m.gamma / 2.0) / 11.0);
    const double cross = 8.0 * m.alpha / 11.0 - 3.0 * m.gamma * m.gamma / 22.0;
    return std::exp(-(p * p / s2) * quad - (q * p / s2) * cross - m.beta * p / s2);
}

/// H_{alpha,beta,gamma,sigma} = T * G_{lambda_eff, sigma}.
inline double envelope_Hfull(const ModelParams& m, double q, double p) {
    detail::require_open_strip(q, "envelope_Hfull");
    return envelope_T(m, q, p) * envelope_G(m.lambda_eff(), m.sigma, q, p);
}

}  // namespace kinetic_exit::specfun
