#pragma once

#include <algorithm>
#include <cmath>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/specfun/gamma.hpp"
#include "kinetic_exit/specfun/quadrature.hpp"

namespace kinetic_exit::specfun {

/// Confluent hypergeometric function of the second kind from its Laplace
/// integral, U(a,b,x) = Gamma(a)^-1 int_0^inf e^{-xt} t^{a-1} (1+t)^{b-a-1} dt.
///
/// For x > 1 the variable is rescaled (t = tau/x) so the exponential decays on
/// a unit scale. The integral is then split at tau = 1: on [0,1] the
/// substitution tau = s^{1/a} removes the tau^{a-1} endpoint singularity, and
/// [1,inf) uses exp-sinh nodes.
inline double kummer_u(double a, double b, double x) {
    if (!(a > 0.0)) throw DomainError("kummer_u: requires a > 0");
    if (!(x > 0.0)) throw DomainError("kummer_u: requires x > 0");
    const double c = b - a - 1.0;
    const double inv_a = 1.0 / a;
    const double scale = std::max(x, 1.0);
    const double rate = x / scale;
    const QuadratureOptions opt{1e-14, 12, 0.0};

    auto head = [&](double s, double, double) {
        const double tau = std::pow(s, inv_a);
        return std::exp(-rate * tau) * std::pow(1.0 + tau / scale, c);
    };
    const double i0 = inv_a * tanh_sinh(head, 0.0, 1.0, opt).value;

    auto tail = [&](double tau, double) {
        const double e = std::exp(-rate * tau);
        if (e == 0.0) return 0.0;
        return e * std::pow(tau, a - 1.0) * std::pow(1.0 + tau / scale, c);
    };
    const double i1 = exp_sinh(tail, 1.0, {opt.rel_tol, opt.max_level, 1e-17 * i0}).value;
    return std::pow(scale, -a) * (i0 + i1) / gamma_fn(a);
}

/// Kummer's function M(a,b,x) by its power series. Intended for |x| of order
/// one; used for the entire-function form of g near the origin.
inline double kummer_m_series(double a, double b, double x) {
    double term = 1.0;
    double sum = 1.0;
    for (int n = 0; n < 500; ++n) {
        term *= (a + n) / (b + n) * x / (n + 1.0);
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) return sum;
    }
    throw ConvergenceError("kummer_m_series: series did not converge");
}

}  // namespace kinetic_exit::specfun
