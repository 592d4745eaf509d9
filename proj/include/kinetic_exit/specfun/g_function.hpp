#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/specfun/gamma.hpp"
#include "kinetic_exit/specfun/kummer.hpp"

// The harmonic profile g solves  g''/2 - (z^2/3) g' + (z/6) g = 0,
// grows like sqrt(z) at +inf and decays like exp(-2|z|^3/9)|z|^{-5/2} at -inf.
// We tabulate F = log g together with F' and F'' on a uniform grid and
// evaluate by quintic Hermite interpolation. F' solves the Riccati equation
//   u' = (2 z^2/3) u - z/3 - u^2,
// which is contracting when integrated towards increasing z on z < 0, so the
// negative half-line is produced by integrating from far out towards 0 and
// normalising with the closed-form g(0).

namespace kinetic_exit::specfun {

/// g(0) = (2/9)^{-1/6} Gamma(1/3)/Gamma(1/6).
inline double g_at_zero() {
    return std::pow(2.0 / 9.0, -1.0 / 6.0) * gamma_fn(1.0 / 3.0) / gamma_fn(1.0 / 6.0);
}

/// g'(0) = (2/9)^{1/6} Gamma(-1/3)/Gamma(-1/6), from the small-x expansion of U.
inline double g_prime_at_zero() {
    return std::pow(2.0 / 9.0, 1.0 / 6.0) * gamma_fn(-1.0 / 3.0) / gamma_fn(-1.0 / 6.0);
}

/// Leading constant of the z -> -inf asymptotics, (2/9)^{-5/6}/6.
inline double g_left_tail_constant() { return std::pow(2.0 / 9.0, -5.0 / 6.0) / 6.0; }

/// Entire-function form g(z) = g(0) M(-1/6,2/3,2z^3/9) + g'(0) z M(1/6,4/3,2z^3/9).
/// Only accurate for moderate |z| (cancellation for z << 0).
inline double g_series(double z) {
    const double x = 2.0 / 9.0 * z * z * z;
    return g_at_zero() * kummer_m_series(-1.0 / 6.0, 2.0 / 3.0, x) +
           g_prime_at_zero() * z * kummer_m_series(1.0 / 6.0, 4.0 / 3.0, x);
}

inline double g_prime_series(double z) {
    const double x = 2.0 / 9.0 * z * z * z;
    return -g_at_zero() * z * z / 6.0 * kummer_m_series(5.0 / 6.0, 5.0 / 3.0, x) +
           g_prime_at_zero() * (kummer_m_series(1.0 / 6.0, 4.0 / 3.0, x) +
                                z * z * z / 12.0 * kummer_m_series(7.0 / 6.0, 7.0 / 3.0, x));
}

/// g for z > 0 straight from the U representation (slow; the quadrature route).
inline double g_from_u(double z) {
    if (!(z > 0.0)) throw DomainError("g_from_u: requires z > 0");
    return std::pow(2.0 / 9.0, 1.0 / 6.0) * z * kummer_u(1.0 / 6.0, 4.0 / 3.0, 2.0 / 9.0 * z * z * z);
}

namespace detail {

inline double riccati_rhs(double z, double u) { return (2.0 / 3.0) * z * z * u - z / 3.0 - u * u; }

// U(a,b,x) ~ x^{-a} sum_n (a)_n (a-b+1)_n / n! (-1/x)^n, used for x >= 300.
inline double kummer_u_asymptotic(double a, double b, double x) {
    double term = 1.0, sum = 1.0;
    for (int n = 0; n < 60; ++n) {
        term *= -(a + n) * (a - b + 1.0 + n) / ((n + 1.0) * x);
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return std::pow(x, -a) * sum;
}

// Log-asymptotics on the left: 2z^3/9 - (5/2) log|z| + 35/(8 z^3).
inline double left_log_asymptotic(double z) {
    return 2.0 / 9.0 * z * z * z - 2.5 * std::log(-z) + 35.0 / (8.0 * z * z * z);
}

struct GTable {
    static constexpr double z_lo = -14.5;
    static constexpr double z_hi = 12.5;
    static constexpr double step = 1.0 / 256.0;

    std::vector<double> f, df, ddf;  // log g and its first two derivatives
    double riccati_u0 = 0.0;         // F'(0) reached by the left integration
    double floor_z = 0.0;            // g(z) < DBL_MIN for z < floor_z

    std::size_t index_of_zero() const { return static_cast<std::size_t>(std::lround(-z_lo / step)); }

    GTable() {
        const std::size_t n = static_cast<std::size_t>(std::lround((z_hi - z_lo) / step)) + 1;
        f.assign(n, 0.0);
        df.assign(n, 0.0);
        ddf.assign(n, 0.0);
        const std::size_t k0 = index_of_zero();
        const double log_g0 = std::log(g_at_zero());

        // Left half: RK4 on (u, W = int u) from z = -16 upwards.
        {
            constexpr int sub = 16;
            const double h = step / sub;
            double z = -16.0;
            double u = 2.0 / 3.0 * z * z - 2.5 / z - 105.0 / (8.0 * z * z * z * z);
            double w = 0.0;
            std::vector<double> w_nodes(k0 + 1), u_nodes(k0 + 1);
            const long steps_to_lo = std::lround((z_lo - z) / h);
            auto advance = [&]() {
                const double k1u = riccati_rhs(z, u);
                const double k2u = riccati_rhs(z + 0.5 * h, u + 0.5 * h * k1u);
                const double k3u = riccati_rhs(z + 0.5 * h, u + 0.5 * h * k2u);
                const double k4u = riccati_rhs(z + h, u + h * k3u);
                // W' = u, integrated with the same stages.
                w += h / 6.0 * (u + 2.0 * (u + 0.5 * h * k1u) + 2.0 * (u + 0.5 * h * k2u) + (u + h * k3u));
                u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
                z += h;
            };
            for (long i = 0; i < steps_to_lo; ++i) advance();
            z = z_lo;
            for (std::size_t k = 0; k <= k0; ++k) {
                if (k > 0) {
                    for (int i = 0; i < sub; ++i) advance();
                    z = z_lo + static_cast<double>(k) * step;
                }
                u_nodes[k] = u;
                w_nodes[k] = w;
            }
            riccati_u0 = u;
            const double w0 = w_nodes[k0];
            for (std::size_t k = 0; k < k0; ++k) {
                const double zk = z_lo + static_cast<double>(k) * step;
                f[k] = log_g0 - (w0 - w_nodes[k]);
                df[k] = u_nodes[k];
                ddf[k] = riccati_rhs(zk, u_nodes[k]);
            }
        }

        // Right half: series near the origin, U quadrature further out.
        const double c = std::pow(2.0 / 9.0, 1.0 / 6.0);
        for (std::size_t k = k0; k < n; ++k) {
            const double z = z_lo + static_cast<double>(k) * step;
            double g, gp;
            if (k == k0) {
                g = g_at_zero();
                gp = g_prime_at_zero();
            } else if (z <= 1.5) {
                g = g_series(z);
                gp = g_prime_series(z);
            } else {
                const double x = 2.0 / 9.0 * z * z * z;
                const double u1 = kummer_u(1.0 / 6.0, 4.0 / 3.0, x);
                const double u2 = kummer_u(7.0 / 6.0, 7.0 / 3.0, x);
                g = c * z * u1;
                gp = c * (u1 - z * z * z / 9.0 * u2);
            }
            f[k] = std::log(g);
            df[k] = gp / g;
            ddf[k] = riccati_rhs(z, df[k]);
        }

        // Solve left_log_asymptotic(z) + shift = log(DBL_MIN) by bisection.
        const double shift = f[0] - left_log_asymptotic(z_lo);
        const double target = std::log(std::numeric_limits<double>::min());
        double lo = -40.0, hi = z_lo;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            (left_log_asymptotic(mid) + shift < target ? lo : hi) = mid;
        }
        floor_z = hi;
    }

    // Quintic Hermite on the cell containing z, returning (F, F').
    std::pair<double, double> eval(double z) const {
        const double pos = (z - z_lo) / step;
        std::size_t k = static_cast<std::size_t>(pos);
        if (k >= f.size() - 1) k = f.size() - 2;
        const double t = pos - static_cast<double>(k);
        const double h = step;
        const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
        const double h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        const double h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        const double h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        const double h3 = 0.5 * t3 - t4 + 0.5 * t5;
        const double h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        const double h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        const double value = h0 * f[k] + h1 * h * df[k] + h2 * h * h * ddf[k] + h3 * h * h * ddf[k + 1] +
                             h4 * h * df[k + 1] + h5 * f[k + 1];
        // Derivatives of the basis with respect to t.
        const double d0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
        const double d1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        const double d2 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
        const double d3 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
        const double d4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        const double d5 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
        const double slope = (d0 * f[k] + d1 * h * df[k] + d2 * h * h * ddf[k] + d3 * h * h * ddf[k + 1] +
                              d4 * h * df[k + 1] + d5 * f[k + 1]) /
                             h;
        return {value, slope};
    }
};

inline const GTable& g_table() {
    static const GTable table;
    return table;
}

}  // namespace detail

/// log g(z), finite for every finite z (no underflow).
inline double g_log(double z) {
    if (!std::isfinite(z)) throw DomainError("g: argument must be finite");
    using detail::GTable;
    const auto& tab = detail::g_table();
    if (z < GTable::z_lo)
        return tab.f.front() + detail::left_log_asymptotic(z) - detail::left_log_asymptotic(GTable::z_lo);
    if (z > GTable::z_hi) {
        const double x = 2.0 / 9.0 * z * z * z;
        return std::log(std::pow(2.0 / 9.0, 1.0 / 6.0) * z * detail::kummer_u_asymptotic(1.0 / 6.0, 4.0 / 3.0, x));
    }
    return tab.eval(z).first;
}

/// Positions below this value have g(z) smaller than the smallest normal double.
inline double g_floor_threshold() { return detail::g_table().floor_z; }

/// True when g(z) is returned as the smallest positive normal value instead of
/// its (underflowing) exact value.
inline bool g_is_floored(double z) { return z < g_floor_threshold(); }

/// The positive, non-decreasing harmonic profile g. For z below
/// g_floor_threshold() the result is clamped to DBL_MIN so that ratios by g
/// stay finite.
inline double g(double z) {
    const double v = std::exp(g_log(z));
    return std::max(v, std::numeric_limits<double>::min());
}

/// g'(z) (clamped to zero where g itself is floored).
inline double g_prime(double z) {
    if (!std::isfinite(z)) throw DomainError("g_prime: argument must be finite");
    using detail::GTable;
    const auto& tab = detail::g_table();
    double dlog;
    if (z < GTable::z_lo) {
        dlog = 2.0 / 3.0 * z * z - 2.5 / z - 105.0 / (8.0 * z * z * z * z);
    } else if (z > GTable::z_hi) {
        const double x = 2.0 / 9.0 * z * z * z;
        const double c = std::pow(2.0 / 9.0, 1.0 / 6.0);
        const double u1 = detail::kummer_u_asymptotic(1.0 / 6.0, 4.0 / 3.0, x);
        const double u2 = detail::kummer_u_asymptotic(7.0 / 6.0, 7.0 / 3.0, x);
        return c * (u1 - z * z * z / 9.0 * u2);
    } else {
        dlog = tab.eval(z).second;
    }
    if (g_is_floored(z)) return 0.0;
    return g(z) * dlog;
}

}  // namespace kinetic_exit::specfun
