#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "kinetic_exit/core.hpp"

namespace kinetic_exit::specfun {

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    int levels = 0;
};

struct QuadratureOptions {
    double rel_tol = 1e-13;
    int max_level = 12;
    double abs_tol = 0.0;
};

/// Tanh-sinh quadrature on [a, b]. The integrand is called as f(x, da, db)
/// where da = x - a and db = b - x are computed without cancellation, so
/// integrable endpoint singularities can be evaluated accurately.
template <class F>
QuadratureResult tanh_sinh(F&& f, double a, double b, QuadratureOptions opt = {}) {
    using std::numbers::pi;
    if (!(b > a)) throw DomainError("tanh_sinh: empty interval");
    const double half = 0.5 * (b - a);

    // One node at parameter t: returns weighted contribution (without the step h).
    auto node = [&](double t) -> double {
        const double s = 0.5 * pi * std::sinh(t);
        const double c = std::cosh(s);
        const double w = 0.5 * pi * std::cosh(t) / (c * c);
        // 1 - tanh(|s|) = 2 / (1 + exp(2|s|))
        const double e = std::exp(-2.0 * std::abs(s));
        const double one_minus = 2.0 * e / (1.0 + e);
        double da, db;
        if (s >= 0.0) {
            db = half * one_minus;
            da = 2.0 * half - db;
        } else {
            da = half * one_minus;
            db = 2.0 * half - da;
        }
        if (da <= 0.0 || db <= 0.0) return 0.0;
        const double x = (s >= 0.0) ? b - db : a + da;
        return half * w * f(x, da, db);
    };

    auto sweep = [&](double h, double start, double stride) {
        double sum = 0.0;
        for (int sign : {1, -1}) {
            int small_run = 0;
            for (double t = start; t < 7.0; t += stride) {
                if (t == 0.0 && sign < 0) continue;
                const double v = node(sign * t);
                sum += v;
                if (std::abs(v) * h < 1e-18 * std::abs(sum * h) || v == 0.0) {
                    if (++small_run >= 3) break;
                } else {
                    small_run = 0;
                }
            }
        }
        return sum;
    };

    double h = 0.5;
    double sum = sweep(h, 0.0, h);
    double estimate = h * sum;
    QuadratureResult res{estimate, std::numeric_limits<double>::infinity(), 0};
    for (int level = 1; level <= opt.max_level; ++level) {
        h *= 0.5;
        sum += sweep(h, h, 2.0 * h);
        const double next = h * sum;
        res.error_estimate = std::abs(next - estimate);
        res.value = next;
        res.levels = level;
        if (level >= 3 && res.error_estimate <= std::max(opt.rel_tol * std::abs(next), opt.abs_tol)) return res;
        estimate = next;
    }
    if (res.error_estimate > 1e3 * std::max(opt.rel_tol * std::abs(res.value), opt.abs_tol))
        throw ConvergenceError("tanh_sinh: tolerance not reached");
    return res;
}

/// Exp-sinh quadrature on [a, inf). The integrand is called as f(x, da) with
/// da = x - a computed exactly.
template <class F>
QuadratureResult exp_sinh(F&& f, double a, QuadratureOptions opt = {}) {
    using std::numbers::pi;
    auto node = [&](double t) -> double {
        const double s = 0.5 * pi * std::sinh(t);
        if (s > 700.0) return 0.0;
        const double da = std::exp(s);
        if (da == 0.0) return 0.0;
        const double w = 0.5 * pi * std::cosh(t) * da;
        return w * f(a + da, da);
    };
    auto sweep = [&](double h, double start, double stride) {
        double sum = 0.0;
        for (int sign : {1, -1}) {
            int small_run = 0;
            for (double t = start; t < 7.0; t += stride) {
                if (t == 0.0 && sign < 0) continue;
                const double v = node(sign * t);
                sum += v;
                if (std::abs(v) * h < 1e-18 * std::abs(sum * h) || v == 0.0) {
                    if (++small_run >= 3) break;
                } else {
                    small_run = 0;
                }
            }
        }
        return sum;
    };

    double h = 0.5;
    double sum = sweep(h, 0.0, h);
    double estimate = h * sum;
    QuadratureResult res{estimate, std::numeric_limits<double>::infinity(), 0};
    for (int level = 1; level <= opt.max_level; ++level) {
        h *= 0.5;
        sum += sweep(h, h, 2.0 * h);
        const double next = h * sum;
        res.error_estimate = std::abs(next - estimate);
        res.value = next;
        res.levels = level;
        if (level >= 3 && res.error_estimate <= std::max(opt.rel_tol * std::abs(next), opt.abs_tol)) return res;
        estimate = next;
    }
    if (res.error_estimate > 1e3 * std::max(opt.rel_tol * std::abs(res.value), opt.abs_tol))
        throw ConvergenceError("exp_sinh: tolerance not reached");
    return res;
}

}  // namespace kinetic_exit::specfun
