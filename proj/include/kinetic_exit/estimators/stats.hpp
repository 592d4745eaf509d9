#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "kinetic_exit/core.hpp"

namespace kinetic_exit::estimators {

/// Regularised upper incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_q: requires a > 0, x >= 0");
    if (x == 0.0) return 1.0;
    const double log_pre = a * std::log(x) - x - std::lgamma(a);
    if (x < a + 1.0) {
        double term = 1.0 / a, sum = term;
        for (int n = 1; n < 10000; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < 1e-16 * std::abs(sum)) break;
        }
        return std::max(0.0, 1.0 - sum * std::exp(log_pre));
    }
    // Lentz continued fraction
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, f = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return std::exp(log_pre) * f;
}

/// P(chi^2_k > x).
inline double chi_square_sf(double x, double k) { return gamma_q(0.5 * k, 0.5 * x); }

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|; `sample` is sorted
/// in place. Infinite entries stand for values known only to exceed `far`;
/// the supremum is then taken over z <= far.
inline double ks_statistic(std::vector<double>& sample, const std::function<double(double)>& cdf,
                           double far = INFINITY) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        if (!std::isfinite(sample[i])) {
            if (std::isfinite(far)) d = std::max(d, std::abs(cdf(far) - i / n));
            break;
        }
        const double f = cdf(sample[i]);
        d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
    }
    return d;
}

/// Asymptotic 1% critical value of the KS statistic for n samples.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

}  // namespace kinetic_exit::estimators
