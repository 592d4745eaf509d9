#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "kinetic_exit/core.hpp"

namespace kinetic_exit::estimators {

/// Two-sided standard normal quantile for the default 99% level.
inline constexpr double kZ99 = 2.5758293035489004;

struct Estimate {
    double mean = 0.0;
    double std_err = 0.0;
    std::uint64_t n_paths = 0;
    double ci_level = 0.99;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

/// Bernoulli proportion with Wilson score interval.
inline Estimate bernoulli_estimate(std::uint64_t successes, std::uint64_t n, double z = kZ99, double level = 0.99) {
    if (n == 0) throw EstimationError("bernoulli_estimate: no samples");
    const double nn = static_cast<double>(n);
    const double ph = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (ph + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn)) / denom;
    Estimate e;
    e.mean = ph;
    e.std_err = std::sqrt(ph * (1.0 - ph) / nn);
    e.n_paths = n;
    e.ci_level = level;
    e.ci_lo = std::clamp(centre - half, 0.0, ph);
    e.ci_hi = std::clamp(centre + half, ph, 1.0);
    return e;
}

/// Sample mean with normal-theory interval.
inline Estimate mean_estimate(double mean, double std_err, std::uint64_t n, double z = kZ99, double level = 0.99) {
    Estimate e;
    e.mean = mean;
    e.std_err = std_err;
    e.n_paths = n;
    e.ci_level = level;
    e.ci_lo = mean - z * std_err;
    e.ci_hi = mean + z * std_err;
    return e;
}

/// Running sums for a scalar sample (merged pairwise by the block engine).
struct Moments {
    std::uint64_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double x) {
        ++n;
        sum += x;
        sum_sq += x * x;
    }
    void merge(const Moments& o) {
        n += o.n;
        sum += o.sum;
        sum_sq += o.sum_sq;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double variance() const {
        if (n < 2) return 0.0;
        const double m = mean();
        return std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
    }
    double std_err() const { return n ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
    Estimate estimate() const { return mean_estimate(mean(), std_err(), n); }
};

/// |a - b| / sqrt(se_a^2 + se_b^2); 0 when both errors vanish and a == b.
inline double combined_z(double a, double se_a, double b, double se_b) {
    const double s = std::sqrt(se_a * se_a + se_b * se_b);
    if (s == 0.0) return a == b ? 0.0 : INFINITY;
    return std::abs(a - b) / s;
}

inline double combined_z(const Estimate& a, const Estimate& b) { return combined_z(a.mean, a.std_err, b.mean, b.std_err); }

}  // namespace kinetic_exit::estimators
