#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/rng.hpp"
#include "kinetic_exit/dynamics/transition.hpp"

namespace kinetic_exit::dynamics {

/// Position of the integrated Brownian motion (noise sigma) at the first time
/// its velocity reaches 0, starting from p > 0. Returns +inf if the position
/// has run beyond q + `far` (the law has a q^{-1/3} tail) or the step budget
/// is exhausted.
///
/// Steps are h = `step_factor` p^2 / sigma^2, so a sign change hidden between
/// two positive velocities has probability about exp(-2 / step_factor). A step
/// ending at p <= 0 is bisected with exact bridge midpoints, keeping the half
/// whose end velocity is first non-positive, until the q-increment over the
/// remaining interval is below `tol`.
inline double position_at_velocity_zero(PhaseState start, double sigma, Rng& rng, double far = 1e9,
                                        std::uint64_t max_steps = 2000000, double step_factor = 0.05,
                                        double tol = 1e-10) {
    if (!(start.p > 0.0)) throw DomainError("position_at_velocity_zero: requires p > 0");
    const IbmKernel kernel(sigma);
    const double s2 = sigma * sigma;
    Vec2 x{start.q, start.p};
    for (std::uint64_t step = 0; step < max_steps; ++step) {
        if (x.q - start.q > far) break;
        const double h = std::max(step_factor * x.p * x.p / s2, 1e-300);
        const Vec2 y = kernel.sample(x, 0.0, h, rng);
        if (y.p > 0.0) {
            x = y;
            continue;
        }
        Vec2 a = x, b = y;
        double len = h;
        while (std::abs(b.q - a.q) + sigma * len * std::sqrt(len) > tol * std::max(1.0, std::abs(a.q))) {
            const Vec2 mid = kernel.bridge(a, b, 0.0, len, rng);
            if (mid.p <= 0.0)
                b = mid;
            else
                a = mid;
            len *= 0.5;
        }
        return a.q;
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace kinetic_exit::dynamics
