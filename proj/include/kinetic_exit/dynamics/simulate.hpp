#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <variant>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/linalg2.hpp"
#include "kinetic_exit/dynamics/rng.hpp"
#include "kinetic_exit/dynamics/transition.hpp"

namespace kinetic_exit::dynamics {

struct SimConfig {
    double dt = 0.01;
    double t_horizon = 1.0;
    std::uint64_t n_paths = 1;
    std::uint64_t seed = 0;
    double refine_threshold = 0.1;
    int max_refine_depth = 6;

    void validate() const {
        if (!std::isfinite(dt) || !(dt > 0.0)) throw ConfigError("dt must be > 0");
        if (!std::isfinite(t_horizon) || !(t_horizon > 0.0)) throw ConfigError("t_horizon must be > 0");
        if (dt > t_horizon) throw ConfigError("dt must not exceed t_horizon");
        if (n_paths < 1) throw ConfigError("n_paths must be >= 1");
        if (!(refine_threshold > 0.0 && refine_threshold < 1.0))
            throw ConfigError("refine_threshold must lie in (0,1)");
        if (max_refine_depth < 0 || max_refine_depth > 30) throw ConfigError("max_refine_depth must lie in [0,30]");
    }

    friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

/// Which positions kill the path: the strip (0,1), the half-line q > 0, or
/// nothing (free paths, used for the unkilled Girsanov normalisation).
enum class KillRegion { Strip, HalfLine, None };

enum class ExitStatus { Survived, Exited };

struct ExitOutcome {
    ExitStatus status = ExitStatus::Survived;
    PhaseState final_state{};
    double exit_time = 0.0;
    int exit_side = -1;
    double exit_velocity = 0.0;

    bool exited() const { return status == ExitStatus::Exited; }

    /// State at the stopping time t ^ tau (the exit point on the boundary for
    /// exited paths).
    PhaseState stopped_state() const {
        return exited() ? PhaseState{static_cast<double>(exit_side), exit_velocity} : final_state;
    }

    friend bool operator==(const ExitOutcome&, const ExitOutcome&) = default;
};

/// Running path integrals along a simulated path (trapezoid on the traversed grid).
struct PathWeight {
    double log_weight = 0.0;
    double int_p2 = 0.0;
    double int_q2 = 0.0;
    double int_q = 0.0;
    double sigma = 0.0;
};

struct Ibm {
    double sigma = 1.0;
};
struct Linear {
    ModelParams params;
};
struct Eta {
    double eta = 0.0;
    double sigma = 1.0;
};

using ProcessKind = std::variant<Ibm, Linear, Eta>;

inline double kind_sigma(const ProcessKind& k) {
    return std::visit(
        [](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Linear>)
                return v.params.sigma;
            else
                return v.sigma;
        },
        k);
}

namespace detail {

// Hermite cubic of the position over a step of length h, in local time s in [0,1].
struct Cubic {
    double c0, c1, c2, c3;

    Cubic(Vec2 x0, Vec2 x1, double h)
        : c0(x0.q),
          c1(h * x0.p),
          c2(-3.0 * x0.q - 2.0 * h * x0.p + 3.0 * x1.q - h * x1.p),
          c3(2.0 * x0.q + h * x0.p - 2.0 * x1.q + h * x1.p) {}

    double operator()(double s) const { return c0 + s * (c1 + s * (c2 + s * c3)); }

    void range(double& lo, double& hi) const {
        lo = std::min(c0, (*this)(1.0));
        hi = std::max(c0, (*this)(1.0));
        // stationary points: c1 + 2 c2 s + 3 c3 s^2 = 0
        const double a = 3.0 * c3, b = 2.0 * c2, c = c1;
        auto consider = [&](double s) {
            if (s > 0.0 && s < 1.0) {
                const double v = (*this)(s);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        };
        if (std::abs(a) < 1e-300) {
            if (b != 0.0) consider(-c / b);
            return;
        }
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) return;
        const double sq = std::sqrt(disc);
        const double qq = -0.5 * (b + std::copysign(sq, b));
        if (qq != 0.0) consider(c / qq);
        consider(qq / a);
    }

    // First s in [0,1] with the cubic at or beyond `level` (from below if
    // upward, from above otherwise). Returns 1 if only the end point qualifies.
    double first_hit(double level, bool upward) const {
        auto beyond = [&](double s) { return upward ? (*this)(s) >= level : (*this)(s) <= level; };
        constexpr int kScan = 32;
        double prev = 0.0;
        for (int i = 1; i <= kScan; ++i) {
            const double s = static_cast<double>(i) / kScan;
            if (beyond(s)) {
                double lo = prev, hi = s;
                for (int it = 0; it < 60; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (beyond(mid))
                        hi = mid;
                    else
                        lo = mid;
                }
                return hi;
            }
            prev = s;
        }
        return 1.0;
    }
};

inline double boundary_distance(double q, KillRegion kill) {
    switch (kill) {
        case KillRegion::Strip:
            return std::min(q, 1.0 - q);
        case KillRegion::HalfLine:
            return q;
        case KillRegion::None:
            break;
    }
    return std::numeric_limits<double>::infinity();
}

inline bool outside(double q, KillRegion kill) {
    switch (kill) {
        case KillRegion::Strip:
            return q <= 0.0 || q >= 1.0;
        case KillRegion::HalfLine:
            return q <= 0.0;
        case KillRegion::None:
            break;
    }
    return false;
}

inline void accumulate(PathWeight* w, Vec2 a, Vec2 b, double h) {
    if (!w) return;
    w->int_p2 += 0.5 * h * (a.p * a.p + b.p * b.p);
    w->int_q2 += 0.5 * h * (a.q * a.q + b.q * b.q);
    w->int_q += 0.5 * h * (a.q + b.q);
}

}  // namespace detail

/// Simulate one path of `kernel` from `start` at time t_start for a duration
/// config.t_horizon, killed on leaving the region.
///
/// Steps are exact transitions of length dt, shortened by powers of two when
/// the path is within refine_threshold of a killing boundary (so that a
/// single step's noise scale sigma h^{3/2} stays below the distance). Within
/// a step, the Hermite cubic through the end points is compared with the
/// boundaries; if it comes within sigma h^{3/2} of one, or an end point lies
/// outside, the step is bisected by sampling the exact Gaussian bridge at the
/// midpoint, recursively up to max_refine_depth levels. On the finest
/// suspicious interval the exit is placed at the first crossing of the cubic
/// and the exit velocity is interpolated linearly.
template <class Kernel>
ExitOutcome simulate_path(const Kernel& kernel, PhaseState start, const SimConfig& config, Rng& rng,
                          KillRegion kill = KillRegion::Strip, PathWeight* weight = nullptr, double t_start = 0.0) {
    if (kill == KillRegion::Strip && !start.interior()) throw DomainError("simulate: start must be interior");
    if (kill == KillRegion::HalfLine && !(start.q > 0.0)) throw DomainError("simulate: start must have q > 0");
    const double sigma = kernel.sigma();
    if (weight) weight->sigma = sigma;
    const double t_end = t_start + config.t_horizon;
    const int depth_max = config.max_refine_depth;

    struct Node {
        Vec2 x0, x1;
        double t, h;
        int depth;
    };
    std::array<Node, 64> stack{};

    Vec2 x{start};
    double t = t_start;
    while (t < t_end) {
        double h = std::min(config.dt, t_end - t);
        const double d = detail::boundary_distance(x.q, kill);
        if (d < config.refine_threshold) {
            const double hstar = std::pow(d / (3.0 * sigma), 2.0 / 3.0);
            int k = 0;
            while (k < depth_max && h > hstar) {
                h *= 0.5;
                ++k;
            }
        }
        const double t_next = (h == t_end - t) ? t_end : t + h;
        h = t_next - t;
        const Vec2 x_next = kernel.sample(x, t, h, rng);

        if (kill == KillRegion::None) {
            detail::accumulate(weight, x, x_next, h);
            x = x_next;
            t = t_next;
            continue;
        }

        int top = 0;
        stack[top++] = {x, x_next, t, h, 0};
        while (top > 0) {
            const Node n = stack[--top];
            const detail::Cubic cub(n.x0, n.x1, n.h);
            double lo, hi;
            cub.range(lo, hi);
            const double margin = sigma * n.h * std::sqrt(n.h);
            const bool end_out = detail::outside(n.x1.q, kill);
            const bool near = lo < margin || (kill == KillRegion::Strip && hi > 1.0 - margin);
            if ((end_out || near) && n.depth < depth_max) {
                const double hh = 0.5 * n.h;
                const Vec2 mid = kernel.bridge(n.x0, n.x1, n.t, n.h, rng);
                stack[top++] = {mid, n.x1, n.t + hh, hh, n.depth + 1};
                stack[top++] = {n.x0, mid, n.t, hh, n.depth + 1};
                continue;
            }
            const bool hits0 = lo <= 0.0;
            const bool hits1 = kill == KillRegion::Strip && hi >= 1.0;
            if (end_out || hits0 || hits1) {
                double s0 = 2.0, s1 = 2.0;
                if (hits0 || n.x1.q <= 0.0) s0 = cub.first_hit(0.0, false);
                if (kill == KillRegion::Strip && (hits1 || n.x1.q >= 1.0)) s1 = cub.first_hit(1.0, true);
                const bool right = s1 < s0;
                const double s = std::min(s0, s1);
                ExitOutcome out;
                out.status = ExitStatus::Exited;
                out.exit_time = n.t + s * n.h;
                out.exit_side = right ? 1 : 0;
                const double v = n.x0.p + s * (n.x1.p - n.x0.p);
                // the crossing is through the exit set; keep the sign consistent
                out.exit_velocity = right ? std::max(v, 0.0) : std::min(v, 0.0);
                detail::accumulate(weight, n.x0, Vec2{cub(s), v}, s * n.h);
                return out;
            }
            detail::accumulate(weight, n.x0, n.x1, n.h);
        }
        x = x_next;
        t = t_next;
    }
    ExitOutcome out;
    out.final_state = x.state();
    return out;
}

/// Kernel for a process kind (the variant is resolved once per block, not per step).
template <class F>
decltype(auto) with_kernel(const ProcessKind& kind, F&& f) {
    return std::visit(
        [&](const auto& k) -> decltype(auto) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, Ibm>)
                return f(IbmKernel(k.sigma));
            else if constexpr (std::is_same_v<T, Linear>)
                return f(LinearKernel(k.params));
            else
                return f(EtaKernel(k.eta, k.sigma));
        },
        kind);
}

/// Single-path entry point over the process variant.
inline ExitOutcome simulate_until_exit(const ProcessKind& kind, PhaseState start, const SimConfig& config, Rng& rng,
                                       PathWeight* weight = nullptr, KillRegion kill = KillRegion::Strip) {
    config.validate();
    return with_kernel(kind, [&](const auto& kernel) {
        return simulate_path(kernel, start, config, rng, kill, weight);
    });
}

}  // namespace kinetic_exit::dynamics
