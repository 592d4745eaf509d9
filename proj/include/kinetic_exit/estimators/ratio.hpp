#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/estimators/survival.hpp"
#include "kinetic_exit/specfun/envelopes.hpp"

namespace kinetic_exit::estimators {

struct GridPoint {
    double q = 0.5, p = 0.0, t = 1.0;
};

struct RatioPoint {
    GridPoint point;
    Estimate survival;
    double envelope = 0.0;
    double ratio = 0.0;
    double ratio_se = 0.0;
    double ratio_lo = 0.0;
    double ratio_hi = 0.0;
    bool low_confidence = false;  ///< fewer than kMinSuccesses surviving paths
};

inline constexpr double kMinSuccesses = 25.0;

struct RatioTable {
    std::vector<RatioPoint> points;
    double ratio_min = std::numeric_limits<double>::quiet_NaN();
    double ratio_max = std::numeric_limits<double>::quiet_NaN();
    std::size_t argmin = 0, argmax = 0;
    std::size_t n_used = 0;

    double min_se() const { return points.at(argmin).ratio_se; }
    double max_se() const { return points.at(argmax).ratio_se; }
    double spread() const { return ratio_max / ratio_min; }

    /// Recompute the extremes over points with enough successes.
    void finalize() {
        n_used = 0;
        ratio_min = std::numeric_limits<double>::infinity();
        ratio_max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points.size(); ++i) {
            const RatioPoint& r = points[i];
            if (r.low_confidence) continue;
            ++n_used;
            if (r.ratio < ratio_min) {
                ratio_min = r.ratio;
                argmin = i;
            }
            if (r.ratio > ratio_max) {
                ratio_max = r.ratio;
                argmax = i;
            }
        }
        if (n_used == 0) {
            ratio_min = ratio_max = std::numeric_limits<double>::quiet_NaN();
        }
    }
};

/// (q, p) in {0.05, 0.10, ..., 0.95} x {-p_max, ..., p_max} (unit velocity step).
inline std::vector<GridPoint> standard_grid(double t, int p_max = 3) {
    std::vector<GridPoint> g;
    for (int i = 1; i <= 19; ++i)
        for (int j = -p_max; j <= p_max; ++j) g.push_back({0.05 * i, static_cast<double>(j), t});
    return g;
}

/// Stream id of a grid point: a hash of its coordinates, so that the same
/// point always sees the same paths whichever grid it belongs to.
inline std::uint64_t point_stream(const GridPoint& g, std::uint64_t salt = 0) {
    std::uint64_t s = salt ^ 0x6A09E667F3BCC909ULL;
    for (double v : {g.q, g.p, g.t}) {
        s ^= std::bit_cast<std::uint64_t>(v + 0.0);
        s = dynamics::splitmix64(s);
    }
    return s;
}

/// Envelope matching the process kind: H(q, p/sigma^{2/3}) for the integrated
/// Brownian motion, G_{eta,sigma} for the eta-process, H_{alpha,beta,gamma,sigma}
/// for the general linear model.
inline double kind_envelope(const ProcessKind& kind, double q, double p) {
    return std::visit(
        [&](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, dynamics::Ibm>)
                return specfun::envelope_H(q, p / std::cbrt(k.sigma * k.sigma));
            else if constexpr (std::is_same_v<T, dynamics::Linear>)
                return specfun::envelope_Hfull(k.params, q, p);
            else
                return specfun::envelope_G(k.eta, k.sigma, q, p);
        },
        kind);
}

inline RatioPoint make_ratio_point(const GridPoint& g, const Estimate& e, double envelope) {
    RatioPoint r;
    r.point = g;
    r.survival = e;
    r.envelope = envelope;
    if (!(envelope > 0.0) || !std::isfinite(envelope)) throw EstimationError("ratio: envelope must be positive");
    r.ratio = e.mean / envelope;
    r.ratio_se = e.std_err / envelope;
    r.ratio_lo = e.ci_lo / envelope;
    r.ratio_hi = e.ci_hi / envelope;
    r.low_confidence = e.mean * static_cast<double>(e.n_paths) < kMinSuccesses;
    return r;
}

/// P(tau > t)/envelope over the grid.
inline RatioTable ratio_scan(const ProcessKind& kind, const std::vector<GridPoint>& grid, const SimConfig& config,
                             std::uint64_t salt = 0) {
    RatioTable table;
    table.points.reserve(grid.size());
    for (const GridPoint& g : grid) {
        if (!(g.q > 0.0 && g.q < 1.0)) throw DomainError("ratio_scan: grid points must be interior");
        const Estimate e = exit_prob_mc(kind, {g.q, g.p}, g.t, config, point_stream(g, salt));
        table.points.push_back(make_ratio_point(g, e, kind_envelope(kind, g.q, g.p)));
    }
    table.finalize();
    return table;
}

/// ratio_scan for the eta-process against G_{eta,sigma}.
inline RatioTable eta_ratio_scan(double eta, double sigma, const std::vector<GridPoint>& grid,
                                 const SimConfig& config, std::uint64_t salt = 0) {
    return ratio_scan(dynamics::Eta{eta, sigma}, grid, config, salt);
}

/// Largest shift of the two extremes between two scans, in combined standard errors.
struct ExtremeShift {
    double min_z = 0.0, max_z = 0.0;
    double worst() const { return std::max(min_z, max_z); }
};

inline ExtremeShift extreme_shift(const RatioTable& a, const RatioTable& b) {
    return {combined_z(a.ratio_min, a.min_se(), b.ratio_min, b.min_se()),
            combined_z(a.ratio_max, a.max_se(), b.ratio_max, b.max_se())};
}

}  // namespace kinetic_exit::estimators
