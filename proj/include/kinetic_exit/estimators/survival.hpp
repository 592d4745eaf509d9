#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/girsanov.hpp"
#include "kinetic_exit/dynamics/simulate.hpp"
#include "kinetic_exit/estimators/estimate.hpp"
#include "kinetic_exit/estimators/parallel.hpp"
#include "kinetic_exit/specfun/envelopes.hpp"

namespace kinetic_exit::estimators {

using dynamics::ExitOutcome;
using dynamics::KillRegion;
using dynamics::ProcessKind;
using dynamics::Rng;
using dynamics::SimConfig;

/// Copy of `config` with horizon t (and dt capped at t).
inline SimConfig horizon_config(const SimConfig& config, double t) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("time horizon must be > 0");
    SimConfig c = config;
    c.t_horizon = t;
    c.dt = std::min(c.dt, t);
    c.validate();
    return c;
}

namespace detail {
struct Count {
    std::uint64_t n = 0, hits = 0;
    void merge(const Count& o) {
        n += o.n;
        hits += o.hits;
    }
};
}  // namespace detail

/// P(tau > t) by direct simulation; Wilson interval. `stream` separates
/// independent estimates made with the same seed (grid points, repeats).
inline Estimate exit_prob_mc(const ProcessKind& kind, PhaseState start, double t, const SimConfig& config,
                             std::uint64_t stream = 0, KillRegion kill = KillRegion::Strip) {
    const SimConfig c = horizon_config(config, t);
    const auto acc = dynamics::with_kernel(kind, [&](const auto& proto) {
        return map_reduce<detail::Count>(c.n_paths, [&](std::uint64_t begin, std::uint64_t end) {
            auto kernel = proto;
            detail::Count cnt;
            for (std::uint64_t i = begin; i < end; ++i) {
                Rng rng(c.seed, i, stream);
                const ExitOutcome o = dynamics::simulate_path(kernel, start, c, rng, kill);
                ++cnt.n;
                cnt.hits += o.exited() ? 0 : 1;
            }
            return cnt;
        });
    });
    return bernoulli_estimate(acc.hits, acc.n);
}

/// Exit times of n paths (infinity for survivors), in path order.
inline std::vector<double> exit_times(const ProcessKind& kind, PhaseState start, double t_max, const SimConfig& config,
                                      std::uint64_t stream = 0, KillRegion kill = KillRegion::Strip) {
    const SimConfig c = horizon_config(config, t_max);
    std::vector<double> out(c.n_paths);
    dynamics::with_kernel(kind, [&](const auto& proto) {
        const std::uint64_t block = kDefaultBlock;
        for_each_block((c.n_paths + block - 1) / block, [&](std::uint64_t b) {
            auto kernel = proto;
            for (std::uint64_t i = b * block; i < std::min(c.n_paths, (b + 1) * block); ++i) {
                Rng rng(c.seed, i, stream);
                const ExitOutcome o = dynamics::simulate_path(kernel, start, c, rng, kill);
                out[i] = o.exited() ? o.exit_time : INFINITY;
            }
        });
        return 0;
    });
    return out;
}

/// Survival fractions at each checkpoint from a single batch of exit times.
inline std::vector<Estimate> survival_curve(const std::vector<double>& times, const std::vector<double>& checkpoints) {
    std::vector<Estimate> out;
    out.reserve(checkpoints.size());
    for (const double t : checkpoints) {
        const auto alive = static_cast<std::uint64_t>(
            std::count_if(times.begin(), times.end(), [t](double e) { return e > t; }));
        out.push_back(bernoulli_estimate(alive, times.size()));
    }
    return out;
}

struct GirsanovEstimate {
    Estimate estimate;
    double ess = 0.0;          ///< (sum w)^2 / sum w^2 over surviving paths
    double ess_fraction = 0.0; ///< ess / n_paths
    bool degenerate = false;   ///< ess below 1% of the paths
};

namespace detail {
struct WeightSums {
    Moments y;
    double w_sum = 0.0, w_sq = 0.0;
    void merge(const WeightSums& o) {
        y.merge(o.y);
        w_sum += o.w_sum;
        w_sq += o.w_sq;
    }
};

inline WeightSums weighted_block(const ModelParams& m, PhaseState start, const SimConfig& c, std::uint64_t stream,
                                 KillRegion kill, std::uint64_t begin, std::uint64_t end) {
    const dynamics::IbmKernel kernel(m.sigma);
    WeightSums s;
    for (std::uint64_t i = begin; i < end; ++i) {
        Rng rng(c.seed, i, stream);
        dynamics::PathWeight w;
        const ExitOutcome o = dynamics::simulate_path(kernel, start, c, rng, kill, &w);
        double y = 0.0;
        if (!o.exited()) y = std::exp(dynamics::girsanov_log_weight_endpoint(m, start, o.final_state, c.t_horizon, w));
        s.y.add(y);
        s.w_sum += y;
        s.w_sq += y * y;
    }
    return s;
}

inline GirsanovEstimate finish(const WeightSums& s) {
    GirsanovEstimate g;
    g.estimate = s.y.estimate();
    g.ess = s.w_sq > 0.0 ? s.w_sum * s.w_sum / s.w_sq : 0.0;
    g.ess_fraction = s.y.n ? g.ess / static_cast<double>(s.y.n) : 0.0;
    g.degenerate = g.ess_fraction < 0.01;
    return g;
}
}  // namespace detail

/// P(tau > t) for the linear model as E[1{IBM survives} Z_t] over integrated
/// Brownian paths with noise params.sigma.
inline GirsanovEstimate exit_prob_girsanov(const ModelParams& m, PhaseState start, double t, const SimConfig& config,
                                           std::uint64_t stream = 0) {
    m.validate();
    const SimConfig c = horizon_config(config, t);
    const auto s = map_reduce<detail::WeightSums>(c.n_paths, [&](std::uint64_t b, std::uint64_t e) {
        return detail::weighted_block(m, start, c, stream, KillRegion::Strip, b, e);
    });
    return detail::finish(s);
}

/// E[Z_t] over unkilled integrated Brownian paths; should be 1.
inline GirsanovEstimate girsanov_normalization(const ModelParams& m, PhaseState start, double t,
                                               const SimConfig& config, std::uint64_t stream = 0) {
    m.validate();
    const SimConfig c = horizon_config(config, t);
    const auto s = map_reduce<detail::WeightSums>(c.n_paths, [&](std::uint64_t b, std::uint64_t e) {
        return detail::weighted_block(m, start, c, stream, KillRegion::None, b, e);
    });
    return detail::finish(s);
}

struct MartingaleCheck {
    Estimate estimate;
    double target = 0.0;
    double deviation_se = 0.0;  ///< |estimate - target| / std_err
};

/// E[h(X_{t ^ tau})] for the integrated Brownian motion (noise sigma) killed
/// on leaving (0,1); `reflected` uses h(1-q, -p) instead. At the exit point h
/// takes its boundary value (0 on the side it vanishes).
inline MartingaleCheck martingale_check(PhaseState start, double t, const SimConfig& config, bool reflected = false,
                                        double sigma = 1.0, std::uint64_t stream = 0) {
    const SimConfig c = horizon_config(config, t);
    // h is harmonic for sigma = 1; for other sigma use the velocity rescale.
    const double vs = std::cbrt(sigma * sigma);
    auto hfun = [&](PhaseState s) {
        const double q = reflected ? 1.0 - s.q : s.q;
        const double p = (reflected ? -s.p : s.p) / vs;
        // exits through the side where h vanishes land at q = 0 with p <= 0
        return q <= 0.0 ? 0.0 : specfun::h(q, p);
    };
    const auto m = map_reduce<Moments>(c.n_paths, [&](std::uint64_t begin, std::uint64_t end) {
        const dynamics::IbmKernel kernel(sigma);
        Moments mm;
        for (std::uint64_t i = begin; i < end; ++i) {
            Rng rng(c.seed, i, stream);
            const ExitOutcome o = dynamics::simulate_path(kernel, start, c, rng);
            mm.add(hfun(o.stopped_state()));
        }
        return mm;
    });
    MartingaleCheck r;
    r.estimate = m.estimate();
    r.target = hfun(start);
    r.deviation_se = combined_z(r.estimate.mean, r.estimate.std_err, r.target, 0.0);
    return r;
}

/// Exit-side counts from (q, p) with a long horizon: P(exit through 1).
inline Estimate exit_right_fraction(PhaseState start, double sigma, double t_max, const SimConfig& config,
                                    std::uint64_t stream = 0) {
    const SimConfig c = horizon_config(config, t_max);
    const auto acc = map_reduce<detail::Count>(c.n_paths, [&](std::uint64_t begin, std::uint64_t end) {
        const dynamics::IbmKernel kernel(sigma);
        detail::Count cnt;
        for (std::uint64_t i = begin; i < end; ++i) {
            Rng rng(c.seed, i, stream);
            const ExitOutcome o = dynamics::simulate_path(kernel, start, c, rng);
            if (!o.exited()) throw EstimationError("exit_right_fraction: path survived the horizon");
            ++cnt.n;
            cnt.hits += o.exit_side == 1 ? 1 : 0;
        }
        return cnt;
    });
    return bernoulli_estimate(acc.hits, acc.n);
}

}  // namespace kinetic_exit::estimators
