#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/simulate.hpp"
#include "kinetic_exit/estimators/parallel.hpp"
#include "kinetic_exit/qsd/fleming_viot.hpp"
#include "kinetic_exit/qsd/histogram.hpp"

namespace kinetic_exit::qsd {

struct TvPoint {
    double t = 0.0;
    double tv = 0.0;
    double noise_floor = 0.0;  ///< mean TV between multinomial resamples of the pooled law
    std::uint64_t survivors1 = 0, survivors2 = 0;
};

struct TvOptions {
    Binning binning{};
    int bootstrap = 20;
    std::uint64_t min_survivors = 10000;
};

/// Histograms of the surviving paths' states at each checkpoint, from
/// config.n_paths unconditioned paths started from `init`.
inline std::vector<Histogram2D> conditioned_histograms(const ModelParams& m, const InitSpec& init,
                                                       const std::vector<double>& checkpoints, const SimConfig& config,
                                                       const Binning& binning, std::uint64_t stream) {
    std::vector<Histogram2D> total(checkpoints.size(), Histogram2D(binning));
    std::mutex mu;
    const dynamics::ProcessKind kind = kind_for(m);
    dynamics::with_kernel(kind, [&](const auto& proto) {
        const std::uint64_t block = estimators::kDefaultBlock;
        estimators::for_each_block((config.n_paths + block - 1) / block, [&](std::uint64_t b) {
            auto kernel = proto;
            std::vector<Histogram2D> local(checkpoints.size(), Histogram2D(binning));
            for (std::uint64_t i = b * block; i < std::min(config.n_paths, (b + 1) * block); ++i) {
                Rng rng(config.seed, i, stream);
                Rng init_rng(config.seed, i, stream ^ ~0ULL);
                PhaseState x = init.sample(init_rng);
                double t = 0.0;
                for (std::size_t k = 0; k < checkpoints.size(); ++k) {
                    SimConfig seg = config;
                    seg.t_horizon = checkpoints[k] - t;
                    seg.dt = std::min(config.dt, seg.t_horizon);
                    const auto o = dynamics::simulate_path(kernel, x, seg, rng, dynamics::KillRegion::Strip, nullptr, t);
                    if (o.exited()) break;
                    x = o.final_state;
                    t = checkpoints[k];
                    local[k].add(x);
                }
            }
            // integer counts: the merge order does not affect the result
            std::lock_guard lock(mu);
            for (std::size_t k = 0; k < checkpoints.size(); ++k) total[k].merge(local[k]);
        });
        return 0;
    });
    return total;
}

/// Mean binned TV between independent multinomial draws (sizes na, nb) from
/// the pooled law of a and b.
inline double tv_noise_floor(const Histogram2D& a, const Histogram2D& b, int replicates, Rng& rng) {
    std::vector<double> w(a.counts.size() + 1);
    for (std::size_t k = 0; k < a.counts.size(); ++k) w[k] = static_cast<double>(a.counts[k] + b.counts[k]);
    w.back() = static_cast<double>(a.overflow + b.overflow);
    double s = 0.0;
    for (int r = 0; r < replicates; ++r) {
        const Histogram2D ra = multinomial_histogram(a.binning, w, a.total(), rng);
        const Histogram2D rb = multinomial_histogram(a.binning, w, b.total(), rng);
        s += binned_tv(ra, rb);
    }
    return s / replicates;
}

/// Binned TV distance between the laws conditioned on survival started from
/// theta1 and theta2, at each checkpoint. Conditioning is by rejection of
/// killed paths, with config.n_paths paths per initial law.
inline std::vector<TvPoint> conditional_tv_decay(const ModelParams& m, const InitSpec& theta1, const InitSpec& theta2,
                                                 const std::vector<double>& checkpoints, const SimConfig& config,
                                                 const TvOptions& opt = {}) {
    m.validate();
    theta1.validate();
    theta2.validate();
    opt.binning.validate();
    if (checkpoints.empty() || !(checkpoints.front() > 0.0) ||
        !std::is_sorted(checkpoints.begin(), checkpoints.end(), std::less_equal<>()))
        throw ConfigError("checkpoints must be positive and strictly increasing");
    SimConfig c = config;
    c.t_horizon = checkpoints.back();
    c.dt = std::min(c.dt, checkpoints.front());
    c.validate();
    const auto h1 = conditioned_histograms(m, theta1, checkpoints, c, opt.binning, 1);
    const auto h2 = conditioned_histograms(m, theta2, checkpoints, c, opt.binning, 2);
    std::vector<TvPoint> out;
    Rng boot(config.seed, 0xB007ULL << 32, 0);
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        TvPoint p;
        p.t = checkpoints[k];
        p.survivors1 = h1[k].total();
        p.survivors2 = h2[k].total();
        if (p.survivors1 < opt.min_survivors || p.survivors2 < opt.min_survivors)
            throw EstimationError("conditional_tv_decay: too few survivors at t = " + std::to_string(p.t));
        p.tv = binned_tv(h1[k], h2[k]);
        p.noise_floor = tv_noise_floor(h1[k], h2[k], opt.bootstrap, boot);
        out.push_back(p);
    }
    return out;
}

}  // namespace kinetic_exit::qsd
