#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/simulate.hpp"
#include "kinetic_exit/estimators/estimate.hpp"
#include "kinetic_exit/estimators/fits.hpp"
#include "kinetic_exit/estimators/parallel.hpp"
#include "kinetic_exit/estimators/stats.hpp"
#include "kinetic_exit/estimators/survival.hpp"
#include "kinetic_exit/qsd/histogram.hpp"
#include "kinetic_exit/specfun/envelopes.hpp"

namespace kinetic_exit::qsd {

using dynamics::Rng;
using dynamics::SimConfig;

/// Initial law: uniform on [q - dq, q + dq] x [p - dp, p + dp] (a point mass
/// when both half-widths are 0).
struct InitSpec {
    double q = 0.5, p = 0.0;
    double q_half_width = 0.0, p_half_width = 0.0;

    void validate() const {
        if (!(q - q_half_width > 0.0 && q + q_half_width < 1.0) || q_half_width < 0.0 || p_half_width < 0.0 ||
            !std::isfinite(p))
            throw ConfigError("initial law must be supported in the open strip");
    }
    PhaseState sample(Rng& rng) const {
        if (q_half_width == 0.0 && p_half_width == 0.0) return {q, p};
        const double u = 2.0 * rng.uniform() - 1.0;
        const double v = 2.0 * rng.uniform() - 1.0;
        return {q + u * q_half_width, p + v * p_half_width};
    }
    friend bool operator==(const InitSpec&, const InitSpec&) = default;
};

/// The process kind for a parameter set (integrated Brownian motion when the
/// drift vanishes).
inline dynamics::ProcessKind kind_for(const ModelParams& m) {
    if (m.is_free()) return dynamics::Ibm{m.sigma};
    return dynamics::Linear{m};
}

struct ParticleCloud {
    std::vector<PhaseState> states;
    double time = 0.0;
    std::uint64_t kill_count = 0;
    std::size_t n() const { return states.size(); }
};

struct FleetOptions {
    std::size_t n_particles = 10000;
    double t_max = 20.0;
    double macro_step = 0.05;
    double window_fraction = 0.25;  ///< trailing share of the run used for averages
    int snapshot_every = 0;         ///< macro-steps between stored snapshots (0: none)
    Binning binning{};

    void validate() const {
        if (n_particles < 100) throw ConfigError("Fleming-Viot needs at least 100 particles");
        if (!(t_max > 0.0) || !(macro_step > 0.0) || macro_step > t_max)
            throw ConfigError("Fleming-Viot: need 0 < macro_step <= t_max");
        if (!(window_fraction > 0.0 && window_fraction <= 1.0)) throw ConfigError("window_fraction must lie in (0,1]");
        binning.validate();
    }
};

struct FleetRun {
    std::vector<double> times;       ///< end of each macro-step
    std::vector<double> kill_rates;  ///< -log(1 - killed/n) / macro_step
    std::vector<ParticleCloud> snapshots;
    ParticleCloud final_cloud;
    Histogram2D window_hist;  ///< all particle positions after each macro-step in the window
    std::size_t window_frames = 0;
    double window_lo = 0.0, window_hi = 0.0;
    double rate_mean = 0.0;  ///< mean kill rate over the window
    double rate_se = 0.0;    ///< batch-means standard error
    double drift = 0.0;      ///< |first half - second half| / mean over the window
    double macro_step = 0.0;
};

inline constexpr std::uint64_t kRespawnStream = 0xF1E5ULL << 40;

/// Fleming-Viot particle system: each macro-step advances every particle
/// independently; particles that left the strip are then moved, in index
/// order, onto the post-step state of a uniformly chosen survivor.
inline FleetRun fleming_viot_run(const ModelParams& m, const SimConfig& config, const FleetOptions& opt,
                                 const InitSpec& init) {
    m.validate();
    opt.validate();
    init.validate();
    SimConfig inner = config;
    inner.t_horizon = opt.macro_step;
    inner.dt = std::min(config.dt, opt.macro_step);
    inner.validate();

    const std::size_t n = opt.n_particles;
    const auto steps = static_cast<std::uint64_t>(std::llround(opt.t_max / opt.macro_step));
    const std::uint64_t window_start = steps - std::max<std::uint64_t>(1, std::llround(steps * opt.window_fraction));

    FleetRun run;
    run.macro_step = opt.macro_step;
    run.window_hist = Histogram2D(opt.binning);
    ParticleCloud cloud;
    cloud.states.resize(n);
    {
        Rng rng(config.seed, kRespawnStream - 1, 0);
        for (auto& s : cloud.states) s = init.sample(rng);
    }

    std::vector<dynamics::ExitOutcome> outcomes(n);
    const dynamics::ProcessKind kind = kind_for(m);
    constexpr std::uint64_t block = 512;
    for (std::uint64_t k = 0; k < steps; ++k) {
        const double t0 = k * opt.macro_step;
        dynamics::with_kernel(kind, [&](const auto& proto) {
            estimators::for_each_block((n + block - 1) / block, [&](std::uint64_t b) {
                auto kernel = proto;
                for (std::size_t i = b * block; i < std::min<std::size_t>(n, (b + 1) * block); ++i) {
                    Rng rng(config.seed, i, k + 1);
                    outcomes[i] = dynamics::simulate_path(kernel, cloud.states[i], inner, rng,
                                                          dynamics::KillRegion::Strip, nullptr, t0);
                }
            });
            return 0;
        });
        std::vector<std::size_t> alive;
        alive.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            if (!outcomes[i].exited()) alive.push_back(i);
        const std::size_t killed = n - alive.size();
        if (alive.empty()) throw EstimationError("Fleming-Viot: every particle exited within one macro-step");
        Rng respawn(config.seed, kRespawnStream, k);
        for (std::size_t i = 0; i < n; ++i) {
            if (!outcomes[i].exited()) {
                cloud.states[i] = outcomes[i].final_state;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (outcomes[i].exited()) cloud.states[i] = outcomes[alive[respawn.below(alive.size())]].final_state;
        }
        cloud.kill_count += killed;
        cloud.time = (k + 1) * opt.macro_step;
        run.times.push_back(cloud.time);
        run.kill_rates.push_back(-std::log1p(-static_cast<double>(killed) / n) / opt.macro_step);
        if (k >= window_start) {
            for (const auto& s : cloud.states) run.window_hist.add(s);
            ++run.window_frames;
        }
        if (opt.snapshot_every > 0 && (k + 1) % opt.snapshot_every == 0) run.snapshots.push_back(cloud);
    }
    run.final_cloud = cloud;
    run.window_lo = window_start * opt.macro_step;
    run.window_hi = steps * opt.macro_step;

    const std::vector<double> w(run.kill_rates.begin() + window_start, run.kill_rates.end());
    double sum = 0.0;
    for (double r : w) sum += r;
    run.rate_mean = sum / w.size();
    const std::size_t half = w.size() / 2;
    if (half > 0) {
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < half; ++i) a += w[i];
        for (std::size_t i = half; i < 2 * half; ++i) b += w[i];
        run.drift = std::abs(a - b) / half / run.rate_mean;
    }
    constexpr std::size_t batches = 10;
    if (w.size() >= batches) {
        const std::size_t len = w.size() / batches;
        estimators::Moments bm;
        for (std::size_t j = 0; j < batches; ++j) {
            double s = 0.0;
            for (std::size_t i = j * len; i < (j + 1) * len; ++i) s += w[i];
            bm.add(s / len);
        }
        run.rate_se = bm.std_err();
    }
    return run;
}

struct DecayFit {
    double lambda0_hat = 0.0;
    double t_lo = 0.0, t_hi = 0.0;
    double r2 = 0.0;
    double std_err = 0.0;
};

struct Lambda0Options {
    InitSpec init{};
    double t_lo = 2.0;
    double t_hi = 6.0;
    int n_points = 17;
    FleetOptions fleet{};
    bool run_fleet = true;
};

struct Lambda0Result {
    DecayFit regression;
    double fv_rate = 0.0;
    double fv_rate_se = 0.0;
    double relative_gap = 0.0;  ///< |regression - fv| / fv
};

/// Principal killing rate: (a) slope of log P(tau > t) on [t_lo, t_hi] from
/// unconditioned paths started from `init`; (b) the Fleming-Viot kill rate.
inline Lambda0Result lambda0_estimate(const ModelParams& m, const SimConfig& config, const Lambda0Options& opt) {
    m.validate();
    opt.init.validate();
    if (!(opt.t_lo > 0.0 && opt.t_hi > opt.t_lo) || opt.n_points < 2) throw ConfigError("lambda0: bad window");
    const dynamics::ProcessKind kind = kind_for(m);
    SimConfig c = estimators::horizon_config(config, opt.t_hi);
    std::vector<double> times(c.n_paths);
    dynamics::with_kernel(kind, [&](const auto& proto) {
        const std::uint64_t block = estimators::kDefaultBlock;
        estimators::for_each_block((c.n_paths + block - 1) / block, [&](std::uint64_t b) {
            auto kernel = proto;
            for (std::uint64_t i = b * block; i < std::min(c.n_paths, (b + 1) * block); ++i) {
                Rng rng(c.seed, i, 0);
                Rng init_rng(c.seed, i, ~0ULL);
                const auto o = dynamics::simulate_path(kernel, opt.init.sample(init_rng), c, rng);
                times[i] = o.exited() ? o.exit_time : INFINITY;
            }
        });
        return 0;
    });
    std::vector<double> grid;
    for (int k = 0; k < opt.n_points; ++k) grid.push_back(opt.t_lo + (opt.t_hi - opt.t_lo) * k / (opt.n_points - 1));
    const auto surv = estimators::survival_curve(times, grid);
    if (surv.back().mean * c.n_paths < 100.0)
        throw EstimationError("lambda0: survival exhausted before the end of the window");
    std::vector<double> y;
    for (const auto& e : surv) y.push_back(std::log(e.mean));
    const auto fit = estimators::least_squares(grid, y);
    Lambda0Result r;
    r.regression = {-fit.slope, opt.t_lo, opt.t_hi, fit.r2, fit.slope_se};
    if (!(r.regression.lambda0_hat > 0.0)) throw EstimationError("lambda0: non-positive decay rate");
    if (opt.run_fleet) {
        const FleetRun run = fleming_viot_run(m, config, opt.fleet, opt.init);
        r.fv_rate = run.rate_mean;
        r.fv_rate_se = run.rate_se;
        r.relative_gap = std::abs(r.regression.lambda0_hat - r.fv_rate) / r.fv_rate;
    }
    return r;
}

struct QsdDensity {
    double ratio_min = 0.0, ratio_max = 0.0;
    std::size_t bins_used = 0;
    double chi2 = 0.0;
    double chi2_df = 0.0;
    double chi2_pvalue = 1.0;
    double entering_mass = 0.0;   ///< first position column, entering velocities (p > 0)
    double neighbour_mass = 0.0;  ///< second position column, same velocities
};

/// Compare the window histogram with H_{alpha,beta,-gamma,sigma}(q,-p)
/// (normalised over the binned region) on bins with at least `min_hits`.
/// The mirror-symmetry chi-square deflates counts by the number of frames per
/// unit time, treating one frame per unit time as independent.
inline QsdDensity qsd_density_estimate(const FleetRun& run, const ModelParams& m, std::uint64_t min_hits = 500) {
    const Histogram2D& h = run.window_hist;
    const Binning& bn = h.binning;
    ModelParams adj = m;
    adj.gamma = -m.gamma;
    std::vector<double> env(bn.size());
    double env_sum = 0.0;
    double hist_sum = 0.0;
    for (int i = 0; i < bn.nq; ++i)
        for (int j = 0; j < bn.np; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * bn.np + j;
            env[k] = specfun::envelope_Hfull(adj, bn.q_centre(i), -bn.p_centre(j));
            env_sum += env[k];
            hist_sum += static_cast<double>(h.counts[k]);
        }
    QsdDensity d;
    d.ratio_min = INFINITY;
    d.ratio_max = -INFINITY;
    for (std::size_t k = 0; k < bn.size(); ++k) {
        if (h.counts[k] < min_hits) continue;
        const double r = (h.counts[k] / hist_sum) / (env[k] / env_sum);
        d.ratio_min = std::min(d.ratio_min, r);
        d.ratio_max = std::max(d.ratio_max, r);
        ++d.bins_used;
    }
    if (d.bins_used == 0) throw EstimationError("qsd density: no bin reaches the hit threshold");

    const double frames_per_time = run.macro_step > 0.0 ? 1.0 / run.macro_step : 1.0;
    for (std::size_t k = 0; k < bn.size(); ++k) {
        const std::size_t mk = bn.mirror(k);
        if (mk <= k) continue;
        const double a = h.counts[k] / frames_per_time, b = h.counts[mk] / frames_per_time;
        if (a + b < 10.0) continue;
        d.chi2 += (a - b) * (a - b) / (a + b);
        d.chi2_df += 1.0;
    }
    d.chi2_pvalue = d.chi2_df > 0.0 ? estimators::chi_square_sf(d.chi2, d.chi2_df) : 1.0;

    for (int j = 0; j < bn.np; ++j) {
        if (bn.p_centre(j) <= 0.0) continue;
        d.entering_mass += static_cast<double>(h.counts[static_cast<std::size_t>(j)]) / hist_sum;
        d.neighbour_mass += static_cast<double>(h.counts[static_cast<std::size_t>(bn.np + j)]) / hist_sum;
    }
    return d;
}

}  // namespace kinetic_exit::qsd
