#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "kinetic_exit/estimators/estimate.hpp"
#include "kinetic_exit/estimators/fits.hpp"
#include "kinetic_exit/estimators/parallel.hpp"
#include "kinetic_exit/estimators/ratio.hpp"
#include "kinetic_exit/estimators/stats.hpp"
#include "kinetic_exit/estimators/survival.hpp"
#include "kinetic_exit/specfun/envelopes.hpp"

using namespace kinetic_exit;
using namespace kinetic_exit::estimators;
using dynamics::SimConfig;

namespace {

SimConfig small(std::uint64_t n, double dt = 0.02, std::uint64_t seed = 5) {
    SimConfig c;
    c.n_paths = n;
    c.dt = dt;
    c.seed = seed;
    return c;
}

struct WorkerGuard {
    ~WorkerGuard() { set_worker_count(0); }
};

}  // namespace

TEST(Estimate, BernoulliStandardErrorAndWilsonInterval) {
    const Estimate e = bernoulli_estimate(300, 1000);
    EXPECT_DOUBLE_EQ(e.mean, 0.3);
    EXPECT_NEAR(e.std_err, std::sqrt(0.3 * 0.7 / 1000), 1e-15);
    EXPECT_LE(e.ci_lo, e.mean);
    EXPECT_GE(e.ci_hi, e.mean);
    // Wilson bounds by direct formula
    const double z = kZ99, n = 1000, p = 0.3;
    const double centre = (p + z * z / (2 * n)) / (1 + z * z / n);
    const double half = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
    EXPECT_NEAR(e.ci_lo, centre - half, 1e-14);
    EXPECT_NEAR(e.ci_hi, centre + half, 1e-14);
    const Estimate zero = bernoulli_estimate(0, 50);
    EXPECT_EQ(zero.ci_lo, 0.0);
    EXPECT_GT(zero.ci_hi, 0.0);
}

TEST(Estimate, MomentsMergeMatchesSequential) {
    Moments all, a, b;
    for (int i = 0; i < 100; ++i) {
        const double x = std::sin(i * 0.37);
        all.add(x);
        (i < 40 ? a : b).add(x);
    }
    a.merge(b);
    EXPECT_EQ(a.n, all.n);
    EXPECT_NEAR(a.mean(), all.mean(), 1e-15);
    EXPECT_NEAR(a.variance(), all.variance(), 1e-14);
    const Estimate e = all.estimate();
    EXPECT_LE(e.ci_lo, e.mean);
    EXPECT_GE(e.ci_hi, e.mean);
}

TEST(Estimate, CombinedZ) {
    EXPECT_DOUBLE_EQ(combined_z(1.0, 0.3, 1.5, 0.4), 1.0);
    EXPECT_EQ(combined_z(2.0, 0.0, 2.0, 0.0), 0.0);
}

TEST(Stats, ChiSquareSurvival) {
    EXPECT_NEAR(chi_square_sf(3.841458820694124, 1), 0.05, 1e-10);
    EXPECT_NEAR(chi_square_sf(18.307038053275146, 10), 0.05, 1e-10);
    EXPECT_NEAR(chi_square_sf(2.0, 2), std::exp(-1.0), 1e-13);
    EXPECT_NEAR(chi_square_sf(0.0, 3), 1.0, 1e-15);
}

TEST(Stats, KsStatisticOfExactQuantiles) {
    std::vector<double> s;
    const int n = 1000;
    for (int i = 0; i < n; ++i) s.push_back((i + 0.5) / n);
    EXPECT_NEAR(ks_statistic(s, [](double x) { return x; }), 0.5 / n, 1e-12);
    std::vector<double> shifted = s;
    for (auto& v : shifted) v = std::min(1.0, v + 0.1);
    EXPECT_GT(ks_statistic(shifted, [](double x) { return x; }), ks_critical_1pct(n));
}

TEST(Parallel, MapReduceIsIndependentOfWorkerCount) {
    WorkerGuard guard;
    auto run = [] {
        return map_reduce<Moments>(100003, [](std::uint64_t b, std::uint64_t e) {
            Moments m;
            for (std::uint64_t i = b; i < e; ++i) {
                dynamics::Rng rng(1, i);
                m.add(rng.normal());
            }
            return m;
        });
    };
    set_worker_count(1);
    const Moments a = run();
    set_worker_count(3);
    const Moments b = run();
    EXPECT_EQ(a.n, b.n);
    EXPECT_EQ(a.sum, b.sum);
    EXPECT_EQ(a.sum_sq, b.sum_sq);
}

TEST(Parallel, EstimatesAreBitwiseStableAcrossWorkers) {
    WorkerGuard guard;
    const SimConfig c = small(20000);
    set_worker_count(1);
    const Estimate a = exit_prob_mc(dynamics::Linear{{1, 0.5, 0.5, 1}}, {0.5, 0.0}, 1.0, c);
    const auto ga = exit_prob_girsanov({1, 0.5, 0.5, 1}, {0.5, 0.0}, 1.0, c);
    set_worker_count(3);
    const Estimate b = exit_prob_mc(dynamics::Linear{{1, 0.5, 0.5, 1}}, {0.5, 0.0}, 1.0, c);
    const auto gb = exit_prob_girsanov({1, 0.5, 0.5, 1}, {0.5, 0.0}, 1.0, c);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(ga.estimate.mean, gb.estimate.mean);
    EXPECT_EQ(ga.estimate.std_err, gb.estimate.std_err);
}

TEST(Parallel, WorkerCountFromEnvironment) {
    WorkerGuard guard;
    set_worker_count(0);
    ::setenv("KINETIC_EXIT_WORKERS", "2", 1);
    EXPECT_EQ(worker_count(), 2);
    ::setenv("KINETIC_EXIT_WORKERS", "zero", 1);
    EXPECT_THROW(worker_count(), ConfigError);
    ::unsetenv("KINETIC_EXIT_WORKERS");
    EXPECT_GE(worker_count(), 1);
}

TEST(ExitProb, TinyHorizonSurvives) {
    const Estimate e = exit_prob_mc(dynamics::Ibm{1.0}, {0.5, 0.0}, 1e-4, small(20000, 1e-4));
    EXPECT_GE(e.mean, 0.9999);
}

TEST(ExitProb, SeedStability) {
    const Estimate a = exit_prob_mc(dynamics::Ibm{1.0}, {0.5, 0.0}, 1.0, small(100000, 0.02, 1));
    const Estimate b = exit_prob_mc(dynamics::Ibm{1.0}, {0.5, 0.0}, 1.0, small(100000, 0.02, 2));
    EXPECT_LE(combined_z(a, b), 3.0);
}

TEST(ExitProb, ReflectionSymmetry) {
    const Estimate a = exit_prob_mc(dynamics::Ibm{1.0}, {0.3, 0.7}, 1.0, small(100000), 1);
    const Estimate b = exit_prob_mc(dynamics::Ibm{1.0}, {0.7, -0.7}, 1.0, small(100000), 2);
    EXPECT_LE(combined_z(a, b), 3.0);
}

TEST(ExitProb, GirsanovWithFreeModelIsTheDirectEstimator) {
    const SimConfig c = small(20000);
    const Estimate d = exit_prob_mc(dynamics::Ibm{1.0}, {0.4, 0.2}, 1.0, c, 3);
    const auto g = exit_prob_girsanov({0, 0, 0, 1}, {0.4, 0.2}, 1.0, c, 3);
    EXPECT_DOUBLE_EQ(g.estimate.mean, d.mean);
    EXPECT_NEAR(g.ess_fraction, d.mean, 1e-12);
}

TEST(ExitProb, GirsanovAgreesWithDirect) {
    const SimConfig c = small(100000);
    for (const ModelParams m : {ModelParams{1, 0.5, 0.5, 1}, ModelParams{0, 0, -0.5, 1}}) {
        const Estimate d = exit_prob_mc(dynamics::Linear{m}, {0.5, 0.0}, 1.0, c, 1);
        const auto g = exit_prob_girsanov(m, {0.5, 0.0}, 1.0, c, 2);
        EXPECT_LE(combined_z(d, g.estimate), 3.0) << m.gamma;
        EXPECT_FALSE(g.degenerate);
    }
}

TEST(ExitProb, GirsanovNormalization) {
    const auto z = girsanov_normalization({1, 0.5, 0.5, 1}, {0.5, 0.0}, 1.0, small(100000), 4);
    EXPECT_LE(combined_z(z.estimate.mean, z.estimate.std_err, 1.0, 0.0), 3.0);
}

TEST(Martingale, OptionalStoppingAndShortTime) {
    const auto m = martingale_check({0.5, 0.0}, 1.0, small(100000), false, 1.0, 7);
    EXPECT_LE(m.deviation_se, 3.0);
    const auto r = martingale_check({0.3, 0.4}, 1.0, small(100000), true, 1.0, 8);
    EXPECT_LE(r.deviation_se, 3.0);
    const auto s = martingale_check({0.5, 0.0}, 1e-3, small(2000, 1e-3), false, 1.0, 9);
    EXPECT_NEAR(s.estimate.mean, specfun::h(0.5, 0.0), 1e-3);
}

TEST(SurvivalCurve, CountsTimesBeyondCheckpoints) {
    const std::vector<double> times = {0.5, 1.5, INFINITY, 2.5, INFINITY};
    const auto s = survival_curve(times, {1.0, 2.0, 3.0});
    EXPECT_DOUBLE_EQ(s[0].mean, 0.8);
    EXPECT_DOUBLE_EQ(s[1].mean, 0.6);
    EXPECT_DOUBLE_EQ(s[2].mean, 0.4);
}

TEST(Ratio, PointFlagsAndRatios) {
    const Estimate few = bernoulli_estimate(10, 100000);
    const RatioPoint lp = make_ratio_point({0.5, 0.0, 1.0}, few, 0.5);
    EXPECT_TRUE(lp.low_confidence);
    const Estimate ok = bernoulli_estimate(5000, 10000);
    const RatioPoint rp = make_ratio_point({0.5, 0.0, 1.0}, ok, 0.25);
    EXPECT_FALSE(rp.low_confidence);
    EXPECT_DOUBLE_EQ(rp.ratio, 2.0);
    EXPECT_GT(rp.ratio_lo, 0.0);
    EXPECT_LT(rp.ratio_lo, rp.ratio);
    EXPECT_GT(rp.ratio_hi, rp.ratio);
    RatioTable t;
    t.points = {lp, rp};
    t.finalize();
    EXPECT_EQ(t.n_used, 1u);
    EXPECT_DOUBLE_EQ(t.ratio_min, 2.0);
    EXPECT_DOUBLE_EQ(t.spread(), 1.0);
}

TEST(Ratio, StandardGridShape) {
    const auto g = standard_grid(1.0, 3);
    EXPECT_EQ(g.size(), 19u * 7u);
    EXPECT_DOUBLE_EQ(g.front().q, 0.05);
    EXPECT_DOUBLE_EQ(g.back().q, 0.95);
    EXPECT_EQ(standard_grid(1.0, 6).size(), 19u * 13u);
    EXPECT_EQ(point_stream({0.3, 1.0, 1.0}, 4), point_stream({0.3, 1.0, 1.0}, 4));
    EXPECT_NE(point_stream({0.3, 1.0, 1.0}, 4), point_stream({0.3, -1.0, 1.0}, 4));
}

TEST(Ratio, ScanIsPositiveAndReflectionConsistent) {
    std::vector<GridPoint> grid = {{0.3, 1.0, 1.0}, {0.7, -1.0, 1.0}, {0.5, 0.0, 1.0}};
    const RatioTable t = ratio_scan(dynamics::Ibm{1.0}, grid, small(40000));
    for (const auto& p : t.points) {
        EXPECT_GT(p.ratio, 0.0);
        EXPECT_TRUE(std::isfinite(p.ratio));
    }
    EXPECT_LE(combined_z(t.points[0].ratio, t.points[0].ratio_se, t.points[1].ratio, t.points[1].ratio_se), 3.0);
}

TEST(Ratio, EtaZeroIsIbmScan) {
    std::vector<GridPoint> grid = {{0.2, 0.0, 1.0}, {0.6, 2.0, 1.0}};
    const RatioTable a = eta_ratio_scan(0.0, 1.0, grid, small(20000));
    const RatioTable b = ratio_scan(dynamics::Ibm{1.0}, grid, small(20000));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        EXPECT_DOUBLE_EQ(a.points[i].envelope, b.points[i].envelope);
        EXPECT_LE(combined_z(a.points[i].survival, b.points[i].survival), 3.0);
    }
}

TEST(Fits, LeastSquaresExactLine) {
    const LineFit f = least_squares({1, 2, 3, 4}, {3, 5, 7, 9});
    EXPECT_NEAR(f.slope, 2.0, 1e-14);
    EXPECT_NEAR(f.intercept, 1.0, 1e-14);
    EXPECT_NEAR(f.r2, 1.0, 1e-14);
    EXPECT_NEAR(f.slope_se, 0.0, 1e-12);
}

TEST(Fits, LongTimePrefactor) {
    const double c = 3.0 * std::tgamma(0.25) / (std::pow(2.0, 0.75) * std::pow(std::numbers::pi, 1.5));
    EXPECT_NEAR(long_time_prefactor(), c, 1e-14);
    EXPECT_NEAR(long_time_prefactor() * specfun::h(1.0, 0.0), 0.7182, 1e-3);
}

TEST(Fits, EnvelopeBoundarySlopeIsOneSixth) {
    std::vector<double> x, y;
    for (int i = 0; i <= 6; ++i) {
        const double q = std::pow(10.0, -4.0 + 0.5 * i);
        x.push_back(std::log(q));
        y.push_back(std::log(specfun::envelope_H(q, 0.0)));
    }
    EXPECT_NEAR(least_squares(x, y).slope, 1.0 / 6.0, 1e-12);
}

TEST(Fits, TailScalingConsistency) {
    // (lambda^3 q, lambda p) at lambda^2 t has the same law as (q, p) at t.
    const double lam = 0.5;
    const SimConfig c = small(100000, 0.05);
    const auto a = tail_exponent_fit({1.0, 0.0}, {2.0, 4.0, 8.0}, c, 1);
    const auto b = tail_exponent_fit({lam * lam * lam, 0.0}, {0.5, 1.0, 2.0}, c, 2);
    EXPECT_LE(combined_z(a.fit.slope, a.fit.slope_se + 1e-3, b.fit.slope, b.fit.slope_se + 1e-3), 3.0);
    EXPECT_LE(combined_z(a.survival.back(), b.survival.back()), 3.0);
}

TEST(Fits, HolderFitFromBothSides) {
    const SimConfig c = small(50000, 0.02);
    const std::vector<double> q = {1e-3, 1e-2, 1e-1};
    const auto l = holder_exponent_fit(1.0, q, c, false, 1);
    const auto r = holder_exponent_fit(1.0, q, c, true, 2);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_LE(combined_z(l.survival[i], r.survival[i]), 3.0);
    EXPECT_GT(l.fit.slope, 0.1);
    EXPECT_LT(l.fit.slope, 0.3);
}

TEST(Fits, DecayGuard) {
    std::vector<Estimate> flat = {bernoulli_estimate(50, 100), bernoulli_estimate(49, 100)};
    EXPECT_THROW(require_decay(flat), EstimationError);
    std::vector<Estimate> dead = {bernoulli_estimate(50, 100), bernoulli_estimate(0, 100)};
    EXPECT_THROW(require_decay(dead), EstimationError);
}
