#include <gtest/gtest.h>

#include <cmath>

#include "kinetic_exit/estimators/parallel.hpp"
#include "kinetic_exit/qsd/fleming_viot.hpp"
#include "kinetic_exit/qsd/histogram.hpp"
#include "kinetic_exit/qsd/tv_decay.hpp"

using namespace kinetic_exit;
using namespace kinetic_exit::qsd;

namespace {

dynamics::SimConfig cfg(std::uint64_t n = 1, double dt = 0.05, std::uint64_t seed = 3) {
    dynamics::SimConfig c;
    c.n_paths = n;
    c.dt = dt;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(Binning, IndexAndMirror) {
    const Binning b;
    EXPECT_EQ(b.index({0.001, -3.99}), 0);
    EXPECT_EQ(b.index({0.999, 3.99}), static_cast<long>(b.size() - 1));
    EXPECT_EQ(b.index({0.5, 4.0}), -1);
    EXPECT_EQ(b.index({0.0, 0.0}), -1);
    for (std::size_t k : {0ul, 17ul, 1234ul, b.size() - 1}) {
        EXPECT_EQ(b.mirror(b.mirror(k)), k);
        const int i = static_cast<int>(k / b.np), j = static_cast<int>(k % b.np);
        EXPECT_EQ(b.index({1.0 - b.q_centre(i), -b.p_centre(j)}), static_cast<long>(b.mirror(k)));
    }
    EXPECT_THROW((Binning{0, 10, 1.0}).validate(), ConfigError);
}

TEST(Histogram, MergeAndTv) {
    Histogram2D a(Binning{}), b(Binning{});
    a.add({0.2, 0.1});
    a.add({0.2, 9.0});
    b.add({0.2, 0.1});
    b.add({0.8, 0.1});
    EXPECT_EQ(a.total(), 2u);
    EXPECT_EQ(a.overflow, 1u);
    EXPECT_DOUBLE_EQ(binned_tv(a, a), 0.0);
    EXPECT_DOUBLE_EQ(binned_tv(a, b), 0.5);
    a.merge(b);
    EXPECT_EQ(a.total(), 4u);
    EXPECT_THROW(binned_tv(Histogram2D(Binning{}), b), EstimationError);
}

TEST(Histogram, MultinomialDrawFollowsWeights) {
    const Binning b{2, 1, 1.0};
    dynamics::Rng rng(4);
    const auto h = multinomial_histogram(b, {1.0, 3.0, 0.0}, 40000, rng);
    EXPECT_EQ(h.total(), 40000u);
    EXPECT_EQ(h.overflow, 0u);
    EXPECT_NEAR(h.counts[1] / 40000.0, 0.75, 4.0 * std::sqrt(0.75 * 0.25 / 40000));
}

TEST(InitSpec, ValidationAndSampling) {
    EXPECT_THROW((InitSpec{0.0, 0.0}).validate(), ConfigError);
    EXPECT_THROW((InitSpec{0.5, 0.0, 0.5, 0.0}).validate(), ConfigError);
    const InitSpec box{0.5, 1.0, 0.1, 0.5};
    dynamics::Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const PhaseState s = box.sample(rng);
        ASSERT_GE(s.q, 0.4);
        ASSERT_LE(s.q, 0.6);
        ASSERT_GE(s.p, 0.5);
        ASSERT_LE(s.p, 1.5);
    }
}

TEST(FlemingViot, ConservesParticlesAndStaysInterior) {
    FleetOptions opt;
    opt.n_particles = 500;
    opt.t_max = 2.0;
    opt.macro_step = 0.1;
    opt.snapshot_every = 5;
    const auto run = fleming_viot_run({}, cfg(), opt, {0.5, 0.0});
    ASSERT_EQ(run.snapshots.size(), 4u);
    std::uint64_t prev_kills = 0;
    for (const auto& s : run.snapshots) {
        EXPECT_EQ(s.states.size(), 500u);
        EXPECT_GE(s.kill_count, prev_kills);
        prev_kills = s.kill_count;
        for (const auto& x : s.states) ASSERT_TRUE(x.interior());
    }
    EXPECT_EQ(run.final_cloud.states.size(), 500u);
    EXPECT_EQ(run.times.size(), 20u);
    EXPECT_NEAR(run.times.back(), 2.0, 1e-12);
    for (double r : run.kill_rates) EXPECT_GE(r, 0.0);
    EXPECT_EQ(run.window_frames, 5u);
    EXPECT_EQ(run.window_hist.total(), 5u * 500u);
}

TEST(FlemingViot, IndependentOfWorkerCount) {
    FleetOptions opt;
    opt.n_particles = 1500;
    opt.t_max = 1.0;
    opt.macro_step = 0.1;
    estimators::set_worker_count(1);
    const auto a = fleming_viot_run({1, 0, 0.5, 1}, cfg(), opt, {0.3, 0.0});
    estimators::set_worker_count(3);
    const auto b = fleming_viot_run({1, 0, 0.5, 1}, cfg(), opt, {0.3, 0.0});
    estimators::set_worker_count(0);
    EXPECT_EQ(a.kill_rates, b.kill_rates);
    EXPECT_EQ(a.final_cloud.states, b.final_cloud.states);
}

TEST(FlemingViot, KillRateNearPrincipalRate) {
    FleetOptions opt;
    opt.n_particles = 2000;
    opt.t_max = 8.0;
    const auto run = fleming_viot_run({}, cfg(), opt, {0.5, 0.0});
    // regression value on the same model from the long run is about 1.105
    EXPECT_NEAR(run.rate_mean, 1.105, 0.1);
    EXPECT_GT(run.rate_se, 0.0);
}

TEST(FlemingViot, RejectsBadOptions) {
    FleetOptions opt;
    opt.n_particles = 10;
    EXPECT_THROW(fleming_viot_run({}, cfg(), opt, {0.5, 0.0}), ConfigError);
    opt.n_particles = 200;
    opt.macro_step = 30.0;
    EXPECT_THROW(fleming_viot_run({}, cfg(), opt, {0.5, 0.0}), ConfigError);
}

TEST(TvDecay, IdenticalLawsSitAtTheNoiseFloor) {
    TvOptions opt;
    opt.min_survivors = 1000;
    const auto pts = conditional_tv_decay({}, {0.5, 0.0}, {0.5, 0.0}, {0.5, 1.0}, cfg(60000), opt);
    for (const auto& p : pts) {
        EXPECT_GT(p.noise_floor, 0.0);
        EXPECT_LE(p.tv, 3.0 * p.noise_floor) << p.t;
    }
}

TEST(TvDecay, DistinctLawsStartApart) {
    TvOptions opt;
    opt.min_survivors = 1000;
    const auto pts = conditional_tv_decay({}, {0.2, 0.0}, {0.8, 0.0}, {0.25, 1.0}, cfg(60000), opt);
    EXPECT_GT(pts[0].tv, 0.9);
    EXPECT_LT(pts[1].tv, pts[0].tv);
    EXPECT_GT(pts[1].tv, 3.0 * pts[1].noise_floor);
}

TEST(TvDecay, RejectsBadCheckpoints) {
    EXPECT_THROW(conditional_tv_decay({}, {0.2, 0.0}, {0.8, 0.0}, {1.0, 1.0}, cfg(100)), ConfigError);
    EXPECT_THROW(conditional_tv_decay({}, {0.2, 0.0}, {0.8, 0.0}, {}, cfg(100)), ConfigError);
}

TEST(TvDecay, TooFewSurvivorsIsAnEstimationError) {
    EXPECT_THROW(conditional_tv_decay({}, {0.2, 0.0}, {0.8, 0.0}, {1.0}, cfg(1000)), EstimationError);
}
