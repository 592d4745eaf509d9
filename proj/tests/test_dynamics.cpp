#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "kinetic_exit/dynamics/girsanov.hpp"
#include "kinetic_exit/dynamics/rng.hpp"
#include "kinetic_exit/dynamics/simulate.hpp"
#include "kinetic_exit/dynamics/transition.hpp"
#include "kinetic_exit/dynamics/velocity_zero.hpp"
#include "kinetic_exit/estimators/parallel.hpp"
#include "kinetic_exit/estimators/stats.hpp"
#include "kinetic_exit/estimators/survival.hpp"
#include "kinetic_exit/specfun/lachal.hpp"

using namespace kinetic_exit;
using namespace kinetic_exit::dynamics;

namespace {

struct Moments2 {
    double n = 0, sq = 0, sp = 0, sqq = 0, spp = 0, sqp = 0;
    void add(Vec2 x) {
        ++n;
        sq += x.q;
        sp += x.p;
        sqq += x.q * x.q;
        spp += x.p * x.p;
        sqp += x.q * x.p;
    }
    double mq() const { return sq / n; }
    double mp() const { return sp / n; }
    double vq() const { return sqq / n - mq() * mq(); }
    double vp() const { return spp / n - mp() * mp(); }
    double cqp() const { return sqp / n - mq() * mp(); }
};

// Moment ODEs m' = A m + b, C' = A C + C A^T + Q integrated by classical RK4.
struct MomentOracle {
    Vec2 mean;
    Mat2 cov;
};

MomentOracle rk4_moments(const ModelParams& m, Vec2 x, double h, int steps = 20000) {
    const Mat2 a{0.0, 1.0, -m.alpha, -m.gamma};
    const Vec2 b{0.0, -m.beta};
    const Mat2 q{0.0, 0.0, 0.0, m.sigma * m.sigma};
    auto fm = [&](Vec2 v) { return a * v + b; };
    auto fc = [&](const Mat2& c) { return a * c + c * a.transpose() + q; };
    Vec2 mu = x;
    Mat2 c{};
    const double dt = h / steps;
    for (int i = 0; i < steps; ++i) {
        const Vec2 k1 = fm(mu), k2 = fm(mu + (0.5 * dt) * k1), k3 = fm(mu + (0.5 * dt) * k2), k4 = fm(mu + dt * k3);
        mu = mu + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const Mat2 l1 = fc(c), l2 = fc(c + (0.5 * dt) * l1), l3 = fc(c + (0.5 * dt) * l2), l4 = fc(c + dt * l3);
        c = c + (dt / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    }
    return {mu, c};
}

Mat2 inverse(const Mat2& m) {
    const double d = m.det();
    return {m.d / d, -m.b / d, -m.c / d, m.a / d};
}

void expect_mat_near(const Mat2& x, const Mat2& y, double tol) {
    EXPECT_NEAR(x.a, y.a, tol);
    EXPECT_NEAR(x.b, y.b, tol);
    EXPECT_NEAR(x.c, y.c, tol);
    EXPECT_NEAR(x.d, y.d, tol);
}

}  // namespace

TEST(Rng, StreamsAreReproducibleAndDistinct) {
    Rng a(7, 3, 1), b(7, 3, 1), c(7, 4, 1), d(7, 3, 2);
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        EXPECT_EQ(x, b());
        EXPECT_NE(x, c());
        EXPECT_NE(x, d());
    }
}

TEST(Rng, UniformAndNormalMoments) {
    Rng rng(1);
    const int n = 400000;
    double su = 0, sz = 0, sz2 = 0, sz4 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LE(u, 1.0);
        su += u;
        const double z = rng.normal();
        sz += z;
        sz2 += z * z;
        sz4 += z * z * z * z;
    }
    EXPECT_NEAR(su / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
    EXPECT_NEAR(sz / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(sz2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(sz4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(Rng, BelowIsUniform) {
    Rng rng(3);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
    EXPECT_GT(estimators::chi_square_sf(chi2, 6), 0.001);
}

TEST(IbmTransition, UnitStepMoments) {
    Rng rng(11);
    Moments2 m;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) m.add(Vec2{ibm_transition({0.0, 0.0}, 1.0, 1.0, rng)});
    // standard errors of the sample (co)variances of a Gaussian
    const double vq = 1.0 / 3.0, vp = 1.0, c = 0.5;
    EXPECT_NEAR(m.mq(), 0.0, 4.0 * std::sqrt(vq / n));
    EXPECT_NEAR(m.mp(), 0.0, 4.0 * std::sqrt(vp / n));
    EXPECT_NEAR(m.vq(), vq, 4.0 * std::sqrt(2.0 * vq * vq / n));
    EXPECT_NEAR(m.vp(), vp, 4.0 * std::sqrt(2.0 * vp * vp / n));
    EXPECT_NEAR(m.cqp(), c, 4.0 * std::sqrt((vq * vp + c * c) / n));
}

TEST(IbmTransition, SmallStepLimit) {
    const GaussianStep s = make_ibm_step(1.0, 1e-8);
    const Vec2 mu = s.mean({0.3, 2.0});
    EXPECT_NEAR(mu.q, 0.3, 1e-7);
    EXPECT_DOUBLE_EQ(mu.p, 2.0);
    EXPECT_LT(s.cov.d, 1e-7);
    Rng rng(1);
    EXPECT_THROW(ibm_transition({0.0, 0.0}, 0.0, 1.0, rng), ConfigError);
}

// Composition of two half steps gives the full step exactly (Chapman-Kolmogorov
// for Gaussian kernels: Phi = Phi2 Phi1, C = Phi2 C1 Phi2^T + C2).
TEST(Transitions, ChapmanKolmogorov) {
    const std::vector<ModelParams> sets = {{0, 0, 0, 1}, {1, 0.5, 0.5, 1}, {0, 0, -0.5, 1}, {4, 0, 0.1, 2}, {0.25, 0, 1, 1}};
    for (const auto& m : sets) {
        const double h = 0.37;
        const GaussianStep half = make_linear_step(m, 0.5 * h);
        const GaussianStep full = make_linear_step(m, h);
        expect_mat_near(half.phi * half.phi, full.phi, 1e-13);
        expect_mat_near(half.phi * half.cov * half.phi.transpose() + half.cov, full.cov, 1e-13);
        const Vec2 x{0.2, -0.7};
        const Vec2 two = half.mean(half.mean(x));
        EXPECT_NEAR(two.q, full.mean(x).q, 1e-13);
        EXPECT_NEAR(two.p, full.mean(x).p, 1e-13);
    }
    const GaussianStep ih = make_ibm_step(1.3, 0.25), ifull = make_ibm_step(1.3, 0.5);
    expect_mat_near(ih.phi * ih.cov * ih.phi.transpose() + ih.cov, ifull.cov, 1e-14);
}

TEST(LinearTransition, FreeModelIsIntegratedBrownianMotion) {
    for (double h : {1e-3, 0.1, 1.0, 5.0}) {
        const GaussianStep a = make_linear_step({0, 0, 0, 1.5}, h);
        const GaussianStep b = make_ibm_step(1.5, h);
        expect_mat_near(a.phi, b.phi, 1e-14 * (1 + h));
        expect_mat_near(a.cov, b.cov, 1e-12 * (1 + h * h * h));
        EXPECT_NEAR(a.shift.q, 0.0, 1e-15);
        EXPECT_NEAR(a.shift.p, 0.0, 1e-15);
    }
}

TEST(LinearTransition, MatchesMomentOdes) {
    // under-, critically and over-damped, negative friction, and large alpha
    const std::vector<ModelParams> sets = {{1, 0.5, 0.5, 1}, {1, 0, 2, 1},     {0.25, 0.3, 3, 0.7},
                                           {0, 0, -0.5, 1},  {9, -1, 0.2, 1.3}, {3 * 0.25, 0, 2, 1}};
    for (const auto& m : sets)
        for (double h : {0.01, 0.3, 2.0}) {
            const Vec2 x{0.4, -1.2};
            const GaussianStep s = make_linear_step(m, h);
            const MomentOracle o = rk4_moments(m, x, h);
            const Vec2 mu = s.mean(x);
            EXPECT_NEAR(mu.q, o.mean.q, 1e-10) << m.alpha << " " << m.gamma << " h=" << h;
            EXPECT_NEAR(mu.p, o.mean.p, 1e-10);
            expect_mat_near(s.cov, o.cov, 1e-10);
        }
}

TEST(LinearTransition, EtaProcessMeanPosition) {
    const double eta = 0.5;
    const ModelParams m{3 * eta * eta, 0, 4 * eta, 1};
    for (double t : {0.5, 1.0, 3.0}) {
        const Vec2 mu = make_linear_step(m, t).mean({1.0, 0.0});
        EXPECT_NEAR(mu.q, 0.5 * (3 * std::exp(-eta * t) - std::exp(-3 * eta * t)), 1e-13);
    }
}

TEST(LinearTransition, StationaryLaw) {
    // alpha = gamma = 1, sigma^2 = 2: the Lyapunov equation gives the identity.
    const ModelParams m{1, 0, 1, std::sqrt(2.0)};
    const GaussianStep s = make_linear_step(m, 50.0);
    expect_mat_near(s.cov, Mat2::identity(), 1e-12);
    Rng rng(5);
    Moments2 mm;
    const int n = 200000;
    for (int i = 0; i < n; ++i) mm.add(Vec2{linear_langevin_transition(m, {0.7, -2.0}, 50.0, rng)});
    EXPECT_NEAR(mm.mq(), 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(mm.vq(), 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(mm.vp(), 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(mm.cqp(), 0.0, 4.0 / std::sqrt(n));
}

TEST(EtaKernel, AgreesWithLinearKernelInLaw) {
    const double eta = 0.5;
    const EtaKernel ek(eta, 1.0);
    const GaussianStep s = make_linear_step({3 * eta * eta, 0, 4 * eta, 1}, 0.8);
    // EtaKernel is affine-Gaussian; recover its mean and covariance by sampling.
    Rng rng(9);
    Moments2 m;
    const int n = 400000;
    const Vec2 x{0.3, 0.9};
    for (int i = 0; i < n; ++i) m.add(ek.sample(x, 0.4, 0.8, rng));
    const Vec2 mu = s.mean(x);
    EXPECT_NEAR(m.mq(), mu.q, 4.0 * std::sqrt(s.cov.a / n));
    EXPECT_NEAR(m.mp(), mu.p, 4.0 * std::sqrt(s.cov.d / n));
    EXPECT_NEAR(m.vq(), s.cov.a, 4.0 * std::sqrt(2.0 / n) * s.cov.a);
    EXPECT_NEAR(m.vp(), s.cov.d, 4.0 * std::sqrt(2.0 / n) * s.cov.d);
}

TEST(EtaKernel, ClockAndMaps) {
    const EtaKernel k(0.5, 1.0);
    EXPECT_NEAR(k.clock_increment(0.0, 1.0), std::expm1(1.0), 1e-14);
    EXPECT_NEAR(k.clock_increment(0.3, 0.2) + k.clock_increment(0.5, 0.4), k.clock_increment(0.3, 0.6), 1e-14);
    const Vec2 x{0.3, -0.4};
    const Vec2 y = k.from_ibm(k.to_ibm(x, 1.7), 1.7);
    EXPECT_NEAR(y.q, x.q, 1e-15);
    EXPECT_NEAR(y.p, x.p, 1e-15);
}

// Conditional law of the midpoint given both end points, by Gaussian
// conditioning of the joint law of (X_mid, X_1) given X_0.
TEST(Bridge, MatchesGaussianConditioning) {
    const ModelParams m{1, 0.5, 0.5, 1};
    const GaussianStep half = make_linear_step(m, 0.2);
    const Vec2 x0{0.4, 0.3}, x1{0.55, -0.6};
    const Vec2 mu_m = half.mean(x0);
    const Mat2 c1 = half.cov;
    const Mat2 cross = c1 * half.phi.transpose();  // Cov(X_mid, X_1)
    const Mat2 s = half.phi * c1 * half.phi.transpose() + half.cov;
    const Mat2 gain = cross * inverse(s);
    const Vec2 cond_mean = mu_m + gain * (x1 - half.mean(mu_m));
    const Mat2 cond_cov = c1 + (-1.0) * (gain * cross.transpose());

    Rng rng(21);
    Moments2 mm;
    const int n = 300000;
    for (int i = 0; i < n; ++i) mm.add(draw_bridge(half, half, x0, x1, rng));
    EXPECT_NEAR(mm.mq(), cond_mean.q, 4.0 * std::sqrt(cond_cov.a / n));
    EXPECT_NEAR(mm.mp(), cond_mean.p, 4.0 * std::sqrt(cond_cov.d / n));
    EXPECT_NEAR(mm.vq(), cond_cov.a, 4.0 * std::sqrt(2.0 / n) * cond_cov.a);
    EXPECT_NEAR(mm.vp(), cond_cov.d, 4.0 * std::sqrt(2.0 / n) * cond_cov.d);
    EXPECT_NEAR(mm.cqp(), cond_cov.b, 4.0 * std::sqrt((cond_cov.a * cond_cov.d + cond_cov.b * cond_cov.b) / n));
}

TEST(Cubic, InterpolatesEndpointsAndSlopes) {
    const Vec2 x0{0.2, 1.0}, x1{0.9, -0.5};
    const double h = 0.3;
    const detail::Cubic c(x0, x1, h);
    EXPECT_NEAR(c(0.0), 0.2, 1e-15);
    EXPECT_NEAR(c(1.0), 0.9, 1e-15);
    EXPECT_NEAR((c(1e-7) - c(0.0)) / 1e-7 / h, 1.0, 1e-5);
    EXPECT_NEAR((c(1.0) - c(1.0 - 1e-7)) / 1e-7 / h, -0.5, 1e-5);
    double lo, hi;
    c.range(lo, hi);
    for (double s = 0; s <= 1.0; s += 1e-3) {
        EXPECT_GE(c(s), lo - 1e-15);
        EXPECT_LE(c(s), hi + 1e-15);
    }
    const double s1 = c.first_hit(0.5, true);
    EXPECT_NEAR(c(s1), 0.5, 1e-12);
    for (double s = 0; s < s1 - 1e-9; s += 1e-3) EXPECT_LT(c(s), 0.5);
}

TEST(Simulate, BallisticExitThroughRightSide) {
    SimConfig c;
    c.dt = 0.01;
    int right = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        Rng rng(1, i);
        const auto o = simulate_until_exit(Ibm{1.0}, {0.5, 10.0}, c, rng);
        right += o.exited() && o.exit_side == 1;
    }
    EXPECT_GE(static_cast<double>(right) / n, 0.999);
}

TEST(Simulate, EnteringVelocityNearLeftBoundary) {
    SimConfig c;
    c.dt = 0.01;
    c.t_horizon = 0.1;
    int survived = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        Rng rng(2, i);
        const auto o = simulate_until_exit(Ibm{1.0}, {1e-6, 1.0}, c, rng);
        if (o.exited()) {
            ASSERT_GT(o.exit_time, 1e-4);
        } else {
            ++survived;
        }
    }
    EXPECT_GT(static_cast<double>(survived) / n, 0.5);
}

TEST(Simulate, OutcomeInvariants) {
    SimConfig c;
    c.dt = 0.05;
    c.t_horizon = 2.0;
    for (int i = 0; i < 2000; ++i) {
        Rng rng(3, i);
        const auto o = simulate_until_exit(Linear{{1, 0.5, -0.3, 1}}, {0.3, 0.4}, c, rng);
        if (o.exited()) {
            ASSERT_GT(o.exit_time, 0.0);
            ASSERT_LE(o.exit_time, 2.0);
            ASSERT_TRUE(o.exit_side == 0 || o.exit_side == 1);
            if (o.exit_side == 0) {
                ASSERT_LE(o.exit_velocity, 0.0);
            } else {
                ASSERT_GE(o.exit_velocity, 0.0);
            }
        } else {
            ASSERT_TRUE(o.final_state.interior());
        }
    }
}

TEST(Simulate, SameStreamSameOutcome) {
    SimConfig c;
    c.t_horizon = 3.0;
    for (int i = 0; i < 50; ++i) {
        Rng a(4, i), b(4, i);
        EXPECT_EQ(simulate_until_exit(Eta{0.5, 1.0}, {0.5, 0.0}, c, a), simulate_until_exit(Eta{0.5, 1.0}, {0.5, 0.0}, c, b));
    }
}

TEST(Simulate, AbsoluteExitTimeWithOffset) {
    SimConfig c;
    c.t_horizon = 5.0;
    Rng a(6), b(6);
    const auto o1 = simulate_path(IbmKernel(1.0), {0.5, 0.0}, c, a);
    const auto o2 = simulate_path(IbmKernel(1.0), {0.5, 0.0}, c, b, KillRegion::Strip, nullptr, 10.0);
    ASSERT_TRUE(o1.exited());
    EXPECT_NEAR(o2.exit_time, o1.exit_time + 10.0, 1e-9);
}

TEST(Simulate, RejectsBadInput) {
    SimConfig c;
    Rng rng(1);
    EXPECT_THROW(simulate_until_exit(Ibm{1.0}, {1.0, 0.0}, c, rng), DomainError);
    c.dt = 2.0;
    EXPECT_THROW(simulate_until_exit(Ibm{1.0}, {0.5, 0.0}, c, rng), ConfigError);
    c.dt = 0.01;
    c.max_refine_depth = 31;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Simulate, HalvingStepKeepsSurvival) {
    SimConfig c;
    c.n_paths = 200000;
    c.seed = 12;
    c.dt = 0.02;
    const auto a = estimators::exit_prob_mc(Ibm{1.0}, {0.5, 0.0}, 1.0, c, 1);
    c.dt = 0.01;
    const auto b = estimators::exit_prob_mc(Ibm{1.0}, {0.5, 0.0}, 1.0, c, 2);
    EXPECT_LE(estimators::combined_z(a, b), 2.0) << a.mean << " " << b.mean;
}

TEST(Girsanov, FreeModelHasZeroWeight) {
    PathWeight w{0.0, 1.3, 0.2, 0.4, 1.0};
    EXPECT_EQ(girsanov_log_weight_endpoint({0, 0, 0, 1}, {0.5, 0.1}, {0.2, -0.3}, 1.0, w), 0.0);
    w.sigma = 2.0;
    EXPECT_THROW(girsanov_log_weight_endpoint({1, 0, 0, 1}, {0.5, 0.1}, {0.2, -0.3}, 1.0, w), ConfigError);
}

// The endpoint form equals the stochastic-integral form
// (1/s2) int b dp - (1/(2 s2)) int b^2 ds, b = -(a q + beta) - g p,
// evaluated on a finely discretised smooth path (Ito and Stratonovich agree
// to O(dt) for the p-integral when the quadratic variation term is added).
TEST(Girsanov, EndpointFormMatchesDirectIntegral) {
    const ModelParams m{1.0, 0.5, 0.5, 1.0};
    Rng rng(8);
    const int n = 200000;
    const double t = 1.0, dt = t / n;
    Vec2 x{0.5, 0.0};
    const Vec2 x0 = x;
    double direct = 0.0;
    PathWeight w;
    w.sigma = 1.0;
    for (int i = 0; i < n; ++i) {
        const double dp = std::sqrt(dt) * rng.normal();
        const Vec2 next{x.q + x.p * dt, x.p + dp};
        const double b = -(m.alpha * x.q + m.beta) - m.gamma * x.p;
        direct += b * dp - 0.5 * b * b * dt;  // Ito sum, sigma = 1
        detail::accumulate(&w, x, next, dt);
        x = next;
    }
    const double endpoint = girsanov_log_weight_endpoint(m, x0.state(), x.state(), t, w);
    EXPECT_NEAR(endpoint, direct, 2e-2);
}

TEST(VelocityZero, PositionMatchesLachalLaw) {
    const PhaseState start{0.3, 0.7};
    const std::size_t n = 100000;
    auto sample = estimators::parallel_map<double>(
        n,
        [&](std::uint64_t i) {
            Rng rng(31, i);
            return position_at_velocity_zero(start, 1.0, rng, 1e4);
        },
        4096);
    const double d = estimators::ks_statistic(
        sample, [&](double z) { return specfun::velocity_zero_position_cdf(start.q, start.p, z); }, 1e4);
    EXPECT_LT(d, estimators::ks_critical_1pct(n));
}
