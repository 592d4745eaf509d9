#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/linalg2.hpp"
#include "kinetic_exit/dynamics/rng.hpp"

namespace kinetic_exit::dynamics {

/// Exact Gaussian transition over one step: X' = phi X + shift + chol * xi.
struct GaussianStep {
    Mat2 phi = Mat2::identity();
    Vec2 shift{};
    Mat2 cov{};
    Mat2 chol{};
    Mat2 precision{};

    Vec2 mean(Vec2 x) const { return phi * x + shift; }

    Vec2 draw(Vec2 x, Rng& rng) const {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        return mean(x) + Vec2{chol.a * z1, chol.c * z1 + chol.d * z2};
    }

    void finish() {
        chol = cholesky(cov);
        precision = spd_inverse(cov, chol);
    }
};

/// Integrated Brownian motion dq = p dt, dp = sigma dB.
inline GaussianStep make_ibm_step(double sigma, double h) {
    GaussianStep s;
    s.phi = {1.0, h, 0.0, 1.0};
    const double s2 = sigma * sigma;
    s.cov = {s2 * h * h * h / 3.0, s2 * h * h / 2.0, s2 * h * h / 2.0, s2 * h};
    s.finish();
    return s;
}

namespace detail {

struct GaussLegendre20 {
    std::array<double, 20> x{}, w{};
    GaussLegendre20() {
        constexpr int n = 20;
        for (int i = 0; i < n / 2; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = z;
                for (int k = 2; k <= n; ++k) {
                    const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                dp = n * (z * p1 - p0) / (z * z - 1.0);
                const double dz = p1 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
    }
};

inline const GaussLegendre20& gauss_legendre20() {
    static const GaussLegendre20 rule;
    return rule;
}

}  // namespace detail

/// Exact transition of dq = p dt, dp = -(alpha q + beta) dt - gamma p dt + sigma dB.
///
/// e^{As} = e^{ms} [C(s) I + S(s) (A - m I)] with m = -gamma/2 and
/// delta^2 = gamma^2/4 - alpha, where C = cosh(delta s), S = sinh(delta s)/delta
/// (or their trigonometric / power-series forms). The power series is used
/// whenever |delta^2 s^2| < 1, which covers the defective case delta = 0
/// without a branch on the eigenstructure. The mean shift and covariance
/// integrals are done with composite 20-point Gauss-Legendre.
inline GaussianStep make_linear_step(const ModelParams& m, double h) {
    const double mu = -0.5 * m.gamma;
    const double d2 = 0.25 * m.gamma * m.gamma - m.alpha;
    auto cosh_sinh = [d2](double s, double& ch, double& sh) {
        const double x = d2 * s * s;
        if (std::abs(x) < 1.0) {
            double tc = 1.0, ts = 1.0;
            ch = 1.0;
            sh = 1.0;
            for (int k = 1; k < 30; ++k) {
                tc *= x / ((2.0 * k - 1.0) * (2.0 * k));
                ts *= x / ((2.0 * k) * (2.0 * k + 1.0));
                ch += tc;
                sh += ts;
                if (std::abs(tc) < 1e-18 && std::abs(ts) < 1e-18) break;
            }
            sh *= s;
        } else if (x > 0.0) {
            const double d = std::sqrt(d2);
            ch = std::cosh(d * s);
            sh = std::sinh(d * s) / d;
        } else {
            const double w = std::sqrt(-d2);
            ch = std::cos(w * s);
            sh = std::sin(w * s) / w;
        }
    };
    auto propagator = [&](double s) {
        double ch, sh;
        cosh_sinh(s, ch, sh);
        const double e = std::exp(mu * s);
        return Mat2{e * (ch + 0.5 * m.gamma * sh), e * sh, -m.alpha * e * sh, e * (ch - 0.5 * m.gamma * sh)};
    };

    GaussianStep st;
    st.phi = propagator(h);

    const auto& gl = detail::gauss_legendre20();
    const double rate = std::abs(m.gamma) + std::sqrt(m.alpha);
    const int panels = std::max(1, static_cast<int>(std::ceil(h * rate)));
    const double width = h / panels;
    double ia = 0.0, ib = 0.0, iaa = 0.0, iab = 0.0, ibb = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double left = k * width;
        for (std::size_t i = 0; i < gl.x.size(); ++i) {
            const double s = left + 0.5 * width * (gl.x[i] + 1.0);
            const double w = 0.5 * width * gl.w[i];
            const Mat2 e = propagator(s);
            // second column of e^{As}: response to a unit velocity kick
            const double a = e.b, b = e.d;
            ia += w * a;
            ib += w * b;
            iaa += w * a * a;
            iab += w * a * b;
            ibb += w * b * b;
        }
    }
    st.shift = {-m.beta * ia, -m.beta * ib};
    const double s2 = m.sigma * m.sigma;
    st.cov = {s2 * iaa, s2 * iab, s2 * iab, s2 * ibb};
    st.finish();
    return st;
}

/// Sample X at the intermediate time given X at both ends. `first` is the
/// transition from the left end to the intermediate time, `second` from the
/// intermediate time to the right end.
inline Vec2 draw_bridge(const GaussianStep& first, const GaussianStep& second, Vec2 x0, Vec2 x1, Rng& rng) {
    const Mat2 phi2t = second.phi.transpose();
    const Mat2 prec = first.precision + phi2t * second.precision * second.phi;
    const Vec2 rhs = first.precision * first.mean(x0) + phi2t * (second.precision * (x1 - second.shift));
    const double det = prec.det();
    const Mat2 post{prec.d / det, -prec.b / det, -prec.c / det, prec.a / det};
    const Vec2 centre = post * rhs;
    const Mat2 l = cholesky(post);
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    return centre + Vec2{l.a * z1, l.c * z1 + l.d * z2};
}

// ---------------------------------------------------------------------------
// Kernels. Each provides sample(x, t, h) and bridge(x0, x1, t, h) returning the
// state at t + h/2, plus the noise amplitude used for exit-detection margins.

class IbmKernel {
public:
    explicit IbmKernel(double sigma) : sigma_(sigma) {
        if (!(sigma > 0.0)) throw ConfigError("IbmKernel: sigma must be > 0");
    }

    double sigma() const { return sigma_; }

    Vec2 sample(Vec2 x, double /*t*/, double h, Rng& rng) const { return step(h).draw(x, rng); }

    // Closed form: Hermite-cubic midpoint, covariance diag(s^2 h^3/192, s^2 h/16).
    // The precision form in draw_bridge loses all digits once h is below ~1e-6.
    Vec2 bridge(Vec2 x0, Vec2 x1, double /*t*/, double h, Rng& rng) const {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        const double sq = sigma_ * std::sqrt(h * h * h / 192.0);
        const double sp = sigma_ * std::sqrt(h / 16.0);
        return {0.5 * (x0.q + x1.q) + 0.125 * h * (x0.p - x1.p) + sq * z1,
                1.5 * (x1.q - x0.q) / h - 0.25 * (x0.p + x1.p) + sp * z2};
    }

private:
    const GaussianStep& step(double h) const {
        if (h != last_h_) {
            last_ = make_ibm_step(sigma_, h);
            last_h_ = h;
        }
        return last_;
    }

    double sigma_;
    mutable double last_h_ = -1.0;
    mutable GaussianStep last_;
};

class LinearKernel {
public:
    explicit LinearKernel(const ModelParams& m) : m_(m) { m.validate(); }

    double sigma() const { return m_.sigma; }
    const ModelParams& params() const { return m_; }

    Vec2 sample(Vec2 x, double /*t*/, double h, Rng& rng) const { return step(h).draw(x, rng); }

    Vec2 bridge(Vec2 x0, Vec2 x1, double /*t*/, double h, Rng& rng) const {
        const GaussianStep& half = step(0.5 * h);
        return draw_bridge(half, half, x0, x1, rng);
    }

    /// Transition for step h, memoised in a small direct-mapped cache (steps
    /// are mostly dyadic fractions of the base step).
    const GaussianStep& step(double h) const {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(h);
        const std::size_t slot = static_cast<std::size_t>((bits ^ (bits >> 29) ^ (bits >> 47)) % cache_.size());
        Entry& e = cache_[slot];
        if (!e.valid || e.key != bits) {
            e.step = make_linear_step(m_, h);
            e.key = bits;
            e.valid = true;
        }
        return e.step;
    }

private:
    struct Entry {
        std::uint64_t key = 0;
        bool valid = false;
        GaussianStep step;
    };
    ModelParams m_;
    mutable std::array<Entry, 64> cache_{};
};

/// The process dq = p dt, dp = -4 eta p dt - 3 eta^2 q dt + sigma dB realised
/// through its time-changed integrated Brownian representation:
/// q_t = e^{-3 eta t} Q_{s(t)}, s(t) = (e^{2 eta t} - 1)/(2 eta), where Q is an
/// integrated Brownian motion started from (q, p + 3 eta q). This is a separate
/// code path from LinearKernel with (alpha, gamma) = (3 eta^2, 4 eta).
class EtaKernel {
public:
    EtaKernel(double eta, double sigma) : eta_(eta), sigma_(sigma) {
        if (!(eta >= 0.0)) throw ConfigError("EtaKernel: eta must be >= 0");
        if (!(sigma > 0.0)) throw ConfigError("EtaKernel: sigma must be > 0");
    }

    double sigma() const { return sigma_; }
    double eta() const { return eta_; }

    Vec2 sample(Vec2 x, double t, double h, Rng& rng) const {
        const Vec2 y = make_ibm_step(sigma_, clock_increment(t, h)).draw(to_ibm(x, t), rng);
        return from_ibm(y, t + h);
    }

    Vec2 bridge(Vec2 x0, Vec2 x1, double t, double h, Rng& rng) const {
        const GaussianStep first = make_ibm_step(sigma_, clock_increment(t, 0.5 * h));
        const GaussianStep second = make_ibm_step(sigma_, clock_increment(t + 0.5 * h, 0.5 * h));
        const Vec2 mid = draw_bridge(first, second, to_ibm(x0, t), to_ibm(x1, t + h), rng);
        return from_ibm(mid, t + 0.5 * h);
    }

    /// s(t + h) - s(t).
    double clock_increment(double t, double h) const {
        if (eta_ == 0.0) return h;
        return std::exp(2.0 * eta_ * t) * std::expm1(2.0 * eta_ * h) / (2.0 * eta_);
    }

    Vec2 to_ibm(Vec2 x, double t) const {
        return {std::exp(3.0 * eta_ * t) * x.q, std::exp(eta_ * t) * (x.p + 3.0 * eta_ * x.q)};
    }

    Vec2 from_ibm(Vec2 y, double t) const {
        const double q = std::exp(-3.0 * eta_ * t) * y.q;
        return {q, std::exp(-eta_ * t) * y.p - 3.0 * eta_ * q};
    }

private:
    double eta_;
    double sigma_;
};

/// Single exact draw of the integrated Brownian transition.
inline PhaseState ibm_transition(const PhaseState& x, double dt, double sigma, Rng& rng) {
    if (!(dt > 0.0)) throw ConfigError("ibm_transition: dt must be > 0");
    return make_ibm_step(sigma, dt).draw(Vec2{x}, rng).state();
}

/// Single exact draw of the linear Langevin transition.
inline PhaseState linear_langevin_transition(const ModelParams& m, const PhaseState& x, double dt, Rng& rng) {
    if (!(dt > 0.0)) throw ConfigError("linear_langevin_transition: dt must be > 0");
    m.validate();
    return make_linear_step(m, dt).draw(Vec2{x}, rng).state();
}

}  // namespace kinetic_exit::dynamics
