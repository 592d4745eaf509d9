#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/estimators/survival.hpp"
#include "kinetic_exit/specfun/envelopes.hpp"
#include "kinetic_exit/specfun/gamma.hpp"

namespace kinetic_exit::estimators {

struct LineFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
    double slope_se = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw EstimationError("least_squares: need at least two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw EstimationError("least_squares: abscissae coincide");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        sse += r * r;
    }
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    f.slope_se = n > 2 ? std::sqrt(sse / (n - 2) / sxx) : 0.0;
    return f;
}

/// 3 Gamma(1/4) / (2^{3/4} pi^{3/2}): P(tau_0 > t) ~ this * h(q,p) * t^{-1/4}.
inline double long_time_prefactor() {
    return 3.0 * specfun::gamma_fn(0.25) / (std::pow(2.0, 0.75) * std::pow(std::numbers::pi, 1.5));
}

struct TailFit {
    LineFit fit;                   ///< log P vs log t
    double prefactor = 0.0;        ///< exp(intercept) of the free fit
    double prefactor_fixed = 0.0;  ///< geometric mean of P(t) t^{1/4}
    double target = 0.0;           ///< long_time_prefactor() * h(start)
    std::vector<double> times;
    std::vector<Estimate> survival;
};

inline void require_decay(const std::vector<Estimate>& s) {
    const Estimate& first = s.front();
    const Estimate& last = s.back();
    if (last.mean <= 0.0) throw EstimationError("survival exhausted before the last fit time");
    if (!(last.ci_hi < first.ci_lo)) throw EstimationError("insufficient decay: estimates indistinguishable within CI");
}

/// Half-line survival P(tau_0 > t) of the integrated Brownian motion
/// (sigma = 1), one batch of paths simulated to max(t_list).
inline TailFit tail_exponent_fit(PhaseState start, const std::vector<double>& t_list, const SimConfig& config,
                                 std::uint64_t stream = 0) {
    if (t_list.size() < 2) throw ConfigError("tail_exponent_fit: need at least two times");
    if (!(start.q > 0.0)) throw DomainError("tail_exponent_fit: requires q > 0");
    std::vector<double> ts = t_list;
    std::sort(ts.begin(), ts.end());
    const std::vector<double> times = exit_times(dynamics::Ibm{1.0}, start, ts.back(), config, stream, KillRegion::HalfLine);
    TailFit r;
    r.times = ts;
    r.survival = survival_curve(times, ts);
    require_decay(r.survival);
    std::vector<double> x, y;
    double fixed = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        x.push_back(std::log(ts[i]));
        y.push_back(std::log(r.survival[i].mean));
        fixed += y.back() + 0.25 * x.back();
    }
    r.fit = least_squares(x, y);
    r.prefactor = std::exp(r.fit.intercept);
    r.prefactor_fixed = std::exp(fixed / ts.size());
    r.target = long_time_prefactor() * specfun::h(start.q, start.p);
    return r;
}

struct HolderFit {
    LineFit fit;  ///< log P vs log q
    std::vector<double> q_list;
    std::vector<Estimate> survival;
};

/// Slope of log P(tau > t) against log q for starts (q, 0) (or (1-q, 0) when
/// `right` is set); the boundary exponent.
inline HolderFit holder_exponent_fit(double t, const std::vector<double>& q_list, const SimConfig& config,
                                     bool right = false, std::uint64_t stream = 0) {
    if (q_list.size() < 2) throw ConfigError("holder_exponent_fit: need at least two positions");
    HolderFit r;
    r.q_list = q_list;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < q_list.size(); ++i) {
        const double q = q_list[i];
        if (!(q > 0.0 && q < 1.0)) throw DomainError("holder_exponent_fit: q must lie in (0,1)");
        const Estimate e =
            exit_prob_mc(dynamics::Ibm{1.0}, {right ? 1.0 - q : q, 0.0}, t, config, stream + 1000003ULL * (i + 1));
        if (e.mean <= 0.0) throw EstimationError("holder_exponent_fit: no surviving path");
        r.survival.push_back(e);
        x.push_back(std::log(q));
        y.push_back(std::log(e.mean));
    }
    const auto lo = std::min_element(r.survival.begin(), r.survival.end(),
                                     [](const Estimate& a, const Estimate& b) { return a.mean < b.mean; });
    const auto hi = std::max_element(r.survival.begin(), r.survival.end(),
                                     [](const Estimate& a, const Estimate& b) { return a.mean < b.mean; });
    if (!(lo->ci_hi < hi->ci_lo)) throw EstimationError("insufficient decay: estimates indistinguishable within CI");
    r.fit = least_squares(x, y);
    return r;
}

}  // namespace kinetic_exit::estimators
