#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/simulate.hpp"
#include "kinetic_exit/estimators/fits.hpp"
#include "kinetic_exit/estimators/ratio.hpp"
#include "kinetic_exit/estimators/survival.hpp"
#include "kinetic_exit/harness/records.hpp"
#include "kinetic_exit/qsd/fleming_viot.hpp"
#include "kinetic_exit/qsd/tv_decay.hpp"
#include "kinetic_exit/specfun/envelopes.hpp"
#include "kinetic_exit/specfun/lachal.hpp"

// Named verification suites shared by `verify` and the acceptance binary.
// Each check yields one record with a pass flag.

namespace kinetic_exit::harness {

using estimators::Estimate;
using estimators::GridPoint;
using estimators::RatioTable;

struct SuiteOptions {
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> n_paths;  ///< overrides every path count of the suite
    std::optional<double> dt;              ///< overrides the suite's base step
    double scale = 1.0;                    ///< multiplies default path counts
    std::string digest;                    ///< stamped into every record
};

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SuiteResult {
    std::string suite;
    std::vector<Check> checks;
    std::vector<Record> records;

    bool passed() const {
        return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }
};

namespace detail {

inline std::string fmt(double v, int prec = 6) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

class SuiteBuilder {
public:
    SuiteBuilder(std::string name, const SuiteOptions& opt) : opt_(opt) { result_.suite = std::move(name); }

    std::uint64_t paths(std::uint64_t fallback) const {
        if (opt_.n_paths) return *opt_.n_paths;
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(fallback * opt_.scale)));
    }
    double dt(double fallback) const { return opt_.dt.value_or(fallback); }
    std::uint64_t seed() const { return opt_.seed; }

    dynamics::SimConfig sim(std::uint64_t n, double dt_value) const {
        dynamics::SimConfig c;
        c.seed = opt_.seed;
        c.n_paths = n;
        c.dt = dt_value;
        return c;
    }

    void record(Record r, std::optional<bool> pass = std::nullopt) {
        r.suite = result_.suite;
        r.seed = opt_.seed;
        r.manifest_digest = opt_.digest;
        r.pass = pass;
        result_.records.push_back(std::move(r));
    }

    void check(const std::string& name, bool passed, const std::string& detail, Record r) {
        r.op = name;
        record(std::move(r), passed);
        result_.checks.push_back({name, passed, detail});
    }

    /// Run `body`; estimation failures become a failed check instead of aborting the suite.
    void guarded(const std::string& name, const std::function<void()>& body) {
        try {
            body();
        } catch (const EstimationError& e) {
            check(name, false, std::string("estimation error: ") + e.what(),
                  Record::from_value("", name, Json{{"error", e.what()}}, NAN));
        } catch (const ConvergenceError& e) {
            check(name, false, std::string("convergence error: ") + e.what(),
                  Record::from_value("", name, Json{{"error", e.what()}}, NAN));
        }
    }

    SuiteResult take() { return std::move(result_); }

private:
    SuiteOptions opt_;
    SuiteResult result_;
};

inline Json point_json(PhaseState s) { return Json{{"q", s.q}, {"p", s.p}}; }

inline Json model_json(const ModelParams& m) {
    return Json{{"alpha", m.alpha}, {"beta", m.beta}, {"gamma", m.gamma}, {"sigma", m.sigma}};
}

/// Central differences with one Richardson step.
template <class F>
void derivatives(F f, double z, double h, double& d1, double& d2) {
    auto first = [&](double s) { return (f(z + s) - f(z - s)) / (2.0 * s); };
    auto second = [&](double s) { return (f(z + s) - 2.0 * f(z) + f(z - s)) / (s * s); };
    d1 = (4.0 * first(0.5 * h) - first(h)) / 3.0;
    d2 = (4.0 * second(0.5 * h) - second(h)) / 3.0;
}

}  // namespace detail

/// Largest relative residual of g''/2 - (z^2/3) g' + (z/6) g on [lo, hi].
inline double harmonicity_residual(double lo, double hi, double step) {
    double worst = 0.0;
    const int n = static_cast<int>(std::llround((hi - lo) / step));
    for (int i = 0; i <= n; ++i) {
        const double z = lo + i * step;
        double d1, d2;
        detail::derivatives([](double x) { return specfun::g(x); }, z, 1e-2, d1, d2);
        const double g = specfun::g(z);
        const double res = 0.5 * d2 - z * z / 3.0 * d1 + z / 6.0 * g;
        worst = std::max(worst, std::abs(res) / (std::abs(g) + std::abs(d1) + std::abs(d2)));
    }
    return worst;
}

/// The left-tail formula (2/9)^{-5/6}/6 e^{-2|z|^3/9} |z|^{-5/2}.
inline double g_left_tail_formula(double z) {
    const double a = std::abs(z);
    return specfun::g_left_tail_constant() * std::exp(-2.0 * a * a * a / 9.0) * std::pow(a, -2.5);
}

// ---------------------------------------------------------------------------

inline SuiteResult suite_specfun(const SuiteOptions& opt) {
    detail::SuiteBuilder b("specfun", opt);
    {
        const double oracle = std::pow(2.0 / 9.0, -1.0 / 6.0) * std::tgamma(1.0 / 3.0) / std::tgamma(1.0 / 6.0);
        const double v = specfun::g(0.0);
        const double rel = std::abs(v / oracle - 1.0);
        b.check("g_at_zero", rel <= 1e-10, "relative error " + detail::fmt(rel),
                Record::from_value("", "", Json{{"z", 0.0}, {"oracle", oracle}}, v));
    }
    {
        const double res = harmonicity_residual(-5.0, 5.0, 0.01);
        b.check("harmonicity_residual", res <= 1e-6, "max relative residual " + detail::fmt(res),
                Record::from_value("", "", Json{{"z_lo", -5.0}, {"z_hi", 5.0}, {"step", 0.01}}, res));
    }
    {
        const double r = specfun::g(100.0) / 10.0;
        b.check("g_sqrt_growth", r >= 0.95 && r <= 1.05, "g(100)/10 = " + detail::fmt(r, 10),
                Record::from_value("", "", Json{{"z", 100.0}}, r));
    }
    {
        const double r = specfun::g(-8.0) / g_left_tail_formula(-8.0);
        b.check("g_left_tail", std::abs(r - 1.0) <= 0.10,
                "g(-8)/formula = " + detail::fmt(r, 8) + " (tolerance 10%)",
                Record::from_value("", "", Json{{"z", -8.0}, {"formula", g_left_tail_formula(-8.0)}}, r));
    }
    return b.take();
}

inline SuiteResult suite_closed_form(const SuiteOptions& opt) {
    detail::SuiteBuilder b("closed-form", opt);
    {
        const double mass = specfun::velocity_zero_total_mass(0.3, 0.7);
        b.check("velocity_zero_normalization", std::abs(mass - 1.0) <= 1e-8, "mass " + detail::fmt(mass, 15),
                Record::from_value("", "", Json{{"q", 0.3}, {"p", 0.7}}, mass));
    }
    {
        const double v = specfun::exit_right_first_prob_at_rest(0.5);
        b.check("exit_side_midpoint", std::abs(v - 0.5) <= 1e-8, "P(1/2) = " + detail::fmt(v, 15),
                Record::from_value("", "", Json{{"q", 0.5}}, v));
    }
    {
        const double g16 = specfun::gamma_fn(1.0 / 6.0);
        const double limit = 6.0 * specfun::gamma_fn(1.0 / 3.0) / (g16 * g16) * specfun::hyp2f1_exit_side(1.0);
        bool increasing = true;
        double prev = 0.0;
        for (int k = 1; k <= 8; ++k) {
            const double v = specfun::exit_right_first_prob_at_rest(1.0 - std::pow(10.0, -k));
            increasing = increasing && v > prev && v < 1.0;
            prev = v;
        }
        b.check("exit_side_limit_one", std::abs(limit - 1.0) <= 1e-8 && increasing,
                "limit value " + detail::fmt(limit, 15) + (increasing ? ", increasing" : ", NOT increasing"),
                Record::from_value("", "", Json{{"q", 1.0}}, limit));
    }
    const std::uint64_t n = b.paths(1'000'000);
    const auto cfg = b.sim(n, b.dt(0.01));
    int stream = 0;
    for (const double q : {0.1, 0.3}) {
        b.guarded("exit_side_mc_q" + detail::fmt(q), [&] {
            const Estimate e = estimators::exit_right_fraction({q, 0.0}, 1.0, 40.0, cfg, 100 + stream++);
            const double exact = specfun::exit_right_first_prob_at_rest(q);
            const double z = estimators::combined_z(e.mean, e.std_err, exact, 0.0);
            auto r = Record::from_estimate("", "", Json{{"q", q}, {"p", 0.0}, {"exact", exact}}, e, b.seed());
            b.check("exit_side_mc_q" + detail::fmt(q), z <= 3.0,
                    "MC " + detail::fmt(e.mean) + " vs " + detail::fmt(exact) + ", " + detail::fmt(z, 3) + " SE", r);
        });
    }
    return b.take();
}

inline SuiteResult suite_identities(const SuiteOptions& opt) {
    detail::SuiteBuilder b("identities", opt);
    const std::uint64_t n = b.paths(1'000'000);
    const double base_dt = b.dt(0.01);
    using dynamics::Ibm;
    using dynamics::KillRegion;
    std::uint64_t stream = 200;
    for (const double dt : {base_dt, 0.5 * base_dt}) {
        const auto cfg = b.sim(n, dt);
        const std::string tag = "@dt=" + detail::fmt(dt);
        auto compare = [&](const std::string& name, const dynamics::ProcessKind& ka, PhaseState a, double ta,
                           const dynamics::ProcessKind& kb, PhaseState c, double tc, KillRegion kill) {
            b.guarded(name + tag, [&] {
                const Estimate ea = estimators::exit_prob_mc(ka, a, ta, cfg, stream++, kill);
                const Estimate ec = estimators::exit_prob_mc(kb, c, tc, cfg, stream++, kill);
                const double z = estimators::combined_z(ea, ec);
                Record r = Record::from_estimate("", "", Json{{"dt", dt}, {"lhs", detail::point_json(a)}, {"t_lhs", ta},
                                                             {"rhs", detail::point_json(c)}, {"t_rhs", tc},
                                                             {"rhs_estimate", ec.mean}, {"rhs_stderr", ec.std_err}},
                                                 ea, b.seed());
                b.check(name + tag, z <= 3.0,
                        detail::fmt(ea.mean) + " vs " + detail::fmt(ec.mean) + ", " + detail::fmt(z, 3) + " SE", r);
            });
        };
        // Brownian scaling of the half-line problem, lambda = 1/2.
        const double lam = 0.5;
        compare("time_scaling", Ibm{1.0}, {0.5, 0.5}, 1.0, Ibm{1.0}, {lam * lam * lam * 0.5, lam * 0.5}, lam * lam,
                KillRegion::HalfLine);
        compare("sign_flip", Ibm{1.0}, {0.3, 0.7}, 1.0, Ibm{1.0}, {0.7, -0.7}, 1.0, KillRegion::Strip);
        const double s = 2.0, s23 = std::cbrt(s * s);
        compare("sigma_rescaling", Ibm{s}, {0.4, 0.5}, 1.0, Ibm{1.0}, {0.4, 0.5 / s23}, s23, KillRegion::Strip);
        for (const bool reflected : {false, true}) {
            const std::string name = std::string(reflected ? "optional_stopping_reflected" : "optional_stopping") + tag;
            b.guarded(name, [&] {
                const auto m = estimators::martingale_check({0.5, 0.0}, 1.0, cfg, reflected, 1.0, stream++);
                Record r = Record::from_estimate("", "", Json{{"dt", dt}, {"start", detail::point_json({0.5, 0.0})},
                                                             {"t", 1.0}, {"target", m.target}},
                                                 m.estimate, b.seed());
                b.check(name, m.deviation_se <= 3.0,
                        detail::fmt(m.estimate.mean) + " vs h = " + detail::fmt(m.target) + ", " +
                            detail::fmt(m.deviation_se, 3) + " SE",
                        r);
            });
        }
    }
    return b.take();
}

inline SuiteResult suite_long_time(const SuiteOptions& opt) {
    detail::SuiteBuilder b("long-time", opt);
    const auto cfg = b.sim(b.paths(1'000'000), b.dt(0.05));
    b.guarded("tail_slope", [&] {
        const auto f = estimators::tail_exponent_fit({1.0, 0.0}, {10.0, 20.0, 40.0, 80.0}, cfg, 300);
        for (std::size_t i = 0; i < f.times.size(); ++i)
            b.record(Record::from_estimate("", "half_line_survival", Json{{"start", detail::point_json({1.0, 0.0})},
                                                                          {"t", f.times[i]}},
                                           f.survival[i], b.seed()));
        Record rs = Record::from_value("", "", Json{{"r2", f.fit.r2}}, f.fit.slope, b.seed());
        rs.std_err = f.fit.slope_se;
        b.check("tail_slope", std::abs(f.fit.slope + 0.25) <= 0.03,
                "slope " + detail::fmt(f.fit.slope, 5) + " (target -0.25 +- 0.03)", rs);
        const double rel = f.prefactor / f.target - 1.0;
        b.check("tail_prefactor", std::abs(rel) <= 0.10,
                "exp(intercept) " + detail::fmt(f.prefactor, 5) + " vs " + detail::fmt(f.target, 5) +
                    " (fixed-slope value " + detail::fmt(f.prefactor_fixed, 5) + ")",
                Record::from_value("", "", Json{{"target", f.target}, {"fixed_slope_prefactor", f.prefactor_fixed}},
                                   f.prefactor, b.seed()));
    });
    return b.take();
}

inline std::vector<double> holder_q_list() {
    std::vector<double> q;
    for (int i = 0; i <= 6; ++i) q.push_back(std::pow(10.0, -4.0 + 0.5 * i));
    return q;
}

inline SuiteResult suite_boundary_exponent(const SuiteOptions& opt) {
    detail::SuiteBuilder b("boundary-exponent", opt);
    const auto cfg = b.sim(b.paths(1'000'000), b.dt(0.01));
    b.guarded("holder_slope", [&] {
        const auto f = estimators::holder_exponent_fit(1.0, holder_q_list(), cfg, false, 400);
        for (std::size_t i = 0; i < f.q_list.size(); ++i)
            b.record(Record::from_estimate("", "survival", Json{{"q", f.q_list[i]}, {"p", 0.0}, {"t", 1.0}},
                                           f.survival[i], b.seed()));
        Record r = Record::from_value("", "", Json{{"r2", f.fit.r2}}, f.fit.slope, b.seed());
        r.std_err = f.fit.slope_se;
        b.check("holder_slope", std::abs(f.fit.slope - 1.0 / 6.0) <= 0.02,
                "slope " + detail::fmt(f.fit.slope, 5) + " (target 1/6 +- 0.02)", r);
    });
    return b.take();
}

namespace detail {

inline Record table_record(const std::string& op, const std::string& label, const RatioTable& t, double value,
                           double se) {
    Record r = Record::from_value("", op, Json{{"scan", label}, {"points", t.points.size()}, {"used", t.n_used}}, value);
    r.std_err = se;
    r.ci_lo = value - estimators::kZ99 * se;
    r.ci_hi = value + estimators::kZ99 * se;
    return r;
}

inline bool table_finite(const RatioTable& t, std::string& why) {
    if (t.n_used == 0 || !std::isfinite(t.ratio_min) || !std::isfinite(t.ratio_max) || !(t.ratio_min > 0.0)) {
        why = "extremes not finite and positive";
        return false;
    }
    for (const auto& p : t.points) {
        if (p.low_confidence) continue;
        if (!(p.ratio_lo > 0.0) || !std::isfinite(p.ratio_hi)) {
            why = "CI touches 0 or infinity at (" + fmt(p.point.q) + ", " + fmt(p.point.p) + ")";
            return false;
        }
    }
    return true;
}

/// Finite extremes plus stability under doubling the paths and under
/// extending the velocity grid to |p| = 6. `scale` multiplies each survival
/// estimate before the ratio (used for the e^{lambda t} normalisation).
inline void envelope_stability(SuiteBuilder& b, const std::string& label, const dynamics::ProcessKind& kind, double t,
                               std::uint64_t n, double dt, std::uint64_t salt, bool with_extension = true,
                               double scale = 1.0) {
    auto scan = [&](const std::vector<GridPoint>& grid, std::uint64_t paths, std::uint64_t seed_shift) {
        auto cfg = b.sim(paths, dt);
        cfg.seed += seed_shift;
        RatioTable tab = estimators::ratio_scan(kind, grid, cfg, salt);
        if (scale != 1.0) {
            for (auto& p : tab.points) {
                p.ratio *= scale;
                p.ratio_se *= scale;
                p.ratio_lo *= scale;
                p.ratio_hi *= scale;
            }
            tab.finalize();
        }
        return tab;
    };
    const RatioTable base = scan(estimators::standard_grid(t, 3), n, 0);
    for (const auto& p : base.points)
        b.record(Record::from_estimate("", label + ":survival", Json{{"q", p.point.q}, {"p", p.point.p}, {"t", t},
                                                                     {"envelope", p.envelope}, {"ratio", p.ratio},
                                                                     {"low_confidence", p.low_confidence}},
                                       p.survival, b.seed()));
    b.record(table_record(label + ":ratio_min", "base", base, base.ratio_min, base.min_se()));
    b.record(table_record(label + ":ratio_max", "base", base, base.ratio_max, base.max_se()));
    std::string why;
    const bool finite = table_finite(base, why);
    b.check(label + ":finite", finite,
            finite ? "ratio in [" + fmt(base.ratio_min) + ", " + fmt(base.ratio_max) + "] over " +
                         std::to_string(base.n_used) + " points"
                   : why,
            table_record("", "base", base, base.spread(), 0.0));

    const RatioTable doubled = scan(estimators::standard_grid(t, 3), 2 * n, 1);
    b.record(table_record(label + ":ratio_min", "doubled", doubled, doubled.ratio_min, doubled.min_se()));
    b.record(table_record(label + ":ratio_max", "doubled", doubled, doubled.ratio_max, doubled.max_se()));
    const auto sd = estimators::extreme_shift(base, doubled);
    b.check(label + ":doubling_stable", sd.worst() <= 2.0,
            "min shift " + fmt(sd.min_z, 3) + " SE, max shift " + fmt(sd.max_z, 3) + " SE",
            table_record("", "doubled", doubled, sd.worst(), 0.0));

    if (!with_extension) return;
    const RatioTable wide = scan(estimators::standard_grid(t, 6), n, 0);
    b.record(table_record(label + ":ratio_min", "extended", wide, wide.ratio_min, wide.min_se()));
    b.record(table_record(label + ":ratio_max", "extended", wide, wide.ratio_max, wide.max_se()));
    const auto se = estimators::extreme_shift(base, wide);
    b.check(label + ":extension_stable", se.worst() <= 2.0,
            "min shift " + fmt(se.min_z, 3) + " SE, max shift " + fmt(se.max_z, 3) + " SE; spread " +
                fmt(base.spread(), 4) + " -> " + fmt(wide.spread(), 4),
            table_record("", "extended", wide, se.worst(), 0.0));
}

}  // namespace detail

inline SuiteResult suite_envelope(const SuiteOptions& opt) {
    detail::SuiteBuilder b("envelope", opt);
    const std::uint64_t n = b.paths(100'000);
    const double dt = b.dt(0.02);
    b.guarded("ibm", [&] { detail::envelope_stability(b, "ibm", dynamics::Ibm{1.0}, 1.0, n, dt, 500); });
    b.guarded("linear", [&] {
        detail::envelope_stability(b, "linear", dynamics::Linear{{1.0, 0.5, 0.5, 1.0}}, 1.0, n, dt, 501);
    });
    return b.take();
}

inline std::vector<ModelParams> girsanov_parameter_sets() {
    return {{1.0, 0.5, 0.5, 1.0}, {0.0, 0.0, -0.5, 1.0}, {0.5, 0.0, 0.0, 1.0},
            {0.0, 1.0, 0.0, 1.0}, {2.0, -0.5, 1.0, 1.0}, {1.0, 0.0, 1.0, 0.7}};
}

inline SuiteResult suite_girsanov(const SuiteOptions& opt) {
    detail::SuiteBuilder b("girsanov", opt);
    const auto cfg = b.sim(b.paths(1'000'000), b.dt(0.02));
    std::uint64_t stream = 600;
    const PhaseState start{0.5, 0.0};
    for (const auto& m : girsanov_parameter_sets()) {
        const std::string tag = "(" + detail::fmt(m.alpha) + "," + detail::fmt(m.beta) + "," + detail::fmt(m.gamma) +
                                "," + detail::fmt(m.sigma) + ")";
        b.guarded("agreement" + tag, [&] {
            const Estimate d = estimators::exit_prob_mc(dynamics::Linear{m}, start, 1.0, cfg, stream++);
            const auto g = estimators::exit_prob_girsanov(m, start, 1.0, cfg, stream++);
            const double z = estimators::combined_z(d, g.estimate);
            Json in = detail::model_json(m);
            in["t"] = 1.0;
            in["start"] = detail::point_json(start);
            in["direct"] = d.mean;
            in["direct_stderr"] = d.std_err;
            in["ess_fraction"] = g.ess_fraction;
            b.check("agreement" + tag, z <= 3.0 && !g.degenerate,
                    "direct " + detail::fmt(d.mean) + " vs reweighted " + detail::fmt(g.estimate.mean) + ", " +
                        detail::fmt(z, 3) + " SE, ESS " + detail::fmt(100.0 * g.ess_fraction, 3) + "%",
                    Record::from_estimate("", "", in, g.estimate, b.seed()));
        });
        b.guarded("normalization" + tag, [&] {
            const auto z = estimators::girsanov_normalization(m, start, 1.0, cfg, stream++);
            const double dev = estimators::combined_z(z.estimate.mean, z.estimate.std_err, 1.0, 0.0);
            Json in = detail::model_json(m);
            in["t"] = 1.0;
            b.check("normalization" + tag, dev <= 3.0,
                    "E[Z] = " + detail::fmt(z.estimate.mean) + ", " + detail::fmt(dev, 3) + " SE",
                    Record::from_estimate("", "", in, z.estimate, b.seed()));
        });
    }
    return b.take();
}

/// E[q_t] for the eta-process from (q, p): q/2 (3e^{-eta t} - e^{-3 eta t}) + p/(2 eta)(e^{-eta t} - e^{-3 eta t}).
inline double eta_mean_position(double eta, double q, double p, double t) {
    const double a = std::exp(-eta * t), c = std::exp(-3.0 * eta * t);
    return 0.5 * q * (3.0 * a - c) + (eta > 0.0 ? p / (2.0 * eta) * (a - c) : p * t);
}

inline SuiteResult suite_eta(const SuiteOptions& opt) {
    detail::SuiteBuilder b("eta", opt);
    const double eta = 0.5;
    const std::uint64_t n_draws = b.paths(1'000'000);
    const dynamics::EtaKernel eta_kernel(eta, 1.0);
    const dynamics::LinearKernel lin_kernel({3.0 * eta * eta, 0.0, 4.0 * eta, 1.0});
    std::uint64_t stream = 700;
    for (const PhaseState start : {PhaseState{1.0, 0.0}, PhaseState{0.5, 1.0}}) {
        for (const double t : {0.5, 1.0, 2.0}) {
            for (const bool via_eta : {true, false}) {
                const std::uint64_t st = stream++;
                const auto mom = estimators::map_reduce<estimators::Moments>(n_draws, [&](std::uint64_t lo,
                                                                                          std::uint64_t hi) {
                    estimators::Moments m;
                    const auto lk = lin_kernel;
                    for (std::uint64_t i = lo; i < hi; ++i) {
                        dynamics::Rng rng(b.seed(), i, st);
                        const dynamics::Vec2 x{start.q, start.p};
                        m.add(via_eta ? eta_kernel.sample(x, 0.0, t, rng).q : lk.sample(x, 0.0, t, rng).q);
                    }
                    return m;
                });
                const double exact = eta_mean_position(eta, start.q, start.p, t);
                const Estimate e = mom.estimate();
                const double z = estimators::combined_z(e.mean, e.std_err, exact, 0.0);
                const std::string name = std::string(via_eta ? "mean_position_eta" : "mean_position_linear") + "(q=" +
                                         detail::fmt(start.q) + ",p=" + detail::fmt(start.p) + ",t=" + detail::fmt(t) +
                                         ")";
                b.check(name, z <= 4.0, detail::fmt(e.mean) + " vs " + detail::fmt(exact) + ", " + detail::fmt(z, 3) + " SE",
                        Record::from_estimate("", "", Json{{"eta", eta}, {"start", detail::point_json(start)}, {"t", t},
                                                           {"exact", exact}},
                                              e, b.seed()));
            }
        }
    }
    const std::uint64_t n = b.paths(100'000);
    const double dt = b.dt(0.02);
    b.guarded("eta_scan", [&] { detail::envelope_stability(b, "eta", dynamics::Eta{eta, 1.0}, 1.0, n, dt, 800); });
    const auto cfg = b.sim(b.paths(1'000'000), dt);
    for (const PhaseState s : {PhaseState{0.3, 0.0}, PhaseState{0.5, 1.0}, PhaseState{0.7, -1.0}}) {
        const std::string name = "cross_path(q=" + detail::fmt(s.q) + ",p=" + detail::fmt(s.p) + ")";
        b.guarded(name, [&] {
            const Estimate a = estimators::exit_prob_mc(dynamics::Eta{eta, 1.0}, s, 1.0, cfg, stream++);
            const Estimate c =
                estimators::exit_prob_mc(dynamics::Linear{{3.0 * eta * eta, 0.0, 4.0 * eta, 1.0}}, s, 1.0, cfg, stream++);
            const double z = estimators::combined_z(a, c);
            b.check(name, z <= 3.0, detail::fmt(a.mean) + " vs " + detail::fmt(c.mean) + ", " + detail::fmt(z, 3) + " SE",
                    Record::from_estimate("", "", Json{{"eta", eta}, {"start", detail::point_json(s)}, {"linear", c.mean},
                                                       {"linear_stderr", c.std_err}},
                                          a, b.seed()));
        });
    }
    return b.take();
}

inline SuiteResult suite_qsd(const SuiteOptions& opt) {
    detail::SuiteBuilder b("qsd", opt);
    const ModelParams m{0.0, 0.0, 0.0, 1.0};
    const double dt = b.dt(0.05);
    auto cfg = b.sim(b.paths(1'000'000), dt);
    qsd::FleetOptions fleet;
    fleet.n_particles = std::max<std::size_t>(100, static_cast<std::size_t>(b.paths(10'000)));
    fleet.t_max = 20.0;
    fleet.macro_step = 0.05;

    double lambda_hat = NAN;
    b.guarded("lambda0_two_estimators", [&] {
        qsd::Lambda0Options lo;
        lo.init = {0.5, 0.0};
        lo.fleet = fleet;
        const auto r = qsd::lambda0_estimate(m, cfg, lo);
        lambda_hat = r.regression.lambda0_hat;
        Record rr = Record::from_value("", "lambda0_regression",
                                       Json{{"init", detail::point_json({0.5, 0.0})}, {"t_lo", lo.t_lo}, {"t_hi", lo.t_hi},
                                            {"r2", r.regression.r2}},
                                       r.regression.lambda0_hat, b.seed());
        rr.std_err = r.regression.std_err;
        rr.n = cfg.n_paths;
        b.record(rr);
        Record rf = Record::from_value("", "lambda0_fleming_viot",
                                       Json{{"particles", fleet.n_particles}, {"t_max", fleet.t_max},
                                            {"macro_step", fleet.macro_step}},
                                       r.fv_rate, b.seed());
        rf.std_err = r.fv_rate_se;
        rf.n = fleet.n_particles;
        b.record(rf);
        b.check("lambda0_two_estimators", r.relative_gap <= 0.05,
                "regression " + detail::fmt(r.regression.lambda0_hat) + " vs Fleming-Viot " + detail::fmt(r.fv_rate) +
                    " (gap " + detail::fmt(100.0 * r.relative_gap, 3) + "%)",
                Record::from_value("", "", Json{}, r.relative_gap, b.seed()));
    });

    b.guarded("lambda0_init_independence", [&] {
        qsd::Lambda0Options lo;
        lo.run_fleet = false;
        std::vector<double> lams;
        for (const qsd::InitSpec init : {qsd::InitSpec{0.5, 0.0}, qsd::InitSpec{0.2, 0.0}, qsd::InitSpec{0.5, 1.5}}) {
            lo.init = init;
            auto c2 = cfg;
            c2.seed += 17;
            const auto r = qsd::lambda0_estimate(m, c2, lo);
            lams.push_back(r.regression.lambda0_hat);
            Record rr = Record::from_value("", "lambda0_regression", Json{{"init", detail::point_json({init.q, init.p})}},
                                           r.regression.lambda0_hat, b.seed());
            rr.std_err = r.regression.std_err;
            rr.n = c2.n_paths;
            b.record(rr);
        }
        const double worst = std::max(std::abs(lams[1] / lams[0] - 1.0), std::abs(lams[2] / lams[0] - 1.0));
        b.check("lambda0_init_independence", worst <= 0.05,
                "rates " + detail::fmt(lams[0]) + ", " + detail::fmt(lams[1]) + ", " + detail::fmt(lams[2]),
                Record::from_value("", "", Json{}, worst, b.seed()));
    });

    b.guarded("qsd_density_ratio", [&] {
        const auto run = qsd::fleming_viot_run(m, cfg, fleet, {0.2, 0.0});
        auto cfg2 = cfg;
        const auto run2 = qsd::fleming_viot_run(m, cfg2, fleet, {0.8, 0.0});
        const double gap = std::abs(run.rate_mean / run2.rate_mean - 1.0);
        b.check("fleet_init_independence", gap <= 0.05,
                "kill rates " + detail::fmt(run.rate_mean) + " and " + detail::fmt(run2.rate_mean) + ", drift " +
                    detail::fmt(100.0 * run.drift, 3) + "%",
                Record::from_value("", "", Json{{"rate_a", run.rate_mean}, {"rate_b", run2.rate_mean}}, gap, b.seed()));
        const auto d = qsd::qsd_density_estimate(run, m);
        b.check("qsd_density_ratio", d.ratio_max / d.ratio_min <= 10.0,
                "ratio in [" + detail::fmt(d.ratio_min) + ", " + detail::fmt(d.ratio_max) + "] over " +
                    std::to_string(d.bins_used) + " bins; symmetry chi2 p = " + detail::fmt(d.chi2_pvalue, 3),
                Record::from_value("", "",
                                   Json{{"ratio_min", d.ratio_min}, {"ratio_max", d.ratio_max}, {"bins", d.bins_used},
                                        {"chi2", d.chi2}, {"chi2_df", d.chi2_df}, {"chi2_pvalue", d.chi2_pvalue}},
                                   d.ratio_max / d.ratio_min, b.seed()));
    });

    b.guarded("phi_shape", [&] {
        if (!std::isfinite(lambda_hat)) throw EstimationError("no lambda0 estimate available");
        const double t = 2.0;
        detail::envelope_stability(b, "phi", qsd::kind_for(m), t, b.paths(100'000), dt, 900, false,
                                   std::exp(lambda_hat * t));
    });

    b.guarded("tv_decay", [&] {
        auto tcfg = cfg;
        tcfg.n_paths = b.paths(5'000'000);
        const std::vector<double> checkpoints{1.0, 2.0, 3.0, 4.0, 5.0};
        const auto pts = qsd::conditional_tv_decay(m, {0.2, 0.0}, {0.8, 0.0}, checkpoints, tcfg);
        bool monotone = true;
        std::vector<double> x, y;
        std::string series;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i > 0 && !(pts[i].tv < pts[i - 1].tv)) monotone = false;
            x.push_back(pts[i].t);
            y.push_back(std::log(pts[i].tv));
            series += (i ? ", " : "") + detail::fmt(pts[i].tv, 4) + " (floor " + detail::fmt(pts[i].noise_floor, 3) + ")";
            Record r = Record::from_value("", "tv", Json{{"t", pts[i].t}, {"noise_floor", pts[i].noise_floor},
                                                         {"survivors1", pts[i].survivors1},
                                                         {"survivors2", pts[i].survivors2}},
                                          pts[i].tv, b.seed());
            r.n = tcfg.n_paths;
            b.record(r);
        }
        const auto fit = estimators::least_squares(x, y);
        b.check("tv_decay", monotone && fit.slope < 0.0 && fit.r2 >= 0.8,
                "TV " + series + "; slope " + detail::fmt(fit.slope, 4) + ", r2 " + detail::fmt(fit.r2, 4) +
                    (monotone ? "" : "; not monotone"),
                Record::from_value("", "", Json{{"slope", fit.slope}}, fit.r2, b.seed()));
    });
    return b.take();
}

// ---------------------------------------------------------------------------

inline const std::map<std::string, std::function<SuiteResult(const SuiteOptions&)>>& suite_registry() {
    static const std::map<std::string, std::function<SuiteResult(const SuiteOptions&)>> r = {
        {"specfun", suite_specfun},
        {"closed-form", suite_closed_form},
        {"identities", suite_identities},
        {"long-time", suite_long_time},
        {"boundary-exponent", suite_boundary_exponent},
        {"envelope", suite_envelope},
        {"girsanov", suite_girsanov},
        {"eta", suite_eta},
        {"qsd", suite_qsd},
    };
    return r;
}

inline SuiteResult run_suite(const std::string& name, const SuiteOptions& opt) {
    const auto& reg = suite_registry();
    const auto it = reg.find(name);
    if (it == reg.end()) throw ConfigError("unknown suite '" + name + "'");
    return it->second(opt);
}

/// Fixed-width pass/fail table.
inline std::string format_checks(const SuiteResult& r) {
    std::string out;
    for (const auto& c : r.checks) {
        out += std::string(c.passed ? "PASS  " : "FAIL  ") + r.suite + " / " + c.name + ": " + c.detail + "\n";
    }
    return out;
}

}  // namespace kinetic_exit::harness
