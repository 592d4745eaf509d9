#pragma once

#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/estimators/survival.hpp"
#include "kinetic_exit/harness/config.hpp"
#include "kinetic_exit/harness/records.hpp"
#include "kinetic_exit/harness/suites.hpp"
#include "kinetic_exit/qsd/fleming_viot.hpp"
#include "kinetic_exit/qsd/tv_decay.hpp"
#include "kinetic_exit/specfun/envelopes.hpp"
#include "kinetic_exit/specfun/g_function.hpp"
#include "kinetic_exit/specfun/lachal.hpp"

namespace kinetic_exit::harness {

namespace cli_detail {

/// Command-line flag for a config key: `n_paths` -> `--n-paths` (plus `--paths`).
inline std::string flag_for(const std::string& key) {
    std::string f = key;
    for (char& c : f)
        if (c == '_') c = '-';
    return "--" + f;
}

struct Invocation {
    std::string name;
    std::string config_file;
    std::string out;
    std::map<std::string, std::string> flags;  ///< config key -> raw value
    std::vector<std::string> positional;
    std::string csv;
    std::string rates_csv;
};

inline void add_keys(CLI::App* sub, Invocation& inv, const std::vector<std::string>& keys) {
    for (const auto& k : keys) {
        std::string names = flag_for(k);
        if (k == "n_paths") names += ",--paths";
        sub->add_option_function<std::string>(
            names, [&inv, k](const std::string& v) { inv.flags[k] = v; }, "config key '" + k + "'");
    }
    sub->add_option("--config", inv.config_file, "key = value config file");
}

inline Config effective_config(const Invocation& inv) {
    Config c = inv.config_file.empty() ? Config{} : Config::load(inv.config_file);
    for (const auto& [k, v] : inv.flags) c.set(k, v);
    return c;
}

inline std::string schema_help() {
    std::string s = "config keys:";
    for (const auto& k : config_schema()) s += " " + k;
    return s + "\n";
}

struct Clock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

inline RunManifest manifest_for(const std::string& command, const Config& c, std::uint64_t seed, const Clock& clk) {
    RunManifest m;
    m.command = command;
    m.config_digest = c.digest_hex();
    m.seed = seed;
    m.wall_time = clk.seconds();
    return m;
}

/// Write to `path` with a manifest, or to stdout when no path is given.
inline void emit(const std::string& path, const std::string& text, const RunManifest& m) {
    if (path.empty())
        std::cout << text;
    else
        write_with_manifest(path, text, m);
}

inline dynamics::ProcessKind process_from(const Config& c) {
    const std::string model = c.get_string("model", "ibm");
    if (model == "ibm") {
        const double s = c.get_double("sigma", 1.0);
        if (!(s > 0.0)) throw ConfigError("sigma must be > 0");
        return dynamics::Ibm{s};
    }
    if (model == "linear") return dynamics::Linear{c.model()};
    if (model == "eta") {
        const double eta = c.get_double("eta", 0.5);
        const double s = c.get_double("sigma", 1.0);
        if (!(eta > 0.0) || !(s > 0.0)) throw ConfigError("eta and sigma must be > 0");
        return dynamics::Eta{eta, s};
    }
    throw ConfigError("model must be one of ibm, linear, eta (got '" + model + "')");
}

inline Json inputs_json(const Config& c, const std::vector<std::string>& keys) {
    Json j = Json::object();
    for (const auto& k : keys)
        if (c.has(k)) j[k] = c.get_string(k, "");
    return j;
}

// ---------------------------------------------------------------------------

inline int run_eval(const Invocation& inv) {
    const Config c = effective_config(inv);
    const Clock clk;
    const std::string fn = c.get_string("fn", "g");
    const double from = c.get_double("from", -5.0), to = c.get_double("to", 5.0), step = c.get_double("step", 0.01);
    if (!(step > 0.0) || !(to >= from)) throw ConfigError("eval: need step > 0 and to >= from");
    const double span = (to - from) / step;
    if (span > 1e7) throw ConfigError("eval: grid too large");
    const auto n = static_cast<long>(std::floor(span + 1e-9));
    const double p = c.get_double("p", 0.0);

    std::function<double(double)> f;
    std::vector<std::string> header;
    if (fn == "g" || fn == "g_prime" || fn == "g_log") {
        header = {"z", fn};
        if (fn == "g") f = [](double z) { return specfun::g(z); };
        if (fn == "g_prime") f = [](double z) { return specfun::g_prime(z); };
        if (fn == "g_log") f = [](double z) { return specfun::g_log(z); };
    } else if (fn == "exit_side") {
        header = {"q", "exit_right_first_prob"};
        f = [](double q) { return specfun::exit_right_first_prob_at_rest(q); };
    } else if (fn == "h" || fn == "H" || fn == "G" || fn == "T" || fn == "Hfull") {
        header = {"q", fn};
        const ModelParams m = c.model();
        const double lambda = c.get_double("lambda", 0.5);
        if (fn == "h") f = [p](double q) { return specfun::h(q, p); };
        if (fn == "H") f = [p](double q) { return specfun::envelope_H(q, p); };
        if (fn == "G") f = [p, lambda, s = m.sigma](double q) { return specfun::envelope_G(lambda, s, q, p); };
        if (fn == "T") f = [p, m](double q) { return specfun::envelope_T(m, q, p); };
        if (fn == "Hfull") f = [p, m](double q) { return specfun::envelope_Hfull(m, q, p); };
    } else {
        throw ConfigError("eval: fn must be one of g, g_prime, g_log, exit_side, h, H, G, T, Hfull");
    }
    CsvWriter csv(header);
    for (long i = 0; i <= n; ++i) {
        const double x = from + static_cast<double>(i) * step;
        csv.row({x, f(x)});
    }
    emit(inv.out, csv.text(), manifest_for("eval", c, 0, clk));
    return 0;
}

inline int run_exit_prob(const Invocation& inv) {
    const Config c = effective_config(inv);
    const Clock clk;
    const auto kind = process_from(c);
    dynamics::SimConfig sim = c.sim({0.01, 1.0, 100000, 0, 0.1, 6});
    const double t = c.get_double("t", 1.0);
    const PhaseState start{c.get_double("q", 0.5), c.get_double("p", 0.0)};
    const std::string method = c.get_string("method", "direct");
    Record r;
    if (method == "direct") {
        const Estimate e = estimators::exit_prob_mc(kind, start, t, sim);
        r = Record::from_estimate("exit-prob", "survival_direct", Json::object(), e, sim.seed);
    } else if (method == "girsanov") {
        if (c.get_string("model", "ibm") == "eta") throw ConfigError("girsanov reweighting needs model ibm or linear");
        const ModelParams m = c.get_string("model", "ibm") == "ibm" ? ModelParams{0, 0, 0, c.get_double("sigma", 1.0)}
                                                                    : c.model();
        const auto g = estimators::exit_prob_girsanov(m, start, t, sim);
        r = Record::from_estimate("exit-prob", "survival_girsanov", Json::object(), g.estimate, sim.seed);
        r.inputs["ess_fraction"] = g.ess_fraction;
    } else {
        throw ConfigError("method must be direct or girsanov");
    }
    Json in = inputs_json(c, {"model", "alpha", "beta", "gamma", "sigma", "eta", "dt", "refine_threshold",
                              "max_refine_depth"});
    in["q"] = start.q;
    in["p"] = start.p;
    in["t"] = t;
    in["dt"] = sim.dt;
    for (auto& [k, v] : r.inputs.items()) in[k] = v;
    r.inputs = in;
    r.manifest_digest = c.digest_hex();
    emit(inv.out, r.to_line() + "\n", manifest_for("exit-prob", c, sim.seed, clk));
    return 0;
}

inline int run_verify(const Invocation& inv) {
    const Config c = effective_config(inv);
    const Clock clk;
    SuiteOptions opt;
    opt.seed = c.get_u64("seed", 1);
    if (c.has("n_paths")) opt.n_paths = c.get_u64("n_paths", 0);
    if (c.has("dt")) opt.dt = c.get_double("dt", 0.01);
    opt.scale = c.get_double("scale", 1.0);
    if (!(opt.scale > 0.0)) throw ConfigError("scale must be > 0");
    opt.digest = c.digest_hex();
    const std::string which = c.get_string("suite", "");
    if (which.empty()) throw ConfigError("verify: --suite is required");
    std::vector<std::string> names;
    if (which == "all")
        for (const auto& [k, v] : suite_registry()) names.push_back(k);
    else
        names.push_back(which);
    for (const auto& n : names)
        if (!suite_registry().count(n)) throw ConfigError("unknown suite '" + n + "'");
    bool ok = true;
    std::vector<Record> records;
    for (const auto& n : names) {
        const SuiteResult r = run_suite(n, opt);
        std::cout << format_checks(r);
        ok = ok && r.passed();
        records.insert(records.end(), r.records.begin(), r.records.end());
    }
    if (!inv.out.empty()) write_with_manifest(inv.out, records_to_jsonl(records), manifest_for("verify", c, opt.seed, clk));
    std::cout << (ok ? "verify: all checks passed\n" : "verify: FAILED\n");
    return ok ? 0 : 1;
}

inline qsd::Binning binning_from(const Config& c) {
    qsd::Binning b;
    b.nq = static_cast<int>(c.get_u64("bins_q", 50));
    b.np = static_cast<int>(c.get_u64("bins_p", 50));
    b.p_max = c.get_double("p_max", 4.0);
    b.validate();
    return b;
}

inline int run_qsd(const Invocation& inv) {
    const Config c = effective_config(inv);
    const Clock clk;
    const ModelParams m = c.model();
    const dynamics::SimConfig sim = c.sim({0.05, 1.0, 1000000, 0, 0.1, 6});
    qsd::Lambda0Options lo;
    lo.init = {c.get_double("q", 0.5), c.get_double("p", 0.0)};
    lo.fleet.n_particles = c.get_u64("particles", 10000);
    lo.fleet.t_max = c.get_double("t_max", 20.0);
    lo.fleet.macro_step = c.get_double("macro_step", 0.05);
    lo.fleet.binning = binning_from(c);
    lo.run_fleet = false;
    const auto reg = qsd::lambda0_estimate(m, sim, lo);
    const auto run = qsd::fleming_viot_run(m, sim, lo.fleet, lo.init);
    const auto dens = qsd::qsd_density_estimate(run, m);
    const std::string digest = c.digest_hex();

    Json base = inputs_json(c, {"alpha", "beta", "gamma", "sigma", "dt", "particles", "t_max", "macro_step"});
    base["init"] = Json{{"q", lo.init.q}, {"p", lo.init.p}};
    std::vector<Record> recs;
    Record a = Record::from_value("qsd", "lambda0_regression", base, reg.regression.lambda0_hat, sim.seed);
    a.std_err = reg.regression.std_err;
    a.ci_lo = a.estimate - estimators::kZ99 * a.std_err;
    a.ci_hi = a.estimate + estimators::kZ99 * a.std_err;
    a.n = sim.n_paths;
    recs.push_back(a);
    Record b = Record::from_value("qsd", "lambda0_fleming_viot", base, run.rate_mean, sim.seed);
    b.std_err = run.rate_se;
    b.ci_lo = b.estimate - estimators::kZ99 * b.std_err;
    b.ci_hi = b.estimate + estimators::kZ99 * b.std_err;
    b.n = lo.fleet.n_particles;
    b.inputs["drift"] = run.drift;
    recs.push_back(b);
    Json din = base;
    din["ratio_min"] = dens.ratio_min;
    din["ratio_max"] = dens.ratio_max;
    din["bins"] = dens.bins_used;
    din["entering_mass"] = dens.entering_mass;
    din["neighbour_mass"] = dens.neighbour_mass;
    recs.push_back(Record::from_value("qsd", "density_ratio_spread", din, dens.ratio_max / dens.ratio_min, sim.seed));
    for (auto& r : recs) r.manifest_digest = digest;
    emit(inv.out, records_to_jsonl(recs), manifest_for("qsd", c, sim.seed, clk));

    if (!inv.csv.empty()) {
        const auto& bn = run.window_hist.binning;
        const double total = static_cast<double>(run.window_hist.total());
        CsvWriter csv({"q", "p", "density"});
        for (int i = 0; i < bn.nq; ++i)
            for (int j = 0; j < bn.np; ++j) {
                const double cnt = static_cast<double>(run.window_hist.counts[static_cast<std::size_t>(i) * bn.np + j]);
                csv.row({bn.q_centre(i), bn.p_centre(j), cnt / (total * bn.dq() * bn.dp())});
            }
        write_with_manifest(inv.csv, csv.text(), manifest_for("qsd", c, sim.seed, clk));
    }
    if (!inv.rates_csv.empty()) {
        CsvWriter csv({"t", "kill_rate"});
        for (std::size_t k = 0; k < run.times.size(); ++k) csv.row({run.times[k], run.kill_rates[k]});
        write_with_manifest(inv.rates_csv, csv.text(), manifest_for("qsd", c, sim.seed, clk));
    }
    return 0;
}

inline std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        Config tmp;
        tmp.set("t", item);
        out.push_back(tmp.get_double("t", 0.0));
    }
    return out;
}

inline int run_tv_decay(const Invocation& inv) {
    const Config c = effective_config(inv);
    const Clock clk;
    const ModelParams m = c.model();
    const dynamics::SimConfig sim = c.sim({0.05, 1.0, 1000000, 0, 0.1, 6});
    const qsd::InitSpec th1{c.get_double("q1", 0.2), c.get_double("p1", 0.0)};
    const qsd::InitSpec th2{c.get_double("q2", 0.8), c.get_double("p2", 0.0)};
    const auto checkpoints = parse_list(c.get_string("checkpoints", "1,2,3,4,5"));
    qsd::TvOptions to;
    to.binning = binning_from(c);
    const auto pts = qsd::conditional_tv_decay(m, th1, th2, checkpoints, sim, to);
    std::vector<Record> recs;
    CsvWriter csv({"t", "tv", "noise_floor", "survivors1", "survivors2"});
    for (const auto& p : pts) {
        Json in = inputs_json(c, {"alpha", "beta", "gamma", "sigma", "dt"});
        in["theta1"] = Json{{"q", th1.q}, {"p", th1.p}};
        in["theta2"] = Json{{"q", th2.q}, {"p", th2.p}};
        in["t"] = p.t;
        in["noise_floor"] = p.noise_floor;
        Record r = Record::from_value("tv-decay", "tv", in, p.tv, sim.seed);
        r.n = sim.n_paths;
        r.manifest_digest = c.digest_hex();
        recs.push_back(r);
        csv.row({p.t, p.tv, p.noise_floor, static_cast<double>(p.survivors1), static_cast<double>(p.survivors2)});
    }
    emit(inv.out, records_to_jsonl(recs), manifest_for("tv-decay", c, sim.seed, clk));
    if (!inv.csv.empty()) write_with_manifest(inv.csv, csv.text(), manifest_for("tv-decay", c, sim.seed, clk));
    return 0;
}

/// Merge JSONL result files into one CSV table. Records of the same suite
/// must share one config digest.
inline int run_report(const Invocation& inv) {
    const Clock clk;
    if (inv.positional.empty()) throw ConfigError("report: no input files");
    std::map<std::string, std::pair<std::string, std::string>> digest_of;  // suite -> (digest, file)
    std::vector<Record> all;
    for (const auto& path : inv.positional) {
        for (auto& r : read_jsonl(path)) {
            const auto [it, fresh] = digest_of.emplace(r.suite, std::make_pair(r.manifest_digest, path));
            if (!fresh && it->second.first != r.manifest_digest)
                throw ConfigError("report: suite '" + r.suite + "' has conflicting config digests (" +
                                  it->second.first + " in " + it->second.second + ", " + r.manifest_digest + " in " +
                                  path + ")");
            all.push_back(std::move(r));
        }
    }
    CsvWriter csv({"suite", "op", "estimate", "stderr", "ci_lo", "ci_hi", "n", "seed", "pass", "manifest_digest"});
    for (const auto& r : all)
        csv.row_strings({r.suite, r.op, fmt17(r.estimate), fmt17(r.std_err), fmt17(r.ci_lo), fmt17(r.ci_hi),
                         std::to_string(r.n), std::to_string(r.seed),
                         r.pass ? (*r.pass ? "true" : "false") : "", r.manifest_digest});
    Config c;
    RunManifest m = manifest_for("report", c, 0, clk);
    std::string joined;
    for (const auto& p : inv.positional) joined += p + "\n";
    m.config_digest = hex64(fnv1a64(joined));
    emit(inv.out, csv.text(), m);
    return 0;
}

}  // namespace cli_detail

/// Entry point of the `kinetic_exit` tool. Returns 0 on success, 1 when a
/// verification suite fails and 2 on usage or configuration errors.
inline int cli_main(int argc, char** argv) {
    using namespace cli_detail;
    CLI::App app{"Killed kinetic Langevin process: boundary functions, exit estimates, quasi-stationary runs"};
    app.require_subcommand(1);
    Invocation inv;
    const std::vector<std::string> model_keys{"model", "alpha", "beta", "gamma", "sigma", "eta"};
    const std::vector<std::string> sim_keys{"dt", "t_horizon", "n_paths", "seed", "refine_threshold", "max_refine_depth"};
    auto join = [](std::vector<std::string> a, const std::vector<std::string>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };

    auto* eval = app.add_subcommand("eval", "tabulate a special function on a grid (CSV)");
    add_keys(eval, inv, {"fn", "from", "to", "step", "p", "lambda", "alpha", "beta", "gamma", "sigma"});
    auto* exitp = app.add_subcommand("exit-prob", "survival probability P(tau > t) at one point (JSONL record)");
    add_keys(exitp, inv, join(join(model_keys, sim_keys), {"q", "p", "t", "method"}));
    auto* verify = app.add_subcommand("verify", "run a named verification suite, or 'all'");
    add_keys(verify, inv, {"suite", "seed", "n_paths", "dt", "scale"});
    auto* qsdc = app.add_subcommand("qsd", "Fleming-Viot run, QSD density and principal rate");
    add_keys(qsdc, inv,
             join(join(model_keys, sim_keys), {"q", "p", "particles", "t_max", "macro_step", "bins_q", "bins_p", "p_max"}));
    qsdc->add_option("--csv", inv.csv, "density table output");
    qsdc->add_option("--rates-csv", inv.rates_csv, "kill-rate series output");
    auto* tv = app.add_subcommand("tv-decay", "conditional total-variation decay between two initial laws");
    add_keys(tv, inv, join(join(model_keys, sim_keys), {"q1", "p1", "q2", "p2", "checkpoints", "bins_q", "bins_p", "p_max"}));
    tv->add_option("--csv", inv.csv, "decay series output");
    auto* report = app.add_subcommand("report", "merge JSONL result files into one CSV table");
    report->add_option("files", inv.positional, "result files")->required();
    for (auto* s : {eval, exitp, verify, qsdc, tv, report}) s->add_option("--out,-o", inv.out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code != 0) std::cerr << schema_help();
        return code == 0 ? 0 : 2;
    }
    try {
        if (*eval) return run_eval(inv);
        if (*exitp) return run_exit_prob(inv);
        if (*verify) return run_verify(inv);
        if (*qsdc) return run_qsd(inv);
        if (*tv) return run_tv_decay(inv);
        if (*report) return run_report(inv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n" << schema_help();
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const EstimationError& e) {
        std::cerr << "estimation failed: " << e.what() << "\n";
        return 1;
    } catch (const ConvergenceError& e) {
        std::cerr << "estimation failed: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace kinetic_exit::harness
