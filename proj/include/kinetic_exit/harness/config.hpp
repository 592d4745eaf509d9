#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/simulate.hpp"

namespace kinetic_exit::harness {

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Keys accepted in a config file (and settable from the command line).
inline const std::set<std::string>& config_schema() {
    static const std::set<std::string> keys = {
        // model
        "model", "alpha", "beta", "gamma", "sigma", "eta",
        // simulation
        "dt", "t_horizon", "n_paths", "seed", "refine_threshold", "max_refine_depth",
        // point estimates
        "q", "p", "t", "method",
        // suites, particle systems and decay runs
        "suite", "scale", "particles", "t_max", "macro_step", "q1", "p1", "q2", "p2", "checkpoints", "bins_q",
        "bins_p", "p_max",
        // eval
        "fn", "from", "to", "step", "lambda"};
    return keys;
}

/// Flat `key = value` configuration with `#` comments.
class Config {
public:
    static Config parse(std::string_view text) {
        Config c;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t nl = text.find('\n', pos);
            std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
            pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            c.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot read config file " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    void set(const std::string& key, const std::string& value) {
        if (!config_schema().count(key)) throw ConfigError("unknown config key '" + key + "'");
        if (value.empty()) throw ConfigError("empty value for key '" + key + "'");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        double v = 0.0;
        const char* b = it->second.data();
        const char* e = b + it->second.size();
        const auto r = std::from_chars(b, e, v);
        if (r.ec != std::errc() || r.ptr != e || !std::isfinite(v))
            throw ConfigError("key '" + key + "': not a finite number: " + it->second);
        return v;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::uint64_t v = 0;
        const char* b = it->second.data();
        const char* e = b + it->second.size();
        const auto r = std::from_chars(b, e, v);
        if (r.ec == std::errc() && r.ptr == e) return v;
        // allow 1e6-style counts
        const double d = get_double(key, 0.0);
        if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
        throw ConfigError("key '" + key + "': not a non-negative integer: " + it->second);
    }

    /// Sorted `key=value` lines; the digest input.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
        return out;
    }

    std::uint64_t digest() const { return fnv1a64(canonical()); }
    std::string digest_hex() const { return hex64(digest()); }

    ModelParams model(const ModelParams& fallback = {}) const {
        ModelParams m;
        m.alpha = get_double("alpha", fallback.alpha);
        m.beta = get_double("beta", fallback.beta);
        m.gamma = get_double("gamma", fallback.gamma);
        m.sigma = get_double("sigma", fallback.sigma);
        m.validate();
        return m;
    }

    dynamics::SimConfig sim(const dynamics::SimConfig& fallback = {}) const {
        dynamics::SimConfig s;
        s.dt = get_double("dt", fallback.dt);
        s.t_horizon = get_double("t_horizon", fallback.t_horizon);
        s.n_paths = get_u64("n_paths", fallback.n_paths);
        s.seed = get_u64("seed", fallback.seed);
        s.refine_threshold = get_double("refine_threshold", fallback.refine_threshold);
        s.max_refine_depth = static_cast<int>(get_u64("max_refine_depth", fallback.max_refine_depth));
        return s;
    }

private:
    static std::string_view trim(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace kinetic_exit::harness
