#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/estimators/estimate.hpp"
#include "kinetic_exit/harness/config.hpp"

namespace kinetic_exit::harness {

inline constexpr const char* kCodeVersion = "0.1.0";

using Json = nlohmann::ordered_json;

/// One result line: {suite, op, inputs, estimate, stderr, ci, n, seed,
/// manifest_digest} plus an optional pass flag for assertion suites.
struct Record {
    std::string suite;
    std::string op;
    Json inputs = Json::object();
    double estimate = 0.0;
    double std_err = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    std::uint64_t n = 0;
    std::uint64_t seed = 0;
    std::string manifest_digest;
    std::optional<bool> pass;

    static Record from_estimate(std::string suite, std::string op, Json inputs, const estimators::Estimate& e,
                                std::uint64_t seed) {
        Record r;
        r.suite = std::move(suite);
        r.op = std::move(op);
        r.inputs = std::move(inputs);
        r.estimate = e.mean;
        r.std_err = e.std_err;
        r.ci_lo = e.ci_lo;
        r.ci_hi = e.ci_hi;
        r.n = e.n_paths;
        r.seed = seed;
        return r;
    }

    static Record from_value(std::string suite, std::string op, Json inputs, double value, std::uint64_t seed = 0) {
        Record r;
        r.suite = std::move(suite);
        r.op = std::move(op);
        r.inputs = std::move(inputs);
        r.estimate = r.ci_lo = r.ci_hi = value;
        r.seed = seed;
        return r;
    }

    Json to_json() const {
        Json j;
        j["suite"] = suite;
        j["op"] = op;
        j["inputs"] = inputs;
        j["estimate"] = finite_or_null(estimate);
        j["stderr"] = finite_or_null(std_err);
        j["ci"] = Json::array({finite_or_null(ci_lo), finite_or_null(ci_hi)});
        j["n"] = n;
        j["seed"] = seed;
        j["manifest_digest"] = manifest_digest;
        if (pass) j["pass"] = *pass;
        return j;
    }

    std::string to_line() const { return to_json().dump(); }

    static Record from_json(const Json& j) {
        Record r;
        r.suite = j.at("suite").get<std::string>();
        r.op = j.at("op").get<std::string>();
        r.inputs = j.value("inputs", Json::object());
        auto num = [](const Json& v) { return v.is_null() ? NAN : v.get<double>(); };
        r.estimate = num(j.at("estimate"));
        r.std_err = num(j.at("stderr"));
        r.ci_lo = num(j.at("ci").at(0));
        r.ci_hi = num(j.at("ci").at(1));
        r.n = j.at("n").get<std::uint64_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.manifest_digest = j.at("manifest_digest").get<std::string>();
        if (j.contains("pass")) r.pass = j.at("pass").get<bool>();
        return r;
    }

private:
    static Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
};

inline std::string records_to_jsonl(const std::vector<Record>& records) {
    std::string out;
    for (const auto& r : records) out += r.to_line() + "\n";
    return out;
}

inline std::vector<Record> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    std::vector<Record> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (line.empty()) continue;
        try {
            out.push_back(Record::from_json(Json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + ":" + std::to_string(no) + ": malformed record (" + e.what() + ")");
        }
    }
    return out;
}

/// 17 significant digits (round-trips every double).
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row_strings(header); }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_) throw ConfigError("csv: row width does not match header");
        std::vector<std::string> s;
        for (double v : values) s.push_back(fmt17(v));
        row_strings(s);
    }

    void row_strings(const std::vector<std::string>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) text_ += ',';
            text_ += csv_field(values[i]);
        }
        text_ += "\r\n";
    }

    const std::string& text() const { return text_; }

private:
    std::size_t columns_;
    std::string text_;
};

struct RunManifest {
    std::string command;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::string code_version = kCodeVersion;
    double wall_time = 0.0;
    std::vector<std::string> outputs;

    Json to_json() const {
        return Json{{"command", command},         {"config_digest", config_digest}, {"seed", seed},
                    {"code_version", code_version}, {"wall_time", wall_time},       {"outputs", outputs}};
    }

    static RunManifest from_json(const Json& j) {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.code_version = j.at("code_version").get<std::string>();
        m.wall_time = j.at("wall_time").get<double>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        return m;
    }
};

inline std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

/// Write an output file together with its manifest.
inline void write_with_manifest(const std::string& path, const std::string& text, RunManifest manifest) {
    write_text(path, text);
    manifest.outputs = {path};
    write_text(manifest_path(path), manifest.to_json().dump(2) + "\n");
}

}  // namespace kinetic_exit::harness
