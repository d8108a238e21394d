#pragma once

/**
 * @file problem_io.hpp
 * @brief Problem files (JSON, schema 1) to ProblemSpec, and check reports to
 *        JSON and text tables.
 */

#include "jettriple/verify.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace jettriple {

/// Malformed or unreadable problem file; the message carries file:line.
class ProblemFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Expected outcome of a bundled problem, used by the bundled-suite test.
struct Expectation {
    int exit = 0;
    std::vector<std::string> failing;  ///< sorted
};

struct ProblemFile {
    std::string source;
    ProblemSpec spec;
    std::optional<Expectation> expect;
};

inline constexpr int kProblemSchema = 1;

namespace detail {

using nlohmann::json;

/// 1-based line of the first occurrence of "key" in the text, or 0.
inline int line_of_key(const std::string& text, const std::string& key) {
    const std::size_t at = text.find("\"" + key + "\"");
    if (at == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n'));
}

class SchemaReader {
public:
    SchemaReader(std::string source, const std::string& text) : source_(std::move(source)), text_(text) {}

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const int line = key.empty() ? 0 : line_of_key(text_, key);
        throw ProblemFileError(source_ + (line ? ":" + std::to_string(line) : "") + ": " + msg);
    }

    int integer(const json& j, const std::string& key, int lo) const {
        if (!j.is_number_integer()) fail(key, "'" + key + "' must be an integer");
        const auto v = j.get<long long>();
        if (v < lo || v > 1000000) fail(key, "'" + key + "' must be an integer >= " + std::to_string(lo));
        return static_cast<int>(v);
    }

    double number(const json& j, const std::string& key) const {
        if (!j.is_number()) fail(key, "'" + key + "' must be a number");
        return j.get<double>();
    }

    std::string string(const json& j, const std::string& key) const {
        if (!j.is_string()) fail(key, "'" + key + "' must be a string");
        return j.get<std::string>();
    }

    std::vector<std::string> strings(const json& j, const std::string& key) const {
        if (!j.is_array()) fail(key, "'" + key + "' must be an array of strings");
        std::vector<std::string> out;
        for (const auto& e : j) out.push_back(string(e, key));
        return out;
    }

    Interval interval(const json& j, const std::string& key) const {
        if (!j.is_array() || j.size() != 2) fail(key, "'" + key + "' must be [lo, hi]");
        Interval iv{number(j[0], key), number(j[1], key)};
        if (!(iv.lo < iv.hi)) fail(key, "'" + key + "' needs lo < hi");
        return iv;
    }

private:
    std::string source_;
    const std::string& text_;
};

inline std::set<std::string> box_variable_names(const BundleDims& d) {
    std::set<std::string> names;
    for (const auto& v : j1pinu_vars(d)) names.insert(v);
    for (const auto& v : j1pi1_vars(d)) names.insert(v);
    return names;
}

} // namespace detail

/// Parses and validates a problem document; `source` names it in messages.
inline ProblemFile parse_problem(const std::string& text, const std::string& source) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t at = std::min<std::size_t>(e.byte ? e.byte - 1 : 0, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n'));
        throw ProblemFileError(source + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
    }
    const detail::SchemaReader r(source, text);
    if (!doc.is_object()) r.fail("", "top level must be an object");

    static const std::set<std::string> allowed = {"schema",   "name",    "m",      "n",       "lagrangian", "hamiltonian",
                                                  "connection", "sections", "box",   "samples", "seed",       "tolerances",
                                                  "faults",   "expect",  "chart_change", "threads", "description"};
    for (const auto& [k, v] : doc.items())
        if (!allowed.count(k)) r.fail(k, "unknown key '" + k + "'");

    if (!doc.contains("schema")) r.fail("", "missing 'schema' (expected " + std::to_string(kProblemSchema) + ")");
    if (r.integer(doc["schema"], "schema", 0) != kProblemSchema) r.fail("schema", "unsupported schema version");
    for (const char* k : {"m", "n"})
        if (!doc.contains(k)) r.fail("", std::string("missing '") + k + "'");

    ProblemFile out;
    out.source = source;
    ProblemSpec& s = out.spec;
    const int m = r.integer(doc["m"], "m", 1), n = r.integer(doc["n"], "n", 1);
    s.dims = BundleDims(m, n);
    s.name = doc.contains("name") ? r.string(doc["name"], "name") : source;
    if (doc.contains("description")) r.string(doc["description"], "description");
    if (doc.contains("lagrangian")) s.lagrangian = r.string(doc["lagrangian"], "lagrangian");
    if (doc.contains("hamiltonian")) s.hamiltonian = r.string(doc["hamiltonian"], "hamiltonian");
    if (!s.lagrangian && !s.hamiltonian) r.fail("", "at least one of 'lagrangian' and 'hamiltonian' is required");

    if (doc.contains("connection")) {
        const json& c = doc["connection"];
        if (!c.is_object()) r.fail("connection", "'connection' must be an object");
        for (const auto& [k, v] : c.items())
            if (k != "symmetric" && k != "gamma") r.fail(k, "unknown key '" + k + "' in connection");
        if (c.contains("symmetric")) {
            if (!c["symmetric"].is_boolean()) r.fail("symmetric", "'symmetric' must be true or false");
            s.connection_symmetric = c["symmetric"].get<bool>();
        }
        if (c.contains("gamma")) {
            if (!c["gamma"].is_object()) r.fail("gamma", "'gamma' must map \"k,i,j\" to expressions");
            for (const auto& [k, v] : c["gamma"].items()) {
                std::array<int, 3> idx{};
                char tail = 0;
                if (std::sscanf(k.c_str(), "%d,%d,%d%c", &idx[0], &idx[1], &idx[2], &tail) != 3)
                    r.fail(k, "gamma key '" + k + "' must be \"k,i,j\"");
                for (int& i : idx) {
                    if (i < 1 || i > m) r.fail(k, "gamma key '" + k + "': indices run from 1 to m");
                    --i;
                }
                s.gamma[idx] = r.string(v, k);
            }
        }
    }

    if (doc.contains("sections")) {
        if (!doc["sections"].is_object()) r.fail("sections", "'sections' must map names to arrays of expressions");
        for (const auto& [k, v] : doc["sections"].items()) s.sections[k] = r.strings(v, k);
    }

    if (doc.contains("box")) {
        const json& b = doc["box"];
        if (b.is_array()) {
            s.box.fallback = r.interval(b, "box");
        } else if (b.is_object()) {
            const auto names = detail::box_variable_names(s.dims);
            for (const auto& [k, v] : b.items()) {
                if (k == "default") s.box.fallback = r.interval(v, k);
                else if (!names.count(k)) r.fail(k, "box: unknown variable '" + k + "'");
                else s.box.per_variable[k] = r.interval(v, k);
            }
        } else {
            r.fail("box", "'box' must be [lo, hi] or a map from variable names to [lo, hi]");
        }
    }

    if (doc.contains("samples")) s.samples = r.integer(doc["samples"], "samples", 1);
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) r.fail("seed", "'seed' must be a non-negative integer");
        s.seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("threads")) s.threads = r.integer(doc["threads"], "threads", 0);

    if (doc.contains("tolerances")) {
        const json& t = doc["tolerances"];
        if (!t.is_object()) r.fail("tolerances", "'tolerances' must be an object");
        for (const auto& [k, v] : t.items()) {
            double* slot = k == "eq" ? &s.tol.eq : k == "pde" ? &s.tol.pde : k == "rank" ? &s.tol.rank : nullptr;
            if (!slot) r.fail(k, "unknown tolerance '" + k + "' (eq, pde, rank)");
            *slot = r.number(v, k);
            if (!(*slot > 0)) r.fail(k, "tolerance '" + k + "' must be positive");
        }
    }

    if (doc.contains("faults")) {
        s.faults = r.strings(doc["faults"], "faults");
        for (const auto& f : s.faults)
            if (!known_faults().count(f)) r.fail(f, "unknown fault '" + f + "'");
    }

    if (doc.contains("chart_change")) {
        const json& c = doc["chart_change"];
        if (!c.is_object() || !c.contains("y") || !c.contains("v")) r.fail("chart_change", "'chart_change' needs 'y' and 'v'");
        ChartChangeSource cc;
        cc.y = r.strings(c["y"], "y");
        cc.v = r.strings(c["v"], "v");
        if (c.contains("inverse")) cc.inverse = r.strings(c["inverse"], "inverse");
        if (static_cast<int>(cc.y.size()) != m || static_cast<int>(cc.v.size()) != n)
            r.fail("chart_change", "'chart_change' needs m entries in 'y' and n in 'v'");
        s.chart_change = std::move(cc);
    }

    if (doc.contains("expect")) {
        const json& e = doc["expect"];
        if (!e.is_object()) r.fail("expect", "'expect' must be an object");
        Expectation x;
        if (e.contains("exit")) x.exit = r.integer(e["exit"], "exit", 0);
        if (e.contains("failing")) x.failing = r.strings(e["failing"], "failing");
        std::sort(x.failing.begin(), x.failing.end());
        out.expect = std::move(x);
    }
    return out;
}

inline ProblemFile load_problem_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ProblemFileError(path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_problem(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Reports.

/// Array of {name, status, violation, tolerance, location, seconds, detail};
/// non-finite violations become null.
inline nlohmann::json reports_to_json(const std::vector<CheckReport>& reports, bool with_time = true) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json j;
        j["name"] = r.name;
        j["status"] = to_string(r.status);
        j["violation"] = std::isfinite(r.violation) ? nlohmann::json(r.violation) : nlohmann::json(nullptr);
        j["tolerance"] = r.tolerance;
        j["location"] = r.location;
        if (with_time) j["seconds"] = r.seconds;
        j["detail"] = r.detail;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline void print_table(std::ostream& os, const std::vector<CheckReport>& reports) {
    std::size_t width = 5;
    for (const auto& r : reports) width = std::max(width, r.name.size());
    auto sci = [](double v) {
        if (!std::isfinite(v)) return format_double(v);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", v);
        return std::string(buf);
    };
    os << std::left << std::setw(static_cast<int>(width)) << "check" << "  " << std::setw(7) << "status" << "  " << std::setw(10)
       << "violation" << "  " << std::setw(10) << "tolerance" << "  " << "where / note" << '\n';
    for (const auto& r : reports) {
        std::string note = r.location;
        if (!r.detail.empty()) note += (note.empty() ? "" : "; ") + r.detail;
        os << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::setw(7) << to_string(r.status) << "  "
           << std::setw(10) << (r.status == CheckStatus::Skipped ? "-" : sci(r.violation)) << "  " << std::setw(10)
           << (r.status == CheckStatus::Skipped ? "-" : sci(r.tolerance)) << "  " << note << '\n';
    }
}

} // namespace jettriple
