#pragma once

// System definition files: sectioned key-value text.
//
//   [parameters]   name = number
//   [states]       names = a1, a2, a3
//   [inputs]       names = u            (section optional)
//   [dynamics]     f.<state> = "expr over states"
//   [input_matrix] g.<state>.<input> = "expr over states"   (missing entries are 0)
//   [cost]         phi = "expr over states and inputs"
//   [defaults]     beta, dt, T, x0 = v1, v2, ...
//
// '#' starts a comment. Expression values may be double-quoted.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "avgbound/error.hpp"
#include "avgbound/parse.hpp"
#include "avgbound/system.hpp"

namespace avgbound {

struct SimDefaults {
    std::optional<double> beta;
    double dt = 1e-2;
    double T = 3000.0;
    std::vector<double> x0; ///< empty means "use the built-in default"
};

struct SystemConfig {
    std::string path;
    std::vector<std::pair<std::string, double>> parameters; ///< file order
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    std::vector<std::string> f;              ///< per state
    std::vector<std::vector<std::string>> g; ///< states x inputs, "0" when absent
    std::string phi;
    SimDefaults defaults;
};

struct LoadedSystem {
    SystemConfig config;
    PolySystem system;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline bool valid_name(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError("'" + key + "' needs a finite number, got '" + s + "'", line);
    return v;
}

} // namespace detail

/// Builds the polynomial system; throws ConfigError on any inconsistency.
inline LoadedSystem build_system(const SystemConfig& cfg) {
    LoadedSystem out;
    out.config = cfg;
    if (cfg.states.empty()) throw ConfigError("no states declared", 0);
    if (cfg.phi.empty()) throw ConfigError("no cost: [cost] phi is required", 0);
    std::map<std::string, double> params(cfg.parameters.begin(), cfg.parameters.end());
    PolySystem& s = out.system;
    s.states = cfg.states;
    s.inputs = cfg.inputs;
    s.beta = cfg.defaults.beta;
    auto parse = [&](const std::string& text, const std::vector<std::string>& vars, const std::string& what) {
        try {
            return parse_poly(text, vars, params);
        } catch (const ParseError& e) {
            throw ConfigError(what + ": " + e.what() + " in \"" + text + "\"", 0);
        }
    };
    for (std::size_t i = 0; i < cfg.states.size(); ++i) s.f.push_back(parse(cfg.f.at(i), cfg.states, "f." + cfg.states[i]));
    s.g = PolyMat(cfg.states.size(), cfg.inputs.size(), cfg.states.size());
    for (std::size_t i = 0; i < cfg.states.size(); ++i)
        for (std::size_t k = 0; k < cfg.inputs.size(); ++k)
            s.g(i, k) = parse(cfg.g.at(i).at(k), cfg.states, "g." + cfg.states[i] + "." + cfg.inputs[k]);
    s.phi = parse(cfg.phi, s.all_names(), "phi");
    s.validate();
    if (!cfg.defaults.x0.empty() && cfg.defaults.x0.size() != cfg.states.size())
        throw ConfigError("x0 has " + std::to_string(cfg.defaults.x0.size()) + " entries for " +
                              std::to_string(cfg.states.size()) + " states",
                          0);
    if (const int bad = s.phi_negative_samples(100); bad > 0)
        out.warnings.push_back("phi is negative at " + std::to_string(bad) + " of 100 sample points");
    return out;
}

inline LoadedSystem parse_config(const std::string& text, const std::string& origin = "") {
    SystemConfig cfg;
    cfg.path = origin;
    std::map<std::string, std::pair<std::string, std::size_t>> fdef, gdef;
    std::size_t phi_line = 0, dyn_line = 0;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen;

    while (std::getline(in, raw)) {
        ++lineno;
        // strip comments outside quotes
        bool quoted = false;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == '"') quoted = !quoted;
            if (raw[i] == '#' && !quoted) {
                raw.resize(i);
                break;
            }
        }
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("unterminated section header", lineno);
            section = detail::trim(line.substr(1, line.size() - 2));
            static const char* known[] = {"parameters", "states", "inputs", "dynamics", "input_matrix", "cost", "defaults"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                throw ConfigError("unknown section [" + section + "]", lineno);
            if (section == "dynamics") dyn_line = lineno;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
        const std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.empty()) throw ConfigError("empty key", lineno);
        if (section.empty()) throw ConfigError("key '" + key + "' outside any section", lineno);
        const std::string full = section + "." + key;
        if (auto [it, fresh] = seen.emplace(full, lineno); !fresh)
            throw ConfigError("duplicate key '" + key + "' (first on line " + std::to_string(it->second) + ")", lineno);

        if (section == "parameters") {
            if (!detail::valid_name(key)) throw ConfigError("bad parameter name '" + key + "'", lineno);
            cfg.parameters.push_back({key, detail::parse_number(value, lineno, key)});
        } else if (section == "states" || section == "inputs") {
            if (key != "names") throw ConfigError("[" + section + "] only takes 'names'", lineno);
            auto names = detail::split_list(value);
            for (const auto& n : names)
                if (!detail::valid_name(n)) throw ConfigError("bad variable name '" + n + "'", lineno);
            (section == "states" ? cfg.states : cfg.inputs) = names;
        } else if (section == "dynamics") {
            if (key.rfind("f.", 0) != 0) throw ConfigError("dynamics keys look like f.<state>", lineno);
            fdef[key.substr(2)] = {value, lineno};
        } else if (section == "input_matrix") {
            if (key.rfind("g.", 0) != 0) throw ConfigError("input matrix keys look like g.<state>.<input>", lineno);
            gdef[key.substr(2)] = {value, lineno};
        } else if (section == "cost") {
            if (key != "phi") throw ConfigError("[cost] only takes 'phi'", lineno);
            cfg.phi = value;
            phi_line = lineno;
        } else if (section == "defaults") {
            if (key == "beta") {
                cfg.defaults.beta = detail::parse_number(value, lineno, key);
                if (!(*cfg.defaults.beta > 0)) throw ConfigError("beta must be positive", lineno);
            } else if (key == "dt") {
                cfg.defaults.dt = detail::parse_number(value, lineno, key);
                if (!(cfg.defaults.dt > 0)) throw ConfigError("dt must be positive", lineno);
            } else if (key == "T") {
                cfg.defaults.T = detail::parse_number(value, lineno, key);
            } else if (key == "x0") {
                for (const auto& v : detail::split_list(value)) cfg.defaults.x0.push_back(detail::parse_number(v, lineno, key));
            } else {
                throw ConfigError("unknown default '" + key + "'", lineno);
            }
        }
    }
    if (!(cfg.defaults.T > cfg.defaults.dt)) throw ConfigError("T must exceed dt", 0);
    if (cfg.states.empty()) throw ConfigError("missing [states] names", lineno);

    // every names list must be disjoint
    std::map<std::string, int> used;
    for (const auto& n : cfg.states) ++used[n];
    for (const auto& n : cfg.inputs) ++used[n];
    for (const auto& [n, p] : cfg.parameters) ++used[n];
    for (const auto& [n, c] : used)
        if (c > 1) throw ConfigError("name '" + n + "' declared more than once", 0);

    for (const auto& st : cfg.states) {
        auto it = fdef.find(st);
        if (it == fdef.end())
            throw ConfigError("missing dynamics entry f." + st + " for state '" + st + "'", dyn_line);
        cfg.f.push_back(it->second.first);
        fdef.erase(it);
    }
    if (!fdef.empty())
        throw ConfigError("f." + fdef.begin()->first + " names no declared state", fdef.begin()->second.second);
    cfg.g.assign(cfg.states.size(), std::vector<std::string>(cfg.inputs.size(), "0"));
    for (const auto& [key, val] : gdef) {
        const auto dot = key.find('.');
        const std::string st = key.substr(0, dot), inp = dot == std::string::npos ? "" : key.substr(dot + 1);
        const auto si = std::find(cfg.states.begin(), cfg.states.end(), st);
        const auto ii = std::find(cfg.inputs.begin(), cfg.inputs.end(), inp);
        if (si == cfg.states.end() || ii == cfg.inputs.end())
            throw ConfigError("g." + key + " does not name a declared state and input", val.second);
        cfg.g[si - cfg.states.begin()][ii - cfg.inputs.begin()] = val.first;
    }

    // re-raise expression errors with their line
    auto line_of = [&](const std::string& what) -> std::size_t {
        if (what == "phi") return phi_line;
        if (what.rfind("f.", 0) == 0) return seen.count("dynamics." + what) ? seen["dynamics." + what] : 0;
        if (what.rfind("g.", 0) == 0) return seen.count("input_matrix." + what) ? seen["input_matrix." + what] : 0;
        return 0;
    };
    try {
        return build_system(cfg);
    } catch (const ConfigError& e) {
        if (e.line() != 0) throw;
        const std::string msg = e.what();
        const std::string what = msg.substr(0, msg.find(':'));
        const std::size_t l = line_of(what);
        if (l == 0) throw;
        throw ConfigError(msg, l);
    }
}

inline LoadedSystem load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open system file '" + path + "'", 0);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path);
}

} // namespace avgbound
