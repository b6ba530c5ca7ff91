#pragma once

// JSON artifacts. Keys keep insertion order so reruns are byte-identical;
// non-finite numbers are written as null.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avgbound/bound.hpp"
#include "avgbound/config.hpp"
#include "avgbound/error.hpp"
#include "avgbound/simulator.hpp"
#include "avgbound/synthesis.hpp"

#ifndef AVGBOUND_VERSION
#define AVGBOUND_VERSION "0.0.0"
#endif

namespace avgbound {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = AVGBOUND_VERSION;

inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double num_from(const Json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!j.is_number()) throw Error("expected a number, got " + j.dump());
    return j.get<double>();
}

inline Json tool_json() { return Json{{"name", "avgbound"}, {"version", kVersion}}; }

// ---- polynomials ----------------------------------------------------------

/// {"text": ..., "terms": [{"exponents": [...], "coefficient": c}, ...]}
inline Json to_json(const Polynomial& p, const std::vector<std::string>& names) {
    Json terms = Json::array();
    for (const auto& [m, c] : p.terms()) terms.push_back(Json{{"exponents", m.exponents()}, {"coefficient", c}});
    return Json{{"text", to_string(p, names)}, {"terms", terms}};
}

inline Polynomial polynomial_from_json(const Json& j, std::size_t nvars) {
    if (!j.is_object() || !j.contains("terms")) throw Error("polynomial JSON needs a 'terms' list");
    Polynomial p(nvars);
    for (const auto& t : j.at("terms")) {
        const auto e = t.at("exponents").get<std::vector<int>>();
        if (e.size() != nvars)
            throw DimensionError("monomial has " + std::to_string(e.size()) + " exponents for " + std::to_string(nvars) +
                                 " variables");
        for (int k : e)
            if (k < 0) throw Error("negative exponent in polynomial JSON");
        p.add_term(Monomial(e), t.at("coefficient").get<double>());
    }
    return p;
}

inline Json to_json(const SdpResiduals& r) {
    return Json{{"primal", num(r.primal)}, {"dual", num(r.dual)}, {"gap", num(r.gap)},
                {"complementarity", num(r.complementarity)}};
}

/// The solver record {status, objective, residuals}.
inline Json to_json(const SdpSolution& s) {
    return Json{{"status", to_string(s.status)},
                {"objective", num(s.primal_objective)},
                {"dual_objective", num(s.dual_objective)},
                {"iterations", s.iterations},
                {"residuals", to_json(s.residuals)},
                {"message", s.message}};
}

// ---- controllers ----------------------------------------------------------

/// {epsilon, kappa, terms: [order][input] -> polynomial}
inline Json to_json(const Controller& c) {
    Json terms = Json::array();
    for (std::size_t i = 0; i < c.terms.size(); ++i) {
        Json inputs = Json::array();
        for (std::size_t k = 0; k < c.terms[i].size(); ++k) {
            Json e{{"input", k < c.inputs.size() ? c.inputs[k] : "u" + std::to_string(k + 1)}};
            e.update(to_json(c.terms[i][k], c.states));
            inputs.push_back(e);
        }
        terms.push_back(Json{{"order", i + 1}, {"inputs", inputs}});
    }
    return Json{{"epsilon", c.epsilon}, {"kappa", c.kappa},   {"provenance", c.provenance},
                {"states", c.states},   {"inputs", c.inputs}, {"terms", terms}};
}

/// Reads a controller against `sys`; names in the file must match the system.
inline Controller controller_from_json(const Json& j, const PolySystem& sys) {
    Controller c;
    c.epsilon = j.value("epsilon", 0.0);
    c.kappa = j.value("kappa", 0.5);
    c.provenance = j.value("provenance", std::string("file"));
    c.states = sys.states;
    c.inputs = sys.inputs;
    if (j.contains("states") && j["states"].get<std::vector<std::string>>() != sys.states)
        throw DimensionError("controller states do not match the system");
    if (j.contains("inputs") && j["inputs"].get<std::vector<std::string>>() != sys.inputs)
        throw DimensionError("controller inputs do not match the system");
    if (!j.contains("terms") || !j["terms"].is_array()) throw Error("controller JSON needs a 'terms' list");
    for (const auto& t : j["terms"]) {
        const auto& ins = t.at("inputs");
        if (ins.size() != sys.m())
            throw DimensionError("controller term has " + std::to_string(ins.size()) + " inputs, system has " +
                                 std::to_string(sys.m()));
        PolyVec u;
        for (const auto& e : ins) u.push_back(polynomial_from_json(e, sys.n()));
        c.terms.push_back(u);
    }
    return c;
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error("'" + path + "': " + e.what());
    }
}

inline Controller load_controller(const std::string& path, const PolySystem& sys) {
    return controller_from_json(read_json_file(path), sys);
}

// ---- certificates and reports ---------------------------------------------

inline Json to_json(const BoundCertificate& c, const std::vector<std::string>& states) {
    Json j{{"problem", c.problem},
           {"kind", to_string(c.kind)},
           {"feasible", c.feasible},
           {"status", to_string(c.status)},
           {"C", num(c.C)},
           {"optimality_certified", c.optimality_certified},
           {"C_dual", num(c.C_dual)},
           {"d_V", c.d_V},
           {"iterations", c.iterations},
           {"residuals", to_json(c.residuals)},
           {"recomposition_error", num(c.recomposition_error)}};
    if (c.feasible) {
        j["V"] = to_json(c.V, states);
        Json ms = Json::array();
        for (const auto& m : c.multipliers) ms.push_back(to_json(m, states));
        j["multipliers"] = ms;
        j["sos_factor_count"] = c.sos_factors.size();
    }
    if (!c.message.empty()) j["message"] = c.message;
    return j;
}

inline Json to_json(const AttractorResult& a, const std::vector<std::string>& states) {
    Json j{{"beta", a.beta}, {"d_S", a.d_S}, {"feasible", a.feasible}, {"status", to_string(a.status)}};
    if (a.feasible) j["S"] = to_json(a.S, states);
    if (!a.message.empty()) j["message"] = a.message;
    return j;
}

inline Json to_json(const StepResult& r, const std::vector<std::string>& states, const std::vector<std::string>& inputs) {
    Json u = Json::array();
    for (std::size_t k = 0; k < r.u.size(); ++k) {
        Json e{{"input", k < inputs.size() ? inputs[k] : "u" + std::to_string(k + 1)}};
        e.update(to_json(r.u[k], states));
        u.push_back(e);
    }
    Json ms = Json::array();
    for (const auto& m : r.multipliers) ms.push_back(to_json(m, states));
    Json j{{"order", r.order},
           {"feasible", r.feasible},
           {"status", to_string(r.status)},
           {"C", num(r.C)},
           {"optimality_certified", r.optimality_certified},
           {"C_dual", num(r.C_dual)},
           {"iterations", r.iterations},
           {"residuals", to_json(r.residuals)},
           {"recomposition_error", num(r.recomposition_error)}};
    if (r.feasible) {
        j["V"] = to_json(r.V, states);
        j["u"] = u;
        j["F"] = to_json(r.F, states);
        j["multipliers"] = ms;
    }
    if (!r.message.empty()) j["message"] = r.message;
    return j;
}

inline Json vec_json(const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

inline Json to_json(const SimReport& r) {
    Json j{{"phi_bar", num(r.phi_bar)},
           {"convergence_gap", num(r.convergence_gap)},
           {"converged", r.converged},
           {"terminal", vec_json(r.terminal)},
           {"state_mean", vec_json(r.state_mean)},
           {"state_mean_sq", vec_json(r.state_mean_sq)},
           {"oscillatory", r.oscillatory},
           {"stabilized", r.stabilized}};
    j["mean_planar_energy"] = r.mean_planar_energy ? num(*r.mean_planar_energy) : Json(nullptr);
    j["phi_bar_cycles"] = r.phi_bar_cycles ? num(*r.phi_bar_cycles) : Json(nullptr);
    j["cycles"] = r.cycles;
    return j;
}

inline Json to_json(const Equilibrium& e) {
    Json eig = Json::array();
    for (const auto& z : e.eigenvalues) eig.push_back(Json::array({num(z.real()), num(z.imag())}));
    return Json{{"point", vec_json(e.point)}, {"eigenvalues", eig}, {"stable", e.stable}, {"residual", num(e.residual)}};
}

inline Json to_json(const CertificateCheck& c) {
    return Json{{"max_H", num(c.max_H)}, {"argmax", vec_json(c.argmax)}, {"violated", c.violated},
                {"tolerance", num(c.tolerance)}};
}

// ---- configuration --------------------------------------------------------

inline Json to_json(const SystemConfig& c) {
    Json params = Json::object();
    for (const auto& [k, v] : c.parameters) params[k] = v;
    Json f = Json::object();
    for (std::size_t i = 0; i < c.states.size() && i < c.f.size(); ++i) f[c.states[i]] = c.f[i];
    Json g = Json::object();
    for (std::size_t i = 0; i < c.states.size() && i < c.g.size(); ++i)
        for (std::size_t k = 0; k < c.inputs.size() && k < c.g[i].size(); ++k)
            g[c.states[i] + "." + c.inputs[k]] = c.g[i][k];
    Json d{{"dt", c.defaults.dt}, {"T", c.defaults.T}, {"x0", c.defaults.x0}};
    d["beta"] = c.defaults.beta ? Json(*c.defaults.beta) : Json(nullptr);
    return Json{{"path", c.path}, {"parameters", params}, {"states", c.states}, {"inputs", c.inputs},
                {"f", f},         {"g", g},               {"phi", c.phi},       {"defaults", d}};
}

inline Json to_json(const SdpOptions& o) {
    return Json{{"tol", o.tol}, {"max_iter", o.max_iter}, {"infeasibility_tol", o.infeasibility_tol},
                {"step_fraction", o.step_fraction}};
}

inline Json to_json(const SimConfig& s) {
    return Json{{"dt", s.dt}, {"T", s.T}, {"transient_fraction", s.transient_fraction}, {"x0", s.x0}};
}

inline Json to_json(const EquilibriumSearch& e) {
    return Json{{"lo", e.lo},         {"hi", e.hi},         {"step", e.step},    {"newton_tol", e.newton_tol},
                {"max_newton", e.max_newton}, {"accept", e.accept}, {"dedupe", e.dedupe}};
}

/// Machine-readable failure record.
inline Json error_json(const std::exception& e) {
    const auto* ae = dynamic_cast<const Error*>(&e);
    Json j{{"tool", tool_json()}, {"error", Json{{"kind", ae ? ae->kind() : "internal"}, {"message", e.what()}}}};
    if (const auto* pe = dynamic_cast<const ParseError*>(&e)) j["error"]["position"] = pe->position();
    if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) j["error"]["line"] = ce->line();
    return j;
}

} // namespace avgbound
