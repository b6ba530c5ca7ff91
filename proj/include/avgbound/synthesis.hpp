#pragma once

// Small-feedback controller synthesis.
//
// With V = sum eps^i V_i, u = sum_{i>=1} eps^i u_i and C = sum eps^i C_i, the
// certificate residual F(V, u, C) = (f + g u) . grad V + Phi(x, u) - C expands
// as sum eps^i F_i. F_i is affine in the order-i unknowns (V_i, u_i, C_i) once
// the lower orders are fixed, so each order is one SOS program:
//
//   minimize C_i  s.t.  -F_i + sum_{j<i} S_j F_j  is SOS
//
// with SOS multipliers S_j (method AI) or free ones (method AII). The
// program is homogeneous in the unknowns for i >= 1, so coefficient boxes fix
// the gauge; only eps * u_i is meaningful.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "avgbound/bound.hpp"
#include "avgbound/error.hpp"
#include "avgbound/polynomial.hpp"
#include "avgbound/sos.hpp"
#include "avgbound/system.hpp"

namespace avgbound {

enum class Method { AI, AII };

inline const char* to_string(Method m) { return m == Method::AI ? "AI" : "AII"; }

inline Method parse_method(const std::string& s) {
    if (s == "AI" || s == "A-I") return Method::AI;
    if (s == "AII" || s == "A-II") return Method::AII;
    throw Error("unknown method '" + s + "' (expected AI or AII)");
}

/// Everything fixed through order `order() - 1`.
struct ExpansionState {
    std::vector<Polynomial> V;                     ///< V_0 .. V_{i-1}
    std::vector<PolyVec> u;                        ///< u_0 (= 0) .. u_{i-1}
    std::vector<double> C;                         ///< C_0 .. C_{i-1}
    std::vector<Polynomial> F;                     ///< numeric residuals F_0 .. F_{i-1}
    std::vector<bool> globally_nonpositive;        ///< F_j <= 0 everywhere is certified
    std::vector<std::vector<Polynomial>> multipliers; ///< S_j used at each order
    std::vector<double> recomposition_error;       ///< SOS recomposition per order

    int order() const noexcept { return static_cast<int>(V.size()); }
};

struct StepOptions {
    int d_V = 2;
    int d_u = 2;
    int d_S = 2; ///< multiplier degree; SOS multipliers need it even
    Method method = Method::AII;
    double rho = 400.0;   ///< box on u_i coefficients
    double rho_v = -1.0;  ///< box on V_i coefficients; negative means "same as rho"
    double rho_s = -1.0;  ///< box on free multiplier coefficients; negative means "same as rho"
    double chop = 1e-7; ///< relative threshold applied to the stored residual F_i
    SdpOptions sdp;

    double v_box() const { return rho_v < 0 ? rho : rho_v; }
    double s_box() const { return rho_s < 0 ? rho : rho_s; }
};

struct StepResult {
    int order = 0;
    bool feasible = false;
    SdpStatus status = SdpStatus::numerical_failure;
    double C = std::numeric_limits<double>::quiet_NaN();
    Polynomial V;
    PolyVec u;
    Polynomial F;
    std::vector<Polynomial> multipliers;
    SdpResiduals residuals;
    int iterations = 0;
    double recomposition_error = 0.0;
    /// false when only the primal side converged; C is then an upper estimate
    /// and C_dual the lower one
    bool optimality_certified = false;
    double C_dual = std::numeric_limits<double>::quiet_NaN();
    std::string message;
};

/// sum_{j < terms.size()} eps^j terms[j] with eps a trailing extra variable.
namespace detail {

inline Polynomial lift(const Polynomial& p, std::size_t nvars) { return p.resized(nvars); }

inline Polynomial eps_power(std::size_t nvars, std::size_t eps_var, int k) {
    return Polynomial::monomial(Monomial::variable(nvars, eps_var, k));
}

/// [eps^i] Phi(x, sum_{1<=j<=lim} eps^j u_j), over the states.
inline Polynomial phi_series_coefficient(const PolySystem& sys, const std::vector<PolyVec>& u, int lim, int i) {
    const std::size_t n = sys.n(), ne = n + 1;
    std::map<std::size_t, Polynomial> assign;
    for (std::size_t k = 0; k < sys.m(); ++k) {
        Polynomial s(ne);
        for (int j = 1; j <= lim && j < static_cast<int>(u.size()); ++j)
            s += eps_power(ne, n, j) * lift(u[j].at(k), ne);
        assign[n + k] = s;
    }
    // Phi over (x, u) -> (x, eps)
    const Polynomial composed = substitute(sys.phi, assign, ne);
    return composed.coefficient_of_power(n, i).resized(n);
}

/// grad_u Phi(x, 0), one polynomial per input.
inline PolyVec phi_input_gradient_at_zero(const PolySystem& sys) {
    const std::size_t n = sys.n();
    PolyVec out;
    std::map<std::size_t, Polynomial> zero;
    for (std::size_t k = 0; k < sys.m(); ++k) zero[n + k] = Polynomial(n);
    for (std::size_t k = 0; k < sys.m(); ++k) out.push_back(substitute(sys.phi.derivative(n + k), zero, n));
    return out;
}

/// Drops coefficients below rel * max |coefficient|.
inline Polynomial chop(const Polynomial& p, double rel) {
    double mx = 0.0;
    for (const auto& [m, c] : p.terms()) mx = std::max(mx, std::abs(c));
    Polynomial out(p.nvars());
    for (const auto& [m, c] : p.terms())
        if (std::abs(c) > rel * mx) out.add_term(m, c);
    return out;
}

inline DecisionPoly g_times(const PolySystem& sys, const std::vector<DecisionPoly>& u, const PolyVec& gradV) {
    DecisionPoly r(sys.n());
    for (std::size_t row = 0; row < sys.n(); ++row)
        for (std::size_t k = 0; k < sys.m(); ++k) {
            if (sys.g(row, k).is_zero() || gradV[row].is_zero()) continue;
            r += u[k] * DecisionPoly(sys.g(row, k) * gradV[row]);
        }
    return r;
}

} // namespace detail

/// Order-i residual F_i with the order-i unknowns supplied as decision
/// polynomials (pass numeric ones to evaluate a fixed residual).
inline DecisionPoly f_term(const ExpansionState& st, const PolySystem& sys, const DecisionPoly& Vi,
                           const std::vector<DecisionPoly>& ui, const LinearExpr& Ci) {
    const int i = st.order();
    const std::size_t n = sys.n();
    if (ui.size() != sys.m()) throw DimensionError("order-i controller has wrong input count");
    if (i > 0 && st.u.size() != static_cast<std::size_t>(i)) throw Error("expansion state is incomplete");

    // f . grad V_i
    DecisionPoly F = dot(gradient(Vi), sys.f);
    if (i == 0) {
        F += DecisionPoly(sys.phi_uncontrolled());
    } else {
        // g u_i . grad V_0 (unknown u_i against fixed V_0)
        F += detail::g_times(sys, ui, gradient(st.V[0]));
        // g u_a . grad V_{i-a}, 1 <= a < i, both fixed
        for (int a = 1; a < i; ++a) {
            std::vector<DecisionPoly> ua(st.u[a].begin(), st.u[a].end());
            F += detail::g_times(sys, ua, gradient(st.V[i - a]));
        }
        // Phi: grad_u Phi(x, 0) . u_i plus the lower-order part
        const PolyVec dphi = detail::phi_input_gradient_at_zero(sys);
        for (std::size_t k = 0; k < sys.m(); ++k)
            if (!dphi[k].is_zero()) F += ui[k] * DecisionPoly(dphi[k]);
        F += DecisionPoly(detail::phi_series_coefficient(sys, st.u, i - 1, i));
    }
    F.add_term(Monomial(n), -Ci);
    return F;
}

/// Solves order st.order() and appends it to the state on success.
inline StepResult step(ExpansionState& st, const PolySystem& sys, const StepOptions& opts) {
    sys.validate();
    const int i = st.order();
    const std::size_t n = sys.n();
    StepResult res;
    res.order = i;

    SosProgram prog(n);
    const double vb = i == 0 ? kInf : opts.v_box();
    const DecisionPoly Vi = prog.add_poly("V" + std::to_string(i), monomial_basis(n, opts.d_V, 1), -vb, vb);
    std::vector<DecisionPoly> ui;
    for (std::size_t k = 0; k < sys.m(); ++k) {
        if (i == 0) {
            ui.emplace_back(n);
        } else {
            const std::string name = "u" + std::to_string(i) + "." + std::to_string(k);
            ui.push_back(prog.add_poly(name, monomial_basis(n, opts.d_u, 1), -opts.rho, opts.rho));
        }
    }
    const LinearExpr Ci = prog.add_scalar("C" + std::to_string(i));
    DecisionPoly body = -f_term(st, sys, Vi, ui, Ci);

    std::vector<KnownConstraint> known;
    for (int j = 0; j < i; ++j)
        known.push_back({st.F[j], opts.d_S, opts.method == Method::AI ? MultiplierSign::sos : MultiplierSign::free,
                         "S" + std::to_string(j)});
    if (opts.method == Method::AI && opts.d_S % 2 != 0 && !known.empty())
        throw CompileError("SOS multipliers need an even degree, got d_S = " + std::to_string(opts.d_S));
    body = s_procedure_augment(prog, body, known, -1, opts.s_box());
    prog.add_sos(body, "O" + std::to_string(i));
    prog.minimize(Ci);

    const CompiledSos compiled = compile(prog);
    const SdpSolution sol = solve(compiled.sdp, opts.sdp);
    res.status = sol.status;
    res.residuals = sol.residuals;
    res.iterations = sol.iterations;
    res.message = sol.message;
    if (sol.status == SdpStatus::unbounded) {
        res.message = "homogeneous objective escape; tighten rho";
        return res;
    }
    if (!sol.primal_usable()) {
        if (sol.status == SdpStatus::infeasible) res.message = "infeasible at these degrees: " + sol.message;
        return res;
    }
    res.optimality_certified = sol.usable();
    res.C_dual = sol.dual_objective;
    if (!res.optimality_certified) res.message += "; objective gap open, C is an upper estimate";

    const SosResult r = extract(sol, compiled, prog, 1e-6, true);
    res.feasible = true;
    res.C = r.scalar("C" + std::to_string(i));
    res.V = r.poly("V" + std::to_string(i));
    for (std::size_t k = 0; k < sys.m(); ++k)
        res.u.push_back(i == 0 ? Polynomial(n) : r.poly("u" + std::to_string(i) + "." + std::to_string(k)));
    for (const auto& kc : known) res.multipliers.push_back(r.poly(kc.name));
    res.recomposition_error = r.sos_factors.front().recomposition_error;

    std::vector<DecisionPoly> ufix(res.u.begin(), res.u.end());
    // solver-noise coefficients make the next order's multiplier directions near-degenerate
    res.F = detail::chop(f_term(st, sys, DecisionPoly(res.V), ufix, LinearExpr(res.C)).to_polynomial(), opts.chop);

    bool nonpos = true;
    if (i > 0) {
        nonpos = opts.method == Method::AI;
        for (int j = 0; j < i; ++j) nonpos = nonpos && st.globally_nonpositive[j];
    }
    st.V.push_back(res.V);
    st.u.push_back(res.u);
    st.C.push_back(res.C);
    st.F.push_back(res.F);
    st.globally_nonpositive.push_back(nonpos);
    st.multipliers.push_back(res.multipliers);
    st.recomposition_error.push_back(res.recomposition_error);
    return res;
}

// ============================================================================
// Controller
// ============================================================================

struct Controller {
    double epsilon = 0.0;
    double kappa = 0.5;
    std::vector<PolyVec> terms; ///< terms[i-1] = u_i
    std::string provenance;     ///< "AI", "AII", "O_eps", "file", ...
    std::vector<std::string> states;
    std::vector<std::string> inputs;

    int order() const noexcept { return static_cast<int>(terms.size()); }

    /// u(x) = sum_i eps^i u_i(x).
    PolyVec evaluate_series(std::size_t nvars, std::size_t m) const {
        PolyVec u(m, Polynomial(nvars));
        double e = 1.0;
        for (const auto& t : terms) {
            e *= epsilon;
            if (t.size() != m) throw DimensionError("controller term has wrong input count");
            for (std::size_t k = 0; k < m; ++k) u[k] += e * t[k];
        }
        return u;
    }

    PolyVec u(const PolySystem& sys) const { return evaluate_series(sys.n(), sys.m()); }
};

struct AssembledBound {
    Controller controller;
    double predicted = std::numeric_limits<double>::quiet_NaN();
    std::string formula; ///< how the prediction was formed
    bool rigorous = false;
    std::string label;   ///< caveat text for output
};

/// Truncated controller and its predicted bound.
/// Order 1 with AII gives C_0 + eps kappa C_1; AI gives sum eps^i C_i.
inline AssembledBound assemble(const ExpansionState& st, const std::vector<std::string>& states,
                               const std::vector<std::string>& inputs, double epsilon, double kappa, int k,
                               Method method) {
    if (k < 1) throw Error("truncation order must be at least 1");
    if (st.order() < k + 1) throw Error("expansion state does not reach order " + std::to_string(k));
    if (!(kappa > 0 && kappa < 1)) throw Error("kappa must lie in (0, 1)");
    AssembledBound out;
    out.controller.epsilon = epsilon;
    out.controller.kappa = kappa;
    out.controller.provenance = to_string(method);
    out.controller.states = states;
    out.controller.inputs = inputs;
    for (int i = 1; i <= k; ++i) out.controller.terms.push_back(st.u[i]);
    if (method == Method::AII) {
        if (k != 1) throw Error("the asymptotic AII bound is defined for first-order truncation only");
        out.predicted = st.C[0] + epsilon * kappa * st.C[1];
        out.formula = "C0 + eps*kappa*C1";
        out.rigorous = false;
        out.label = st.C[1] < 0 ? "unverified: asymptotic, valid for sufficiently small eps"
                                : "unverified: C1 >= 0, no improvement claim";
    } else {
        double acc = 0.0, e = 1.0;
        for (int i = 0; i <= k; ++i) {
            acc += e * st.C[i];
            e *= epsilon;
        }
        out.predicted = acc;
        out.formula = "sum eps^i C_i";
        bool nonpos = true;
        for (int i = 0; i <= k; ++i) nonpos = nonpos && st.globally_nonpositive[i];
        out.rigorous = nonpos;
        out.label = nonpos ? "series bound with SOS multipliers" : "series bound without a global certificate";
    }
    return out;
}

// ============================================================================
// Fixed-eps refinement
// ============================================================================

struct RefineOptions {
    int d_V = 6;
    bool relax = false;
    int d_S = -1; ///< multiplier degree when relaxing; negative keeps S_j F_j within the degree of H
    BoundOptions bound;
};

/// Closed-loop field, cost and S-procedure data for O_eps.
struct RefineProblem {
    PolyVec f;
    Polynomial phi;
    std::vector<KnownConstraint> known;
};

inline RefineProblem refine_problem(const PolySystem& sys, const Controller& ctrl, const RefineOptions& opts,
                                    const ExpansionState* st = nullptr) {
    sys.validate();
    const PolyVec u = ctrl.u(sys);
    RefineProblem rp{sys.closed_loop(u), sys.phi_closed(u), {}};
    if (opts.relax && st) {
        int fdeg = 0;
        for (const auto& p : rp.f) fdeg = std::max(fdeg, p.degree());
        // S_j F_j above the even part of deg H only adds top forms that must
        // cancel against nonnegative ones, so the default stops there
        const int body_deg = std::max(rp.phi.degree(), opts.d_V - 1 + fdeg);
        const int even_deg = body_deg - (body_deg % 2);
        for (int j = 0; j < st->order(); ++j) {
            if (!st->globally_nonpositive[j]) continue;
            int d = opts.d_S;
            if (d < 0) {
                d = even_deg - st->F[j].degree();
                d -= d % 2;
            }
            if (d < 0) continue;
            rp.known.push_back({st->F[j], d, MultiplierSign::sos, "S" + std::to_string(j)});
        }
    }
    return rp;
}

/// Upper bound for the closed loop under a fixed controller. With relax, the
/// certified-nonpositive residuals of `st` join through SOS multipliers.
inline BoundCertificate refine_fixed_eps(const PolySystem& sys, const Controller& ctrl, const RefineOptions& opts,
                                         const ExpansionState* st = nullptr) {
    const RefineProblem rp = refine_problem(sys, ctrl, opts, st);
    return certify_bound(rp.f, rp.phi, opts.d_V, BoundKind::upper, opts.relax ? "O_eps-relaxed" : "O_eps", rp.known,
                         opts.bound);
}

} // namespace avgbound
