#pragma once

// Long-time-average bounds for autonomous polynomial systems.
//
// Upper: minimize C such that -(f . grad V + Phi - C) is SOS.
// Lower: maximize C such that  (f . grad V + Phi - C) is SOS.
// V is an arbitrary polynomial (no positivity), basis degrees 1..d_V.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "avgbound/error.hpp"
#include "avgbound/polynomial.hpp"
#include "avgbound/sdp.hpp"
#include "avgbound/sos.hpp"
#include "avgbound/system.hpp"

namespace avgbound {

enum class BoundKind { upper, lower };

inline const char* to_string(BoundKind k) { return k == BoundKind::upper ? "upper" : "lower"; }

struct BoundCertificate {
    BoundKind kind = BoundKind::upper;
    SdpStatus status = SdpStatus::numerical_failure;
    bool feasible = false;
    double C = std::numeric_limits<double>::quiet_NaN();
    Polynomial V;
    int d_V = 0;
    SdpResiduals residuals;
    int iterations = 0;
    double recomposition_error = 0.0;
    std::vector<Polynomial> sos_factors;
    std::vector<Polynomial> multipliers;
    std::string problem; ///< which program produced it
    std::string message;
    /// false when only the primal side converged: C is still certified but
    /// may sit above the optimum, which lies in [C_dual, C] (upper kind)
    bool optimality_certified = false;
    double C_dual = std::numeric_limits<double>::quiet_NaN();
};

struct BoundOptions {
    SdpOptions sdp;
    /// Box on V coefficients; infinite by default.
    double v_box = kInf;
    /// Largest relative gap accepted from a solve that stalled feasible.
    double gap_accept = 1e-4;
};

/// The SOS program behind a bound: decisions "V", "C" and one multiplier per
/// known constraint, with the single SOS constraint "certificate".
inline SosProgram bound_program(const PolyVec& f, const Polynomial& phi, int d_V, BoundKind kind,
                                const std::vector<KnownConstraint>& known = {}, double v_box = kInf) {
    if (f.empty()) throw DimensionError("empty vector field");
    const std::size_t n = f.size();
    if (phi.nvars() != n) throw DimensionError("cost must be over the states only here");
    if (d_V < 0) throw CompileError("negative d_V");

    SosProgram prog(n);
    const DecisionPoly V = prog.add_poly("V", monomial_basis(n, d_V, 1), -v_box, v_box);
    const LinearExpr C = prog.add_scalar("C");
    DecisionPoly H = dot(gradient(V), f) + DecisionPoly(phi);
    H.add_term(Monomial(n), -C);
    DecisionPoly body = kind == BoundKind::upper ? -H : H;
    body = s_procedure_augment(prog, body, known);
    prog.add_sos(body, "certificate");
    prog.minimize(kind == BoundKind::upper ? C : -C);
    return prog;
}

/// Shared core: closed-loop field and cost given numerically, plus optional
/// S-procedure terms, certified with a degree-d_V V.
inline BoundCertificate certify_bound(const PolyVec& f, const Polynomial& phi, int d_V, BoundKind kind,
                                      const std::string& tag, const std::vector<KnownConstraint>& known = {},
                                      const BoundOptions& opts = {}) {
    const SosProgram prog = bound_program(f, phi, d_V, kind, known, opts.v_box);
    const std::size_t n = f.size();
    BoundCertificate cert;
    cert.kind = kind;
    cert.d_V = d_V;
    cert.problem = tag;
    const CompiledSos compiled = compile(prog);
    const SdpSolution sol = solve(compiled.sdp, opts.sdp);
    cert.status = sol.status;
    cert.residuals = sol.residuals;
    cert.iterations = sol.iterations;
    cert.message = sol.message;
    if (!sol.primal_usable() && !sol.near_optimal(1e-6, opts.gap_accept)) {
        cert.feasible = false;
        cert.V = Polynomial(n);
        return cert;
    }
    const SosResult r = extract(sol, compiled, prog, 1e-6, true);
    cert.feasible = true;
    cert.optimality_certified = sol.usable();
    cert.C_dual = kind == BoundKind::upper ? sol.dual_objective : -sol.dual_objective;
    if (!cert.optimality_certified) cert.message += "; objective gap open, C is not proven optimal";
    cert.C = r.scalar("C");
    cert.V = r.poly("V");
    cert.recomposition_error = r.sos_factors.front().recomposition_error;
    cert.sos_factors = r.sos_factors.front().factors;
    for (const auto& k : known) cert.multipliers.push_back(r.poly(k.name.empty() ? "S0" : k.name));
    return cert;
}

inline BoundCertificate upper_bound(const PolySystem& sys, int d_V, const BoundOptions& opts = {}) {
    sys.validate();
    return certify_bound(sys.f, sys.phi_uncontrolled(), d_V, BoundKind::upper, "O0", {}, opts);
}

inline BoundCertificate lower_bound(const PolySystem& sys, int d_V, const BoundOptions& opts = {}) {
    sys.validate();
    return certify_bound(sys.f, sys.phi_uncontrolled(), d_V, BoundKind::lower, "O0-lower", {}, opts);
}

struct AttractorResult {
    bool feasible = false;
    SdpStatus status = SdpStatus::numerical_failure;
    Polynomial S;
    double beta = 0.0;
    int d_S = 0;
    std::string message;
};

/// Searches an SOS S of degree d_S with -(x . f - S (x.x/2 - beta)) SOS. Then
/// x . f <= 0 on the sphere x.x/2 = beta, so the ball is positively invariant
/// and trajectories starting in it stay bounded.
inline AttractorResult attractor_certificate(const PolySystem& sys, double beta, int d_S, const SdpOptions& opts = {}) {
    sys.validate();
    if (!(beta > 0)) throw Error("attractor radius beta must be positive");
    const std::size_t n = sys.n();
    SosProgram prog(n);
    const DecisionPoly S = prog.add_sos_poly("S", d_S);
    Polynomial xf(n), energy(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Polynomial xi = Polynomial::variable(n, i);
        xf += xi * sys.f[i];
        energy += 0.5 * (xi * xi);
    }
    energy += -beta;
    prog.add_sos(-DecisionPoly(xf) + S * DecisionPoly(energy), "attractor");
    prog.minimize(LinearExpr(0.0));

    AttractorResult res;
    res.beta = beta;
    res.d_S = d_S;
    const CompiledSos compiled = compile(prog);
    const SdpSolution sol = solve(compiled.sdp, opts);
    res.status = sol.status;
    res.message = sol.message;
    if (sol.usable()) {
        res.feasible = true;
        res.S = extract(sol, compiled, prog).poly("S");
    } else {
        res.S = Polynomial(n);
    }
    return res;
}

} // namespace avgbound
