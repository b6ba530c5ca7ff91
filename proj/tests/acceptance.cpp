// One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "avgbound/avgbound.hpp"
#include "random_sdp.hpp"

using namespace avgbound;

namespace {

const std::string kRoot = AVGBOUND_SOURCE_DIR;

int failures = 0;

void verdict(int k, bool ok, const std::string& what) {
    std::cout << (ok ? "PASS " : "FAIL ") << k << ": " << what << std::endl;
    if (!ok) ++failures;
}

void info(const std::string& s) { std::cout << "     " << s << std::endl; }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool within_rel(double v, double want, double rel) { return std::abs(v - want) <= rel * std::abs(want); }

SimConfig default_sim(const LoadedSystem& ls) {
    SimConfig c;
    c.dt = ls.config.defaults.dt;
    c.T = ls.config.defaults.T;
    c.x0 = ls.config.defaults.x0.empty() ? std::vector<double>{-0.3, -0.3, 0.3} : ls.config.defaults.x0;
    return c;
}

double norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------

void criterion1(const PolySystem& sys) {
    const BoundCertificate b2 = upper_bound(sys, 2);
    const BoundCertificate b4 = upper_bound(sys, 4);
    const BoundCertificate b6 = upper_bound(sys, 6);
    const bool ok = b2.feasible && b4.feasible && b6.feasible && b2.C >= 6.54 && b2.C <= 6.64 &&
                    std::abs(b4.C - b2.C) <= 0.02 && std::abs(b6.C - b2.C) <= 0.02;
    verdict(1, ok, fmt("uncontrolled bound C(d_V=2)=%.6f in [6.54,6.64]; C(4)=%.6f C(6)=%.6f within 0.02", b2.C, b4.C,
                       b6.C));
}

void criterion2(const LoadedSystem& ls) {
    const SimReport r = time_average(ls.system, nullptr, default_sim(ls));
    const double e = r.mean_planar_energy.value_or(NAN);
    const double a3 = r.state_mean.at(2);
    const bool ok = within_rel(r.phi_bar, 6.584, 0.01) && within_rel(e, 6.560, 0.01) && within_rel(a3, 2.570, 0.01);
    verdict(2, ok, fmt("uncontrolled limit cycle: Phi_bar=%.5f mean a1^2+a2^2=%.5f mean a3=%.5f", r.phi_bar, e, a3));
}

struct Synth {
    ExpansionState st;
    std::vector<StepResult> steps;
};

Synth synthesize(const PolySystem& sys, Method m, int d) {
    Synth s;
    StepOptions o;
    o.method = m;
    o.d_V = o.d_u = o.d_S = d;
    o.rho = 400.0;
    for (int i = 0; i < 2; ++i) {
        s.steps.push_back(step(s.st, sys, o));
        if (!s.steps.back().feasible) break;
    }
    return s;
}

void criterion3(const PolySystem& sys) {
    bool ok = true;
    std::string detail;
    for (int d : {2, 4}) {
        const Synth s = synthesize(sys, Method::AI, d);
        const bool f = s.steps.size() == 2 && s.steps[1].feasible;
        const double c1 = f ? s.steps[1].C : NAN;
        ok = ok && f && std::abs(c1) <= 1e-4;
        detail += fmt(" C1(d=%d)=%.3e", d, c1);
    }
    verdict(3, ok, "A-I step 1 degenerate:" + detail);
}

void criterion4(const LoadedSystem& ls, const Synth& s) {
    const PolySystem& sys = ls.system;
    if (s.steps.size() != 2 || !s.steps[1].feasible) {
        verdict(4, false, "A-II step 1 failed: " + s.steps.back().message);
        return;
    }
    const double eps = 8.7e-4, kappa = 0.5;
    const AssembledBound ab = assemble(s.st, sys.states, sys.inputs, eps, kappa, 1, Method::AII);
    const SimReport r = time_average(sys, &ab.controller, default_sim(ls));
    const double c1 = s.st.C[1];
    const bool ok = c1 <= -250.0 && ab.predicted > r.phi_bar;
    verdict(4, ok, fmt("A-II C1=%.3f <= -250; C0+eps*kappa*C1=%.5f > simulated Phi_bar=%.5f at eps=%g", c1,
                       ab.predicted, r.phi_bar, eps));
}

struct Window {
    std::optional<double> eps1, eps2;
};

Window criterion5(const LoadedSystem& ls, const Controller& u1) {
    SweepOptions o;
    o.with_bounds = false;
    o.sim = default_sim(ls);
    const SweepResult sw = sweep_eps(ls.system, u1.terms.at(0), parse_eps_range("0:0.1:0.002"), o);
    Window w{sw.eps1, sw.eps2};
    bool ok = w.eps1 && w.eps2 && *w.eps1 >= 0.0117 && *w.eps1 <= 0.0137 && *w.eps2 >= 0.0712 && *w.eps2 <= 0.0772;
    std::string detail;
    if (ok) {
        for (double t : {0.25, 0.5, 0.75}) {
            const double e = *w.eps1 + t * (*w.eps2 - *w.eps1);
            const Controller c = first_order(ls.system, u1.terms[0], e);
            const Trajectory tr = integrate(ls.system, &c, o.sim);
            const double xn = norm(tr.back());
            ok = ok && xn < 1e-3;
            detail += fmt(" |x(T)|(eps=%.4f)=%.1e", e, xn);
        }
    }
    verdict(5, ok, fmt("window eps1=%.5f in [0.0117,0.0137], eps2=%.5f in [0.0712,0.0772];", w.eps1.value_or(NAN),
                       w.eps2.value_or(NAN)) + detail);
    return w;
}

void criterion6(const PolySystem& sys, const Controller& u1, const Window& w) {
    // reported points, mirrored in a1 and a2
    const std::array<std::array<double, 3>, 2> reported{{{0.6988, 2.362, 2.377}, {0.7000, 2.364, 2.382}}};
    auto analyse = [&](double eps, double& worst, double& phi_lo, double& phi_hi, int& nonzero, bool& origin) {
        const Controller c = first_order(sys, u1.terms[0], eps);
        const ClosedLoop cl = close_loop(sys, &c);
        const auto eqs = find_equilibria(cl);
        worst = 0.0;
        phi_lo = kInf;
        phi_hi = -kInf;
        nonzero = 0;
        origin = false;
        std::array<bool, 4> hit{};
        for (const auto& e : eqs) {
            if (norm(e.point) < 1e-6) {
                origin = true;
                continue;
            }
            ++nonzero;
            const double ph = cl.cphi(e.point);
            phi_lo = std::min(phi_lo, ph);
            phi_hi = std::max(phi_hi, ph);
            double best = kInf;
            for (std::size_t p = 0; p < 2; ++p)
                for (double sg : {-1.0, 1.0}) {
                    const double d = std::max({std::abs(e.point[0] - sg * reported[p][0]),
                                               std::abs(e.point[1] - sg * reported[p][1]),
                                               std::abs(e.point[2] - reported[p][2])});
                    if (d <= 5e-3) hit[2 * p + (sg > 0)] = true;
                    best = std::min(best, d);
                }
            worst = std::max(worst, best);
        }
        return hit[0] && hit[1] && hit[2] && hit[3];
    };

    double worst = 0, lo = 0, hi = 0;
    int nz = 0;
    bool origin = false;
    const double lit = 7.416e-2;
    analyse(lit, worst, lo, hi, nz, origin);
    const bool lit_count = origin && nz == 4;
    const bool lit_phi = nz > 0 && within_rel(lo, 171.55, 0.02) && within_rel(hi, 171.55, 0.02);
    info(fmt("at eps=%.5g: origin %s, %d nonzero, Phi in [%.3f, %.3f], max coordinate deviation %.2e", lit,
             origin ? "found" : "missing", nz, lo, hi, worst));

    if (!w.eps2) {
        verdict(6, false, "no eps2 detected");
        return;
    }
    // at the fold the two nonzero pairs separate like sqrt(eps - eps2), so the
    // coordinates are compared at this model's own eps2
    const bool all_hit = analyse(*w.eps2, worst, lo, hi, nz, origin);
    const bool ok = lit_count && lit_phi && all_hit && origin && nz == 4 && within_rel(lo, 171.55, 0.02) &&
                    within_rel(hi, 171.55, 0.02);
    info(fmt("at detected eps2=%.7f: origin %s, %d nonzero, Phi in [%.3f, %.3f], max coordinate deviation %.2e",
             *w.eps2, origin ? "found" : "missing", nz, lo, hi, worst));
    verdict(6, ok, fmt("origin + 4 nonzero equilibria at eps=%.5g with Phi within 2%% of 171.55; all four reported "
                       "points matched within 5e-3 at eps2",
                       lit));
}

void criterion7(const LoadedSystem& ls, const Controller& u1) {
    const PolySystem& sys = ls.system;
    RefineOptions ro;
    ro.d_V = 6;

    // tight bound at the controller's eps
    Controller c = u1;
    c.epsilon = 8.7e-4;
    const BoundCertificate b = refine_fixed_eps(sys, c, ro);
    SimConfig sim = default_sim(ls);
    const SimReport r = time_average(sys, &c, sim);
    const double pb = r.phi_bar_cycles.value_or(r.phi_bar);
    const bool tight = b.feasible && pb <= b.C && b.C <= 1.05 * pb;
    info(fmt("eps=8.7e-4: C=%.7f (dual %.7f, %s), Phi_bar over %d whole cycles=%.9f, window mean=%.7f", b.C,
             b.C_dual, b.optimality_certified ? "optimal" : "gap open", r.cycles, pb, r.phi_bar));

    // relaxation at eps = 3e-3; its residual comes from an A-I step 0
    c.epsilon = 3e-3;
    ExpansionState st;
    StepOptions so;
    so.method = Method::AI;
    const bool st_ok = step(st, sys, so).feasible;
    bool relax_ok = st_ok;
    std::string detail;
    for (int d : {6, 8}) {
        ro.d_V = d;
        ro.relax = false;
        const BoundCertificate plain = refine_fixed_eps(sys, c, ro);
        ro.relax = true;
        const BoundCertificate rel = refine_fixed_eps(sys, c, ro, &st);
        // the unrelaxed optimum lies between its primal and dual objectives
        const double upper = std::max(plain.C, std::isfinite(plain.C_dual) ? plain.C_dual : plain.C);
        const double tol = 1e-8 * (1.0 + std::abs(plain.C));
        const bool ok = plain.feasible && rel.feasible && !rel.multipliers.empty() && rel.C <= upper + tol;
        relax_ok = relax_ok && ok;
        info(fmt("eps=3e-3 d_V=%d: C_unrelaxed=%.7f (dual %.7f, %s), C_relaxed=%.7f (dual %.7f, %s)", d, plain.C,
                 plain.C_dual, plain.optimality_certified ? "optimal" : "gap open", rel.C, rel.C_dual,
                 rel.optimality_certified ? "optimal" : "gap open"));
        detail += fmt(" d_V=%d %.7f<=%.7f", d, rel.C, upper);
    }
    info("S0*F0 with F0 <= 0 cannot lower the optimum of a polynomial identity; equality is the expected outcome");
    verdict(7, tight && relax_ok,
            fmt("O_eps tight at 8.7e-4: %.7f <= %.7f <= 1.05*Phi_bar; relaxed <= unrelaxed at 3e-3:", pb, b.C) +
                detail);
}

void criterion8(const LoadedSystem& ls, const Synth& aii) {
    const PolySystem& sys = ls.system;
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    std::uniform_int_distribution<int> E(0, 3);

    // polynomial oracles
    double poly_err = 0.0;
    for (int t = 0; t < 50; ++t) {
        Polynomial p(3), q(3);
        for (int k = 0; k < 6; ++k) {
            p.add_term(Monomial({E(rng), E(rng), E(rng)}), U(rng));
            q.add_term(Monomial({E(rng), E(rng), E(rng)}), U(rng));
        }
        const std::vector<double> x{U(rng), U(rng), U(rng)};
        const double pv = p.evaluate(x), qv = q.evaluate(x);
        poly_err = std::max(poly_err, std::abs((p * q).evaluate(x) - pv * qv) / (1.0 + std::abs(pv * qv)));
        poly_err = std::max(poly_err, std::abs(CompiledPolynomial(p)(x) - pv) / (1.0 + std::abs(pv)));
        for (std::size_t i = 0; i < 3; ++i) {
            const double h = 1e-5;
            std::vector<double> a = x, b = x;
            a[i] += h;
            b[i] -= h;
            const double fd = (p.evaluate(a) - p.evaluate(b)) / (2 * h);
            poly_err = std::max(poly_err, std::abs(p.derivative(i).evaluate(x) - fd) / (1.0 + std::abs(fd)));
            // product rule
            const double lhs = (p * q).derivative(i).evaluate(x);
            const double rhs = p.derivative(i).evaluate(x) * qv + pv * q.derivative(i).evaluate(x);
            poly_err = std::max(poly_err, std::abs(lhs - rhs) / (1.0 + std::abs(rhs)));
        }
    }
    const bool poly_ok = poly_err <= 1e-6;

    // SOS recomposition and degree monotonicity
    double rec = 0.0, prev = kInf;
    bool mono = true;
    std::vector<BoundCertificate> ups;
    for (int d : {2, 4, 6}) {
        ups.push_back(upper_bound(sys, d));
        rec = std::max(rec, ups.back().recomposition_error);
        mono = mono && ups.back().C <= prev + 1e-5 * (1.0 + std::abs(ups.back().C));
        prev = ups.back().C;
    }
    const Synth ai = synthesize(sys, Method::AI, 2);
    for (const Synth* s : {&ai, &aii})
        for (const auto& r : s->steps)
            if (r.feasible) rec = std::max(rec, r.recomposition_error);
    const bool rec_ok = rec <= 1e-6;

    // randomized SDPs
    std::mt19937 srng(12345);
    double kkt = 0.0;
    int optimal = 0;
    for (int t = 0; t < 20; ++t) {
        const SdpProblem p = testing_util::random_feasible(srng, t);
        const SdpSolution s = solve(p);
        if (s.status == SdpStatus::optimal) ++optimal;
        kkt = std::max({kkt, s.residuals.primal, s.residuals.dual, s.residuals.gap});
    }
    const bool sdp_ok = optimal == 20 && kkt <= 1e-8;

    // certificate along trajectories
    const ClosedLoop cl = close_loop(sys);
    double maxH = -kInf;
    bool cert_ok = true;
    std::uniform_real_distribution<double> X(-3.0, 3.0);
    for (int t = 0; t < 10; ++t) {
        SimConfig c;
        c.dt = 0.01;
        c.T = 200.0;
        c.x0 = {X(rng), X(rng), X(rng)};
        const CertificateCheck chk = check_certificate(ups.front(), cl, c);
        maxH = std::max(maxH, chk.max_H);
        cert_ok = cert_ok && !chk.violated;
    }

    // step-1 optimum
    const bool step_ok = ai.steps.size() == 2 && aii.steps.size() == 2 && ai.st.C[1] <= 1e-9 && aii.st.C[1] <= 1e-9;

    info(fmt("polynomial oracles: max relative error %.1e over 50 random pairs", poly_err));
    info(fmt("SOS recomposition: max %.1e (bounds d_V=2,4,6 and both step-1 solves)", rec));
    info(fmt("random SDPs: %d/20 optimal, max KKT residual %.1e", optimal, kkt));
    info(fmt("degree monotone: C = %.7f, %.7f, %.7f", ups[0].C, ups[1].C, ups[2].C));
    info(fmt("certificate: max H along 10 random trajectories %.2e", maxH));
    info(fmt("step-1 optimum: A-I %.2e, A-II %.3f", ai.st.C.size() > 1 ? ai.st.C[1] : NAN,
             aii.st.C.size() > 1 ? aii.st.C[1] : NAN));
    verdict(8, poly_ok && rec_ok && sdp_ok && mono && cert_ok && step_ok,
            fmt("property suites: poly %s, recomposition %s, SDP KKT %s, monotone %s, certificate %s, step-1 %s",
                poly_ok ? "ok" : "bad", rec_ok ? "ok" : "bad", sdp_ok ? "ok" : "bad", mono ? "ok" : "bad",
                cert_ok ? "ok" : "bad", step_ok ? "ok" : "bad"));
}

std::pair<int, std::string> run_command(const std::string& cmd) {
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return {-1, ""};
    char buf[4096];
    for (std::size_t k; (k = std::fread(buf, 1, sizeof buf, p)) > 0;) out.append(buf, k);
    const int st = pclose(p);
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

void criterion9(const PolySystem& sys) {
    const CompiledSos cs = compile(bound_program(sys.f, sys.phi_uncontrolled(), 2, BoundKind::upper));
    const std::string text = export_sdpa_string(cs.sdp);
    const std::string again = export_sdpa_string(import_sdpa_string(text));
    const bool round_trip = text == again;

    const SdpSolution s = solve(cs.sdp);
    const double internal = s.primal_objective + cs.sdp.objective_constant;

    namespace fs = std::filesystem;
    const fs::path file = fs::temp_directory_path() / ("avgbound_acceptance_" + std::to_string(::getpid()) + ".dat-s");
    export_sdpa(cs.sdp, file.string());
    const auto [code, out] =
        run_command("python3 " + kRoot + "/tools/sdpa_cvxpy.py " + file.string() + " 2>/dev/null");
    fs::remove(file);

    std::string ext = "external solver unavailable, round trip only";
    bool ext_ok = true;
    if (code == 0) {
        try {
            const Json j = Json::parse(out);
            const double v = j.at("objective").get<double>();
            ext_ok = std::abs(v - internal) <= 1e-5;
            ext = fmt("%s objective %.9f vs internal %.9f (diff %.1e)", j.value("solver", "external").c_str(), v,
                      internal, std::abs(v - internal));
        } catch (const std::exception& e) {
            ext_ok = false;
            ext = std::string("external output unreadable: ") + e.what();
        }
    } else if (code != 3) {
        ext_ok = false;
        ext = fmt("external solver failed (exit %d): ", code) + out;
    }
    verdict(9, round_trip && ext_ok,
            fmt("SDPA round trip %s (%zu bytes); ", round_trip ? "bit-exact" : "differs", text.size()) + ext);
}

} // namespace

int main() {
    try {
        const LoadedSystem ls = load_config(kRoot + "/configs/cylinder.cfg");
        const Controller u1 = load_controller(kRoot + "/configs/u1_reference.json", ls.system);
        criterion1(ls.system);
        criterion2(ls);
        criterion3(ls.system);
        const Synth aii = synthesize(ls.system, Method::AII, 2);
        criterion4(ls, aii);
        const Window w = criterion5(ls, u1);
        criterion6(ls.system, u1, w);
        criterion7(ls, u1);
        criterion8(ls, aii);
        criterion9(ls.system);
    } catch (const std::exception& e) {
        std::cout << "FAIL: aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
