// avgbound command-line front end. Every command prints one JSON document on
// stdout (or --out); failures print an error document and exit nonzero.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "avgbound/avgbound.hpp"

using namespace avgbound;

namespace {

#ifdef AVGBOUND_SOURCE_DIR
const std::string kDefaultSystem = std::string(AVGBOUND_SOURCE_DIR) + "/configs/cylinder.cfg";
const std::string kDefaultController = std::string(AVGBOUND_SOURCE_DIR) + "/configs/u1_reference.json";
#else
const std::string kDefaultSystem = "configs/cylinder.cfg";
const std::string kDefaultController = "configs/u1_reference.json";
#endif

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct Common {
    std::string system = kDefaultSystem;
    std::string out;
    double sdp_tol = 1e-8;
    int sdp_max_iter = 200;
    bool verbose = false;

    SdpOptions sdp() const {
        SdpOptions o;
        o.tol = sdp_tol;
        o.max_iter = sdp_max_iter;
        o.verbose = verbose;
        return o;
    }
};

struct SynthFlags {
    std::string method = "AII";
    int order = 1;
    int d_V = 2;
    int d_u = 2;
    int d_S = 2;
    double rho = 400.0;
    double rho_v = -1.0;
    double rho_s = -1.0;
    double eps = 8.7e-4;
    double kappa = 0.5;
    bool confirm = true;
    std::string controller_out;

    StepOptions step(const SdpOptions& sdp) const {
        StepOptions o;
        o.d_V = d_V;
        o.d_u = d_u;
        o.d_S = d_S;
        o.method = parse_method(method);
        o.rho = rho;
        o.rho_v = rho_v;
        o.rho_s = rho_s;
        o.sdp = sdp;
        return o;
    }
};

struct SimFlags {
    double dt = -1.0;
    double T = -1.0;
    double transient = 0.5;
    std::vector<double> x0;

    SimConfig resolve(const LoadedSystem& ls) const {
        SimConfig c;
        c.dt = dt > 0 ? dt : ls.config.defaults.dt;
        c.T = T > 0 ? T : ls.config.defaults.T;
        c.transient_fraction = transient;
        c.x0 = !x0.empty() ? x0 : ls.config.defaults.x0;
        if (c.x0.empty()) c.x0.assign(ls.system.n(), 0.1);
        c.validate(ls.system.n());
        return c;
    }
};

Json step_options_json(const StepOptions& o) {
    return Json{{"method", to_string(o.method)}, {"d_V", o.d_V},         {"d_u", o.d_u},
                {"d_S", o.d_S},                  {"rho", o.rho},         {"rho_v", o.v_box()},
                {"rho_s", o.s_box()},            {"chop", o.chop},       {"sdp", to_json(o.sdp)}};
}

Json header(const std::string& command, const LoadedSystem& ls, Json options) {
    Json j{{"tool", tool_json()}, {"command", command}, {"options", std::move(options)}, {"system", to_json(ls.config)}};
    if (!ls.warnings.empty()) j["warnings"] = ls.warnings;
    return j;
}

void emit(const Json& j, const std::string& out) {
    const std::string text = j.dump(2) + "\n";
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) throw Error("cannot write '" + out + "'");
    f << text;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path + "'");
    f << text;
}

// Runs steps 0..order and returns their results; `st` is filled in.
std::vector<StepResult> run_steps(ExpansionState& st, const PolySystem& sys, const StepOptions& o, int order) {
    std::vector<StepResult> steps;
    for (int i = 0; i <= order; ++i) {
        steps.push_back(step(st, sys, o));
        if (!steps.back().feasible) break;
    }
    return steps;
}

Controller pick_controller(const std::string& path, const LoadedSystem& ls, double eps) {
    Controller c = load_controller(path, ls.system);
    if (eps >= 0) c.epsilon = eps;
    return c;
}

// ---- commands -------------------------------------------------------------

int cmd_bound(const Common& cm, int d_V, bool lower, double attractor_beta, int attractor_ds) {
    const LoadedSystem ls = load_config(cm.system);
    BoundOptions bo;
    bo.sdp = cm.sdp();
    Json opts{{"dv", d_V}, {"lower", lower}, {"sdp", to_json(bo.sdp)}};
    if (attractor_beta > 0) opts["attractor"] = Json{{"beta", attractor_beta}, {"d_S", attractor_ds}};
    Json j = header("bound", ls, opts);
    const BoundCertificate up = upper_bound(ls.system, d_V, bo);
    j["upper"] = to_json(up, ls.system.states);
    if (lower) j["lower"] = to_json(lower_bound(ls.system, d_V, bo), ls.system.states);
    if (attractor_beta > 0)
        j["attractor"] = to_json(attractor_certificate(ls.system, attractor_beta, attractor_ds, bo.sdp), ls.system.states);
    emit(j, cm.out);
    return up.feasible ? 0 : kExitError;
}

int cmd_synth(const Common& cm, const SynthFlags& sf, const SimFlags& simf) {
    const LoadedSystem ls = load_config(cm.system);
    const StepOptions so = sf.step(cm.sdp());
    if (sf.order < 1) throw Error("--order must be at least 1");
    Json opts = step_options_json(so);
    opts["order"] = sf.order;
    opts["eps"] = sf.eps;
    opts["kappa"] = sf.kappa;
    opts["confirm"] = sf.confirm;
    SimConfig sim;
    if (sf.confirm) {
        sim = simf.resolve(ls);
        opts["sim"] = to_json(sim);
    }
    Json j = header("synth", ls, opts);

    ExpansionState st;
    const auto steps = run_steps(st, ls.system, so, sf.order);
    Json sj = Json::array();
    for (const auto& r : steps) sj.push_back(to_json(r, ls.system.states, ls.system.inputs));
    j["steps"] = sj;
    if (st.order() < sf.order + 1) {
        j["error"] = Json{{"kind", "solver"}, {"message", "step " + std::to_string(steps.back().order) + " failed: " +
                                                              steps.back().message}};
        emit(j, cm.out);
        return kExitError;
    }
    const AssembledBound ab = assemble(st, ls.system.states, ls.system.inputs, sf.eps, sf.kappa, sf.order, so.method);
    j["controller"] = to_json(ab.controller);
    j["bound"] = Json{{"predicted", num(ab.predicted)}, {"formula", ab.formula}, {"rigorous", ab.rigorous},
                      {"label", ab.label}};
    if (sf.confirm) {
        // the asymptotic claim is only reported next to a measured average
        Json c;
        try {
            const SimReport r = time_average(ls.system, &ab.controller, sim);
            c = Json{{"phi_bar", num(r.phi_bar)},
                     {"converged", r.converged},
                     {"bound_holds", std::isfinite(ab.predicted) && r.phi_bar <= ab.predicted}};
        } catch (const DivergenceError& e) {
            c = Json{{"error", e.what()}};
        }
        j["confirmation"] = c;
    }
    if (!sf.controller_out.empty()) write_text(sf.controller_out, to_json(ab.controller).dump(2) + "\n");
    emit(j, cm.out);
    return 0;
}

int cmd_refine(const Common& cm, const std::string& ctrl_path, double eps, int d_V, bool relax, int d_S, int d_V0) {
    const LoadedSystem ls = load_config(cm.system);
    const Controller ctrl = pick_controller(ctrl_path, ls, eps);
    RefineOptions ro;
    ro.d_V = d_V;
    ro.relax = relax;
    ro.d_S = d_S;
    ro.bound.sdp = cm.sdp();
    Json opts{{"controller", ctrl_path}, {"eps", ctrl.epsilon}, {"dv", d_V},          {"relax", relax},
              {"ds", d_S},               {"dv0", d_V0},         {"sdp", to_json(ro.bound.sdp)}};
    Json j = header("refine", ls, opts);
    j["controller"] = to_json(ctrl);
    ExpansionState st;
    if (relax) {
        StepOptions s0;
        s0.d_V = d_V0;
        s0.sdp = ro.bound.sdp;
        const StepResult r0 = step(st, ls.system, s0);
        if (!r0.feasible) throw Error("O0 for the relaxation failed: " + r0.message);
        j["C0"] = num(r0.C);
    }
    const BoundCertificate c = refine_fixed_eps(ls.system, ctrl, ro, relax ? &st : nullptr);
    j["certificate"] = to_json(c, ls.system.states);
    emit(j, cm.out);
    return c.feasible ? 0 : kExitError;
}

struct SweepFlags {
    std::string eps = "0:0.1:0.002";
    std::string controller = kDefaultController;
    bool bounds = true;
    int d_V = 6;
    double c1 = std::numeric_limits<double>::quiet_NaN();
    int threads = 0;
    std::string csv;
    bool equilibria = true;
};

int cmd_sweep(const Common& cm, const SweepFlags& wf, const SynthFlags& sf, const SimFlags& simf) {
    const LoadedSystem ls = load_config(cm.system);
    const Controller ctrl = load_controller(wf.controller, ls.system);
    if (ctrl.order() < 1) throw Error("controller has no first-order term");
    const std::vector<double> eps_list = parse_eps_range(wf.eps);

    SweepOptions so;
    so.sim = simf.resolve(ls);
    so.with_bounds = wf.bounds;
    so.refine.d_V = wf.d_V;
    so.refine.bound.sdp = cm.sdp();
    so.threads = wf.threads;

    // C0, C1 for the linear prediction, and F_0 for the relaxed bound
    const StepOptions stp = sf.step(cm.sdp());
    ExpansionState st;
    const auto steps = run_steps(st, ls.system, stp, std::isfinite(wf.c1) ? 0 : 1);
    if (st.order() >= 1) so.C0 = st.C[0];
    so.C1 = std::isfinite(wf.c1) ? wf.c1 : (st.order() >= 2 ? st.C[1] : so.C1);
    if (st.order() >= 1) so.state = &st;

    Json opts{{"eps", wf.eps},        {"controller", wf.controller},  {"bounds", wf.bounds}, {"dv", wf.d_V},
              {"c1", num(wf.c1)},     {"synth", step_options_json(stp)}, {"sim", to_json(so.sim)},
              {"equilibria", to_json(so.equilibria)}};
    Json j = header("sweep", ls, opts);
    j["controller"] = to_json(ctrl);
    j["C0"] = num(so.C0);
    j["C1"] = num(so.C1);

    const SweepResult res = sweep_eps(ls.system, ctrl.terms[0], eps_list, so);
    Json rows = Json::array();
    for (const auto& r : res.rows) {
        Json row{{"eps", r.eps},
                 {"phi_bar", num(r.phi_bar)},
                 {"converged", r.converged},
                 {"C_eps", num(r.C_eps)},
                 {"C_eps_relaxed", num(r.C_eps_relaxed)},
                 {"C_linear", num(r.C_linear)},
                 {"n_equilibria", r.n_equilibria},
                 {"stabilized", r.stabilized}};
        if (!r.error.empty()) row["error"] = r.error;
        rows.push_back(row);
    }
    j["rows"] = rows;
    j["eps1"] = res.eps1 ? num(*res.eps1) : Json(nullptr);
    j["eps2"] = res.eps2 ? num(*res.eps2) : Json(nullptr);
    if (!wf.csv.empty()) {
        std::ostringstream os;
        write_csv(os, res.rows);
        if (wf.csv == "-")
            std::cout << os.str();
        else
            write_text(wf.csv, os.str());
        j["csv"] = wf.csv;
    }
    if (wf.csv != "-" || !cm.out.empty()) emit(j, cm.out);
    return 0;
}

int cmd_simulate(const Common& cm, const std::string& ctrl_path, double eps, const SimFlags& simf, bool equilibria) {
    const LoadedSystem ls = load_config(cm.system);
    const SimConfig sim = simf.resolve(ls);
    std::optional<Controller> ctrl;
    if (!ctrl_path.empty()) ctrl = pick_controller(ctrl_path, ls, eps);
    const EquilibriumSearch es;
    Json opts{{"controller", ctrl_path.empty() ? Json(nullptr) : Json(ctrl_path)},
              {"eps", ctrl ? Json(ctrl->epsilon) : Json(nullptr)},
              {"sim", to_json(sim)},
              {"equilibria", equilibria ? to_json(es) : Json(nullptr)}};
    Json j = header("simulate", ls, opts);
    if (ctrl) j["controller"] = to_json(*ctrl);
    const ClosedLoop cl = close_loop(ls.system, ctrl ? &*ctrl : nullptr);
    int rc = 0;
    try {
        j["report"] = to_json(time_average(cl, sim));
    } catch (const DivergenceError& e) {
        j["report"] = Json{{"error", e.what()}};
        rc = kExitError;
    }
    if (equilibria) {
        Json eq = Json::array();
        for (const auto& e : find_equilibria(cl, es)) {
            Json ej = to_json(e);
            ej["phi"] = num(cl.cphi(e.point));
            eq.push_back(ej);
        }
        j["equilibria"] = eq;
    }
    emit(j, cm.out);
    return rc;
}

int cmd_export(const Common& cm, const std::string& problem, const std::string& file, int d_V,
               const std::string& ctrl_path, double eps, bool relax, int d_S, int d_V0) {
    const LoadedSystem ls = load_config(cm.system);
    if (file.empty()) throw Error("export-sdpa needs --file");
    Json opts{{"problem", problem}, {"dv", d_V}, {"file", file}};
    SosProgram prog(ls.system.n());
    if (problem == "O0") {
        prog = bound_program(ls.system.f, ls.system.phi_uncontrolled(), d_V, BoundKind::upper);
    } else if (problem == "O0-lower") {
        prog = bound_program(ls.system.f, ls.system.phi_uncontrolled(), d_V, BoundKind::lower);
    } else if (problem == "O_eps") {
        const Controller ctrl = pick_controller(ctrl_path, ls, eps);
        RefineOptions ro;
        ro.d_V = d_V;
        ro.relax = relax;
        ro.d_S = d_S;
        ExpansionState st;
        if (relax) {
            StepOptions s0;
            s0.d_V = d_V0;
            s0.sdp = cm.sdp();
            if (!step(st, ls.system, s0).feasible) throw Error("O0 for the relaxation failed");
        }
        const RefineProblem rp = refine_problem(ls.system, ctrl, ro, relax ? &st : nullptr);
        prog = bound_program(rp.f, rp.phi, d_V, BoundKind::upper, rp.known);
        opts["controller"] = ctrl_path;
        opts["eps"] = ctrl.epsilon;
        opts["relax"] = relax;
        opts["ds"] = d_S;
    } else {
        throw Error("unknown problem '" + problem + "' (O0, O0-lower, O_eps)");
    }
    const CompiledSos cs = compile(prog);
    export_sdpa(cs.sdp, file);
    Json j = header("export-sdpa", ls, opts);
    j["blocks"] = cs.sdp.blocks;
    j["equalities"] = cs.sdp.equalities.size();
    j["free_variables"] = cs.sdp.free_vars.size();
    j["objective_constant"] = num(cs.sdp.objective_constant);
    emit(j, cm.out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bounds on long-time averages of polynomial systems via sum-of-squares programs"};
    app.set_version_flag("--version", std::string("avgbound ") + kVersion);
    app.require_subcommand(1);
    Common cm;
    auto add_common = [&](CLI::App* c) {
        c->add_option("--system", cm.system, "system definition file")->capture_default_str();
        c->add_option("--out", cm.out, "write the JSON here instead of stdout");
        c->add_option("--sdp-tol", cm.sdp_tol, "interior-point tolerance")->capture_default_str();
        c->add_option("--sdp-max-iter", cm.sdp_max_iter, "interior-point iteration limit")->capture_default_str();
        c->add_flag("--verbose", cm.verbose, "solver log on stderr");
    };
    SynthFlags sf;
    auto add_synth = [&](CLI::App* c) {
        c->add_option("--method", sf.method, "AI or AII")->capture_default_str();
        c->add_option("--du", sf.d_u, "degree of u_i")->capture_default_str();
        c->add_option("--ds", sf.d_S, "multiplier degree")->capture_default_str();
        c->add_option("--rho", sf.rho, "box on u_i coefficients")->capture_default_str();
        c->add_option("--rho-v", sf.rho_v, "box on V_i coefficients (negative: same as rho)")->capture_default_str();
        c->add_option("--rho-s", sf.rho_s, "box on free multiplier coefficients (negative: same as rho)")
            ->capture_default_str();
    };
    SimFlags simf;
    auto add_sim = [&](CLI::App* c) {
        c->add_option("--dt", simf.dt, "RK4 step (default from the system file)");
        c->add_option("--T", simf.T, "horizon (default from the system file)");
        c->add_option("--transient", simf.transient, "discarded fraction of the horizon")->capture_default_str();
        c->add_option("--x0", simf.x0, "initial state")->delimiter(',');
    };

    int bound_dv = 2, attractor_ds = 2;
    bool bound_lower = false;
    double attractor_beta = -1.0;
    auto* bound = app.add_subcommand("bound", "upper (and lower) bound on the uncontrolled average");
    add_common(bound);
    bound->add_option("--dv", bound_dv, "degree of V")->capture_default_str();
    bound->add_flag("--lower", bound_lower, "also compute the lower bound");
    bound->add_option("--attractor-beta", attractor_beta, "also certify the ball |x|^2/2 <= beta as attracting");
    bound->add_option("--attractor-ds", attractor_ds, "multiplier degree for the attractor certificate")
        ->capture_default_str();

    auto* synth = app.add_subcommand("synth", "sequential small-feedback synthesis");
    add_common(synth);
    add_synth(synth);
    add_sim(synth);
    synth->add_option("--order", sf.order, "truncation order k")->capture_default_str();
    synth->add_option("--dv", sf.d_V, "degree of V_i")->capture_default_str();
    synth->add_option("--eps", sf.eps, "eps for the assembled controller")->capture_default_str();
    synth->add_option("--kappa", sf.kappa, "kappa in (0, 1)")->capture_default_str();
    synth->add_flag("!--no-confirm", sf.confirm, "skip the simulation next to the predicted bound");
    synth->add_option("--controller-out", sf.controller_out, "also write the controller JSON here");

    std::string ctrl_path = kDefaultController;
    double eps = -1.0;
    int refine_dv = 6, refine_ds = -1, dv0 = 2;
    bool relax = false;
    auto* refine = app.add_subcommand("refine", "bound for a fixed eps");
    add_common(refine);
    refine->add_option("--controller", ctrl_path, "controller JSON")->capture_default_str();
    refine->add_option("--eps", eps, "override the controller's eps");
    refine->add_option("--dv", refine_dv, "degree of V")->capture_default_str();
    refine->add_flag("--relax", relax, "add the certified residuals through SOS multipliers");
    refine->add_option("--ds", refine_ds, "multiplier degree (negative: largest that fits)")->capture_default_str();
    refine->add_option("--dv0", dv0, "degree of V_0 for the relaxation residual")->capture_default_str();

    SweepFlags wf;
    auto* sweep = app.add_subcommand("sweep", "scan eps for a first-order controller");
    add_common(sweep);
    add_synth(sweep);
    add_sim(sweep);
    sweep->add_option("--eps", wf.eps, "start:stop:step or a single value")->capture_default_str();
    sweep->add_option("--controller", wf.controller, "controller JSON (first-order term is used)")
        ->capture_default_str();
    sweep->add_flag("!--no-bounds", wf.bounds, "skip the fixed-eps bounds");
    sweep->add_option("--dv", wf.d_V, "degree of V for the fixed-eps bounds")->capture_default_str();
    sweep->add_option("--c1", wf.c1, "C1 for the linear prediction (default: synthesize)");
    sweep->add_option("--threads", wf.threads, "worker threads (0: hardware, capped by AVGBOUND_THREADS)")
        ->capture_default_str();
    sweep->add_option("--csv", wf.csv, "CSV output path ('-' for stdout)");

    std::string sim_ctrl;
    bool sim_eq = true;
    auto* simulate = app.add_subcommand("simulate", "time average and equilibria of the closed loop");
    add_common(simulate);
    add_sim(simulate);
    simulate->add_option("--controller", sim_ctrl, "controller JSON (default: uncontrolled)");
    simulate->add_option("--eps", eps, "override the controller's eps");
    simulate->add_flag("!--no-equilibria", sim_eq, "skip the equilibrium search");

    std::string problem = "O0", file;
    int export_dv = 2;
    auto* exp = app.add_subcommand("export-sdpa", "write a compiled problem in SDPA sparse format");
    add_common(exp);
    exp->add_option("--problem", problem, "O0, O0-lower or O_eps")->capture_default_str();
    exp->add_option("--file", file, "SDPA output path")->required();
    exp->add_option("--dv", export_dv, "degree of V")->capture_default_str();
    exp->add_option("--controller", ctrl_path, "controller JSON for O_eps")->capture_default_str();
    exp->add_option("--eps", eps, "override the controller's eps");
    exp->add_flag("--relax", relax, "relaxed O_eps");
    exp->add_option("--ds", refine_ds, "multiplier degree for the relaxation")->capture_default_str();
    exp->add_option("--dv0", dv0, "degree of V_0 for the relaxation residual")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cout << Json{{"tool", tool_json()}, {"error", Json{{"kind", "usage"}, {"message", e.what()}}}}.dump(2)
                  << "\n";
        return kExitUsage;
    }

    try {
        if (*bound) return cmd_bound(cm, bound_dv, bound_lower, attractor_beta, attractor_ds);
        if (*synth) return cmd_synth(cm, sf, simf);
        if (*refine) return cmd_refine(cm, ctrl_path, eps, refine_dv, relax, refine_ds, dv0);
        if (*sweep) return cmd_sweep(cm, wf, sf, simf);
        if (*simulate) return cmd_simulate(cm, sim_ctrl, eps, simf, sim_eq);
        if (*exp) return cmd_export(cm, problem, file, export_dv, ctrl_path, eps, relax, refine_ds, dv0);
    } catch (const std::exception& e) {
        std::cout << error_json(e).dump(2) << "\n";
        return kExitError;
    }
    return kExitUsage;
}
