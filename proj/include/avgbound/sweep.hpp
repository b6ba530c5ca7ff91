#pragma once

// Scan of the first-order controller u = eps u1 over eps: measured average,
// fixed-eps bounds, equilibrium count, and the two thresholds where the
// origin becomes stable (eps1) and where nonzero equilibria appear (eps2).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "avgbound/error.hpp"
#include "avgbound/simulator.hpp"
#include "avgbound/synthesis.hpp"

namespace avgbound {

struct SweepOptions {
    SimConfig sim;
    EquilibriumSearch equilibria;
    bool with_bounds = true;
    RefineOptions refine;              ///< d_V and SDP settings for C_eps
    const ExpansionState* state = nullptr; ///< supplies F_j for the relaxed bound
    double C0 = std::numeric_limits<double>::quiet_NaN();
    double C1 = std::numeric_limits<double>::quiet_NaN();
    int threads = 0; ///< 0: hardware concurrency capped by AVGBOUND_THREADS
};

struct SweepRow {
    double eps = 0.0;
    double phi_bar = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    double C_eps = std::numeric_limits<double>::quiet_NaN();
    double C_eps_relaxed = std::numeric_limits<double>::quiet_NaN();
    double C_linear = std::numeric_limits<double>::quiet_NaN();
    int n_equilibria = 0;
    bool stabilized = false;
    std::string error;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::optional<double> eps1;
    std::optional<double> eps2;
};

inline int sweep_threads(int requested, std::size_t jobs) {
    int t = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("AVGBOUND_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) t = std::min(t, cap);
    }
    return std::max(1, std::min<int>(t, static_cast<int>(jobs)));
}

inline Controller first_order(const PolySystem& sys, const PolyVec& u1, double eps) {
    if (u1.size() != sys.m()) throw DimensionError("u1 has wrong input count");
    Controller c;
    c.epsilon = eps;
    c.terms = {u1};
    c.states = sys.states;
    c.inputs = sys.inputs;
    return c;
}

inline bool has_nonzero_equilibrium(const std::vector<Equilibrium>& eqs) {
    for (const auto& e : eqs) {
        double nrm = 0.0;
        for (double v : e.point) nrm = std::max(nrm, std::abs(v));
        if (nrm > 1e-6) return true;
    }
    return false;
}

inline SweepRow sweep_row(const PolySystem& sys, const PolyVec& u1, double eps, const SweepOptions& opt) {
    SweepRow row;
    row.eps = eps;
    if (std::isfinite(opt.C0) && std::isfinite(opt.C1)) row.C_linear = opt.C0 + eps * opt.C1;
    const Controller ctrl = first_order(sys, u1, eps);
    const ClosedLoop cl = close_loop(sys, &ctrl);
    row.n_equilibria = static_cast<int>(find_equilibria(cl, opt.equilibria).size());
    try {
        const SimReport r = time_average(cl, opt.sim);
        row.phi_bar = r.phi_bar;
        row.converged = r.converged;
        row.stabilized = r.stabilized;
    } catch (const DivergenceError& e) {
        row.error = e.what();
    }
    if (opt.with_bounds) {
        RefineOptions ro = opt.refine;
        ro.relax = false;
        const BoundCertificate plain = refine_fixed_eps(sys, ctrl, ro);
        if (plain.feasible) row.C_eps = plain.C;
        if (opt.state) {
            ro.relax = true;
            const BoundCertificate rel = refine_fixed_eps(sys, ctrl, ro, opt.state);
            if (rel.feasible) row.C_eps_relaxed = rel.C;
        }
    }
    return row;
}

/// eps1: origin turns linearly stable. Bisection on the Jacobian spectrum.
inline double bisect_eps1(const PolySystem& sys, const PolyVec& u1, double lo, double hi, double tol) {
    const std::vector<double> origin(sys.n(), 0.0);
    auto stable = [&](double e) {
        const Controller c = first_order(sys, u1, e);
        return linearly_stable_at(close_loop(sys, &c), origin);
    };
    if (stable(lo) || !stable(hi)) throw Error("eps1 bracket does not straddle the stability change");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (stable(mid) ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

/// eps2: nonzero equilibria appear. Bisection on their existence.
inline double bisect_eps2(const PolySystem& sys, const PolyVec& u1, double lo, double hi, double tol,
                          const EquilibriumSearch& search) {
    auto nonzero = [&](double e) {
        const Controller c = first_order(sys, u1, e);
        return has_nonzero_equilibrium(find_equilibria(close_loop(sys, &c), search));
    };
    if (nonzero(lo) || !nonzero(hi)) throw Error("eps2 bracket does not straddle the appearance of nonzero equilibria");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (nonzero(mid) ? hi : lo) = mid;
    }
    return hi;
}

struct ThresholdOptions {
    double eps1_tol = 1e-6;
    double eps2_tol = 1e-9;
};

/// Rows in eps order; thresholds bracketed by the coarse rows, then bisected.
inline SweepResult sweep_eps(const PolySystem& sys, const PolyVec& u1, std::vector<double> eps_list,
                             const SweepOptions& opt, const ThresholdOptions& topt = {}) {
    std::sort(eps_list.begin(), eps_list.end());
    for (double e : eps_list)
        if (!(e >= 0) || !std::isfinite(e)) throw Error("eps values must be finite and nonnegative");
    SweepResult out;
    out.rows.resize(eps_list.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t k; (k = next.fetch_add(1)) < eps_list.size();) {
            try {
                out.rows[k] = sweep_row(sys, u1, eps_list[k], opt);
            } catch (const std::exception& e) {
                out.rows[k].eps = eps_list[k];
                out.rows[k].error = e.what();
            }
        }
    };
    const int nt = sweep_threads(opt.threads, eps_list.size());
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    const auto& R = out.rows;
    for (std::size_t k = 1; k < R.size() && !out.eps1; ++k)
        if (R[k].stabilized && !R[k - 1].stabilized && R[k - 1].error.empty()) {
            try {
                out.eps1 = bisect_eps1(sys, u1, R[k - 1].eps, R[k].eps, topt.eps1_tol);
            } catch (const Error&) {
            }
        }
    for (std::size_t k = 1; k < R.size() && !out.eps2; ++k)
        if (R[k].n_equilibria > 1 && R[k - 1].n_equilibria == 1 && R[k - 1].stabilized) {
            try {
                out.eps2 = bisect_eps2(sys, u1, R[k - 1].eps, R[k].eps, topt.eps2_tol, opt.equilibria);
            } catch (const Error&) {
            }
        }
    return out;
}

/// "a:b:step" inclusive of b up to rounding.
inline std::vector<double> parse_eps_range(const std::string& spec) {
    const auto c1 = spec.find(':');
    auto num = [&](const std::string& s) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || *end != '\0' || !std::isfinite(v)) throw Error("bad eps range '" + spec + "'");
        return v;
    };
    if (c1 == std::string::npos) return {num(spec)};
    const auto c2 = spec.find(':', c1 + 1);
    if (c2 == std::string::npos) throw Error("eps range must look like start:stop:step");
    const double a = num(spec.substr(0, c1)), b = num(spec.substr(c1 + 1, c2 - c1 - 1)),
                 h = num(spec.substr(c2 + 1));
    if (!(h > 0) || b < a) throw Error("eps range needs step > 0 and stop >= start");
    std::vector<double> out;
    const auto count = static_cast<long>(std::floor((b - a) / h + 1e-9));
    for (long k = 0; k <= count; ++k) out.push_back(a + static_cast<double>(k) * h);
    return out;
}

inline std::string csv_number(double v) {
    if (!std::isfinite(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "eps,phi_bar,converged,C_eps,C_eps_relaxed,C_linear,n_equilibria,stabilized\r\n";
    for (const auto& r : rows)
        os << csv_number(r.eps) << ',' << csv_number(r.phi_bar) << ',' << (r.converged ? "true" : "false") << ','
           << csv_number(r.C_eps) << ',' << csv_number(r.C_eps_relaxed) << ',' << csv_number(r.C_linear) << ','
           << r.n_equilibria << ',' << (r.stabilized ? "true" : "false") << "\r\n";
}

} // namespace avgbound
