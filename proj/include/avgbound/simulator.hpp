#pragma once

// Closed-loop integration and the quantities read off trajectories: long-time
// averages, equilibria with their linear stability, and empirical checks of
// H = f_cl . grad V + Phi_cl - C <= 0.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avgbound/error.hpp"
#include "avgbound/polynomial.hpp"
#include "avgbound/synthesis.hpp"
#include "avgbound/system.hpp"

namespace avgbound {

struct SimConfig {
    double dt = 1e-2;
    double T = 3000.0;
    double transient_fraction = 0.5;
    std::vector<double> x0;

    void validate(std::size_t n) const {
        if (!(dt > 0)) throw Error("dt must be positive");
        if (!(T > dt)) throw Error("T must exceed dt");
        if (!(transient_fraction >= 0 && transient_fraction < 1)) throw Error("transient_fraction must lie in [0, 1)");
        if (x0.size() != n)
            throw DimensionError("x0 has " + std::to_string(x0.size()) + " entries for " + std::to_string(n) + " states");
    }
};

/// Closed-loop field and cost over the states, compiled for evaluation.
struct ClosedLoop {
    PolyVec f;
    Polynomial phi;
    std::vector<CompiledPolynomial> cf;
    CompiledPolynomial cphi;

    ClosedLoop(PolyVec f_, Polynomial phi_) : f(std::move(f_)), phi(std::move(phi_)), cphi(phi) {
        for (const auto& p : f) cf.emplace_back(p);
    }

    std::size_t n() const noexcept { return f.size(); }

    void eval(std::span<const double> x, std::span<double> out) const {
        for (std::size_t i = 0; i < cf.size(); ++i) out[i] = cf[i](x);
    }
};

/// Closed loop under `ctrl` (u = 0 when absent).
inline ClosedLoop close_loop(const PolySystem& sys, const Controller* ctrl = nullptr) {
    sys.validate();
    const PolyVec u = ctrl ? ctrl->u(sys) : sys.zero_input();
    return ClosedLoop(sys.closed_loop(u), sys.phi_closed(u));
}

struct Trajectory {
    double dt = 0.0;
    std::size_t n = 0;
    std::vector<double> states; ///< row-major, (steps + 1) x n, sample k at time k*dt

    std::size_t size() const noexcept { return n ? states.size() / n : 0; }
    std::span<const double> at(std::size_t k) const { return {states.data() + k * n, n}; }
    std::span<const double> back() const { return at(size() - 1); }
};

/// Classical fixed-step RK4. Throws DivergenceError once |x| exceeds 1e6.
inline Trajectory integrate(const ClosedLoop& cl, const SimConfig& cfg) {
    const std::size_t n = cl.n();
    cfg.validate(n);
    const auto steps = static_cast<std::size_t>(std::llround(cfg.T / cfg.dt));
    Trajectory tr;
    tr.dt = cfg.dt;
    tr.n = n;
    tr.states.reserve((steps + 1) * n);
    std::vector<double> x = cfg.x0, k1(n), k2(n), k3(n), k4(n), tmp(n);
    tr.states.insert(tr.states.end(), x.begin(), x.end());
    const double h = cfg.dt;
    for (std::size_t s = 0; s < steps; ++s) {
        cl.eval(x, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        cl.eval(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        cl.eval(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
        cl.eval(tmp, k4);
        double norm2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            norm2 += x[i] * x[i];
        }
        if (!(norm2 <= 1e12))
            throw DivergenceError("unbounded trajectory: |x| > 1e6 at t = " + std::to_string((s + 1) * h));
        tr.states.insert(tr.states.end(), x.begin(), x.end());
    }
    return tr;
}

inline Trajectory integrate(const PolySystem& sys, const Controller* ctrl, const SimConfig& cfg) {
    return integrate(close_loop(sys, ctrl), cfg);
}

struct SimReport {
    double phi_bar = 0.0;
    double convergence_gap = 0.0; ///< |mean over last half - mean over last quarter|
    bool converged = false;       ///< gap within 0.5% of phi_bar
    std::vector<double> terminal;
    std::vector<double> state_mean;      ///< over the retained window
    std::vector<double> state_mean_sq;
    bool oscillatory = false;            ///< some state still varies over the window
    std::optional<double> mean_planar_energy; ///< mean x1^2 + x2^2 when n >= 2
    bool stabilized = false;             ///< |x(T)| < 1e-3
    /// mean of Phi over whole periods of an oscillation in x1, between the
    /// first and last upward zero crossings of the retained window
    std::optional<double> phi_bar_cycles;
    int cycles = 0;
};

/// Trapezoidal mean of `phi` over whole cycles of x1 from sample `start`;
/// nullopt with fewer than two upward zero crossings.
inline std::optional<double> cycle_average(const Trajectory& tr, const std::vector<double>& phi, std::size_t start,
                                           int* cycles = nullptr) {
    const std::size_t N = tr.size();
    std::vector<std::size_t> up;
    for (std::size_t k = start; k + 1 < N; ++k)
        if (tr.at(k)[0] < 0 && tr.at(k + 1)[0] >= 0) up.push_back(k);
    if (up.size() < 2) return std::nullopt;
    if (cycles) *cycles = static_cast<int>(up.size() - 1);
    // crossing at k + theta, theta in [0, 1) by linear interpolation
    auto theta = [&](std::size_t k) { return -tr.at(k)[0] / (tr.at(k + 1)[0] - tr.at(k)[0]); };
    auto interp = [&](std::size_t k, double t) { return phi[k] + t * (phi[k + 1] - phi[k]); };
    const std::size_t k0 = up.front(), k1 = up.back();
    const double t0 = theta(k0), t1 = theta(k1);
    double acc = 0.5 * (1.0 - t0) * (interp(k0, t0) + phi[k0 + 1]);
    for (std::size_t k = k0 + 1; k < k1; ++k) acc += 0.5 * (phi[k] + phi[k + 1]);
    acc += 0.5 * t1 * (phi[k1] + interp(k1, t1));
    const double span = static_cast<double>(k1 - k0) + t1 - t0;
    return acc / span;
}

/// Reads the report off a finished trajectory.
inline SimReport summarize(const ClosedLoop& cl, const Trajectory& tr, double transient_fraction) {
    const std::size_t N = tr.size(), n = tr.n;
    if (N < 4) throw Error("trajectory too short to average");
    std::vector<double> phi(N);
    for (std::size_t k = 0; k < N; ++k) phi[k] = cl.cphi(tr.at(k));
    auto mean_from = [&](std::size_t start) {
        double s = 0.0;
        for (std::size_t k = start; k < N; ++k) s += phi[k];
        return s / static_cast<double>(N - start);
    };
    const auto start = std::min(N - 1, static_cast<std::size_t>(transient_fraction * static_cast<double>(N - 1)));
    SimReport r;
    r.phi_bar = mean_from(start);
    r.convergence_gap = std::abs(mean_from(N / 2) - mean_from(3 * N / 4));
    r.converged = r.convergence_gap <= 0.005 * std::abs(r.phi_bar) + 1e-12;
    r.phi_bar_cycles = cycle_average(tr, phi, start, &r.cycles);

    const auto last = tr.back();
    r.terminal.assign(last.begin(), last.end());
    double tn = 0.0;
    for (double v : r.terminal) tn += v * v;
    r.stabilized = std::sqrt(tn) < 1e-3;

    r.state_mean.assign(n, 0.0);
    r.state_mean_sq.assign(n, 0.0);
    std::vector<double> lo(n, kInf), hi(n, -kInf);
    double planar = 0.0;
    for (std::size_t k = start; k < N; ++k) {
        const auto x = tr.at(k);
        for (std::size_t i = 0; i < n; ++i) {
            r.state_mean[i] += x[i];
            r.state_mean_sq[i] += x[i] * x[i];
            lo[i] = std::min(lo[i], x[i]);
            hi[i] = std::max(hi[i], x[i]);
        }
        if (n >= 2) planar += x[0] * x[0] + x[1] * x[1];
    }
    const double cnt = static_cast<double>(N - start);
    for (std::size_t i = 0; i < n; ++i) {
        r.state_mean[i] /= cnt;
        r.state_mean_sq[i] /= cnt;
        if (hi[i] - lo[i] > 1e-6 * (1.0 + std::abs(hi[i]) + std::abs(lo[i]))) r.oscillatory = true;
    }
    if (n >= 2) r.mean_planar_energy = planar / cnt;
    return r;
}

inline SimReport time_average(const ClosedLoop& cl, const SimConfig& cfg) {
    return summarize(cl, integrate(cl, cfg), cfg.transient_fraction);
}

inline SimReport time_average(const PolySystem& sys, const Controller* ctrl, const SimConfig& cfg) {
    return time_average(close_loop(sys, ctrl), cfg);
}

// ============================================================================
// Equilibria
// ============================================================================

struct Equilibrium {
    std::vector<double> point;
    std::vector<std::complex<double>> eigenvalues;
    bool stable = false;
    double residual = 0.0; ///< |f_cl(point)|_inf
};

struct EquilibriumSearch {
    double lo = -3.0;
    double hi = 3.0;
    double step = 0.5;
    double newton_tol = 1e-10;
    int max_newton = 60;
    double accept = 1e-8;  ///< residual bound for a reported root
    double dedupe = 1e-6;
};

inline Eigen::MatrixXd jacobian_at(const std::vector<std::vector<CompiledPolynomial>>& J, std::span<const double> x) {
    const auto n = static_cast<Eigen::Index>(J.size());
    Eigen::MatrixXd M(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) M(i, j) = J[i][j](x);
    return M;
}

/// Newton from every grid seed; roots deduplicated and sorted by norm, then
/// lexicographically.
inline std::vector<Equilibrium> find_equilibria(const ClosedLoop& cl, const EquilibriumSearch& opt = {}) {
    if (!(opt.step > 0) || opt.hi < opt.lo) throw Error("bad equilibrium search grid");
    const std::size_t n = cl.n();
    std::vector<std::vector<CompiledPolynomial>> J(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) J[i].emplace_back(cl.f[i].derivative(j));

    const int per_axis = static_cast<int>(std::floor((opt.hi - opt.lo) / opt.step + 1e-9)) + 1;
    std::vector<Equilibrium> found;
    std::vector<int> idx(n, 0);
    std::vector<double> x(n), fx(n);
    Eigen::VectorXd F(n);
    for (bool more = true; more;) {
        for (std::size_t i = 0; i < n; ++i) x[i] = opt.lo + idx[i] * opt.step;
        for (int it = 0; it < opt.max_newton; ++it) {
            cl.eval(x, fx);
            for (std::size_t i = 0; i < n; ++i) F(i) = fx[i];
            const Eigen::VectorXd dx = jacobian_at(J, x).fullPivLu().solve(-F);
            if (!dx.allFinite()) break;
            double dn = 0.0, xn = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] += dx(i);
                dn = std::max(dn, std::abs(dx(i)));
                xn = std::max(xn, std::abs(x[i]));
            }
            if (xn > 1e6 || dn <= opt.newton_tol * (1.0 + xn)) break;
        }
        cl.eval(x, fx);
        double res = 0.0;
        bool finite = true;
        for (std::size_t i = 0; i < n; ++i) {
            res = std::max(res, std::abs(fx[i]));
            finite = finite && std::isfinite(x[i]);
        }
        if (finite && res <= opt.accept) {
            bool dup = false;
            for (const auto& e : found) {
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(e.point[i] - x[i]));
                if (d <= opt.dedupe) {
                    dup = true;
                    break;
                }
            }
            if (!dup) {
                Equilibrium e;
                e.point = x;
                e.residual = res;
                Eigen::EigenSolver<Eigen::MatrixXd> es(jacobian_at(J, x), false);
                e.stable = true;
                for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
                    e.eigenvalues.push_back(es.eigenvalues()(k));
                    e.stable = e.stable && es.eigenvalues()(k).real() < 0;
                }
                std::sort(e.eigenvalues.begin(), e.eigenvalues.end(), [](auto a, auto b) {
                    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
                });
                found.push_back(std::move(e));
            }
        }
        // odometer over the grid
        more = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (++idx[i] < per_axis) {
                more = true;
                break;
            }
            idx[i] = 0;
        }
    }
    auto norm = [](const std::vector<double>& p) {
        double s = 0.0;
        for (double v : p) s += v * v;
        return s;
    };
    std::sort(found.begin(), found.end(), [&](const Equilibrium& a, const Equilibrium& b) {
        const double na = norm(a.point), nb = norm(b.point);
        if (std::abs(na - nb) > 1e-9) return na < nb;
        return a.point < b.point;
    });
    return found;
}

inline std::vector<Equilibrium> find_equilibria(const PolySystem& sys, const Controller* ctrl,
                                                const EquilibriumSearch& opt = {}) {
    return find_equilibria(close_loop(sys, ctrl), opt);
}

/// True when every eigenvalue of the closed-loop Jacobian at x has negative real part.
inline bool linearly_stable_at(const ClosedLoop& cl, const std::vector<double>& x) {
    const std::size_t n = cl.n();
    Eigen::MatrixXd M(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) M(i, j) = cl.f[i].derivative(j).evaluate(x);
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
        if (!(es.eigenvalues()(k).real() < 0)) return false;
    return true;
}

// ============================================================================
// Certificate spot checks
// ============================================================================

struct CertificateCheck {
    double max_H = -kInf;
    std::vector<double> argmax;
    bool violated = false;
    double tolerance = 0.0;
};

/// max over the trajectory of f_cl . grad V + Phi_cl - C.
inline CertificateCheck check_certificate(const Polynomial& V, double C, const ClosedLoop& cl, const Trajectory& tr) {
    if (V.nvars() != cl.n()) throw DimensionError("V and the closed loop live over different variables");
    Polynomial H = cl.phi;
    for (std::size_t i = 0; i < cl.n(); ++i) H += cl.f[i] * V.derivative(i);
    H += -C;
    const CompiledPolynomial cH(H);
    CertificateCheck out;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const double h = cH(tr.at(k));
        if (h > out.max_H) {
            out.max_H = h;
            out.argmax.assign(tr.at(k).begin(), tr.at(k).end());
        }
    }
    out.tolerance = 1e-4 * (1.0 + std::abs(C));
    out.violated = out.max_H > out.tolerance;
    return out;
}

inline CertificateCheck check_certificate(const BoundCertificate& cert, const ClosedLoop& cl, const SimConfig& cfg) {
    if (!cert.feasible) throw Error("certificate is not feasible; nothing to check");
    if (cert.kind != BoundKind::upper) throw Error("trajectory checks apply to upper-bound certificates");
    return check_certificate(cert.V, cert.C, cl, integrate(cl, cfg));
}

} // namespace avgbound
