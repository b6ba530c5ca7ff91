#pragma once

// Block semidefinite programs with free (optionally box-bounded) scalar
// variables, solved by a primal-dual path-following interior-point method
// with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
//
//   minimize    sum_k <C_k, X_k> + d^T y + const
//   subject to  sum_k <A_jk, X_k> + a_j^T y = b_j      j = 1..m
//               X_k PSD (dense blocks) or X_k >= 0 elementwise (diagonal
//               blocks), lo_i <= y_i <= hi_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "avgbound/error.hpp"

namespace avgbound {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ============================================================================
// Problem data
// ============================================================================

/// One nonzero of a symmetric block coefficient matrix; row <= col.
struct BlockEntry {
    int block = 0;
    int row = 0;
    int col = 0;
    double value = 0.0;
    bool operator==(const BlockEntry&) const = default;
};

struct FreeVar {
    double lo = -kInf;
    double hi = kInf;
    bool operator==(const FreeVar&) const = default;
};

struct Equality {
    std::vector<BlockEntry> entries;
    std::vector<std::pair<int, double>> free_coefs;
    double rhs = 0.0;
    bool operator==(const Equality&) const = default;
};

struct SdpProblem {
    /// Block sizes: positive = dense PSD block, negative = diagonal block.
    std::vector<int> blocks;
    std::vector<FreeVar> free_vars;
    std::vector<Equality> equalities;
    std::vector<BlockEntry> cost;
    std::vector<double> free_cost;
    double objective_constant = 0.0;

    bool operator==(const SdpProblem&) const = default;

    std::size_t num_free() const noexcept { return free_vars.size(); }
    std::size_t num_equalities() const noexcept { return equalities.size(); }

    void validate() const {
        auto check_entry = [&](const BlockEntry& e) {
            if (e.block < 0 || e.block >= static_cast<int>(blocks.size()))
                throw DimensionError("block index out of range");
            const int n = std::abs(blocks[e.block]);
            if (e.row < 0 || e.col < e.row || e.col >= n) throw DimensionError("block entry outside upper triangle");
            if (blocks[e.block] < 0 && e.row != e.col) throw DimensionError("off-diagonal entry in diagonal block");
            if (!std::isfinite(e.value)) throw DimensionError("non-finite coefficient");
        };
        for (int b : blocks)
            if (b == 0) throw DimensionError("zero-sized block");
        for (const auto& e : cost) check_entry(e);
        if (free_cost.size() != free_vars.size()) throw DimensionError("free cost length mismatch");
        for (const auto& fv : free_vars)
            if (fv.lo > fv.hi) throw DimensionError("free variable with lo > hi");
        for (const auto& eq : equalities) {
            for (const auto& e : eq.entries) check_entry(e);
            for (const auto& [i, v] : eq.free_coefs)
                if (i < 0 || i >= static_cast<int>(free_vars.size()) || !std::isfinite(v))
                    throw DimensionError("bad free-variable coefficient");
            if (!std::isfinite(eq.rhs)) throw DimensionError("non-finite right-hand side");
        }
    }
};

// ============================================================================
// Solution
// ============================================================================

enum class SdpStatus { optimal, infeasible, unbounded, max_iterations, numerical_failure };

inline const char* to_string(SdpStatus s) {
    switch (s) {
    case SdpStatus::optimal: return "optimal";
    case SdpStatus::infeasible: return "infeasible";
    case SdpStatus::unbounded: return "unbounded";
    case SdpStatus::max_iterations: return "max_iterations";
    case SdpStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

struct SdpResiduals {
    double primal = kInf; ///< ||b - A(X) - B y|| / (1 + ||b||)
    double dual = kInf;   ///< ||C - Z - A^T(lambda)|| / (1 + ||C||)
    double gap = kInf;    ///< max(|pobj - dobj|, <X,Z>) / (1 + |pobj| + |dobj|)
    double complementarity = kInf; ///< |<X,Z>| / (1 + |pobj| + |dobj|)
};

struct SdpSolution {
    SdpStatus status = SdpStatus::numerical_failure;
    std::vector<Eigen::MatrixXd> X; ///< per block; diagonal blocks stored as diagonal matrices
    std::vector<Eigen::MatrixXd> Z;
    std::vector<double> free_values;
    std::vector<double> duals; ///< equality multipliers
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    SdpResiduals residuals;
    int iterations = 0;
    std::string message;

    /// Optimal, or stopped with all residuals within `accept_tol`.
    bool usable(double accept_tol = 1e-6) const {
        if (status == SdpStatus::optimal) return true;
        if (status == SdpStatus::infeasible || status == SdpStatus::unbounded) return false;
        return residuals.primal <= accept_tol && residuals.dual <= accept_tol && residuals.gap <= accept_tol;
    }

    /// Feasible and complementary, but the objective gap may be open: the
    /// dual multipliers diverge when the optimum sits on a face with no
    /// interior. The primal point is still a valid certificate; its objective
    /// is only an upper estimate of the optimum.
    bool primal_usable(double accept_tol = 1e-6) const {
        if (usable(accept_tol)) return true;
        if (status == SdpStatus::infeasible || status == SdpStatus::unbounded) return false;
        return residuals.primal <= accept_tol && residuals.dual <= accept_tol &&
               residuals.complementarity <= accept_tol;
    }

    /// Feasible to accept_tol with the relative gap below gap_tol: the end
    /// game stalled short of full accuracy on a degenerate face.
    bool near_optimal(double accept_tol = 1e-6, double gap_tol = 1e-4) const {
        if (usable(accept_tol)) return true;
        if (status == SdpStatus::infeasible || status == SdpStatus::unbounded) return false;
        return residuals.primal <= accept_tol && residuals.dual <= accept_tol && residuals.gap <= gap_tol;
    }
};

struct SdpOptions {
    double tol = 1e-8;
    int max_iter = 200;
    /// threshold for the normalized infeasibility / unboundedness rays
    double infeasibility_tol = 1e-8;
    double step_fraction = 0.95;
    /// iteration log on stderr
    bool verbose = false;
};

// ============================================================================
// Solver internals
// ============================================================================

namespace detail {

struct SparseSym {
    std::vector<int> row, col;
    std::vector<double> val;
    bool empty() const { return val.empty(); }
    void push(int r, int c, double v) {
        row.push_back(r);
        col.push_back(c);
        val.push_back(v);
    }
    // <A, X> for symmetric X, A stored as upper triangle
    double inner(const Eigen::MatrixXd& X) const {
        double s = 0.0;
        for (std::size_t t = 0; t < val.size(); ++t)
            s += (row[t] == col[t] ? 1.0 : 2.0) * val[t] * X(row[t], col[t]);
        return s;
    }
    void add_to(Eigen::MatrixXd& M, double scale) const {
        for (std::size_t t = 0; t < val.size(); ++t) {
            M(row[t], col[t]) += scale * val[t];
            if (row[t] != col[t]) M(col[t], row[t]) += scale * val[t];
        }
    }
};

/// Internal standard form: dense PSD blocks, one nonnegative LP vector, free vars.
struct StdForm {
    int m = 0;
    std::vector<int> dims;                      // dense block sizes
    std::vector<std::vector<SparseSym>> A;      // A[k][j]
    std::vector<std::vector<int>> active;       // constraints touching block k
    std::vector<Eigen::MatrixXd> C;
    Eigen::MatrixXd Alp;                        // m x nlp
    Eigen::VectorXd clp;
    Eigen::MatrixXd B;                          // m x nfree
    Eigen::VectorXd d;
    Eigen::VectorXd b;
    double constant = 0.0;

    // maps back to the user problem
    std::vector<int> dense_of_block;            // user block -> dense index or -1
    std::vector<int> lp_offset_of_block;        // user diagonal block -> offset in LP vector
    struct FreeMap {
        int kind = 0;     // 0 free, 1 lo + s, 2 hi - s, 3 lo + s with s + t = hi - lo
        int index = -1;   // free column or LP index of s
        double shift = 0; // lo or hi
    };
    std::vector<FreeMap> free_map;
    std::vector<int> kept_free;                 // internal free column -> user index
};

inline StdForm to_standard_form(const SdpProblem& p) {
    StdForm s;
    const int nblocks = static_cast<int>(p.blocks.size());
    s.dense_of_block.assign(nblocks, -1);
    s.lp_offset_of_block.assign(nblocks, -1);
    int nlp = 0;
    for (int k = 0; k < nblocks; ++k) {
        if (p.blocks[k] > 0) {
            s.dense_of_block[k] = static_cast<int>(s.dims.size());
            s.dims.push_back(p.blocks[k]);
        } else {
            s.lp_offset_of_block[k] = nlp;
            nlp += -p.blocks[k];
        }
    }

    // free-variable conversion
    const int nfree_user = static_cast<int>(p.free_vars.size());
    s.free_map.resize(nfree_user);
    int nfree = 0;
    int extra_rows = 0;
    for (int i = 0; i < nfree_user; ++i) {
        const auto& fv = p.free_vars[i];
        auto& fm = s.free_map[i];
        const bool has_lo = std::isfinite(fv.lo);
        const bool has_hi = std::isfinite(fv.hi);
        if (!has_lo && !has_hi) {
            fm.kind = 0;
            fm.index = nfree++;
            s.kept_free.push_back(i);
        } else if (has_lo && !has_hi) {
            fm.kind = 1;
            fm.index = nlp++;
            fm.shift = fv.lo;
        } else if (!has_lo && has_hi) {
            fm.kind = 2;
            fm.index = nlp++;
            fm.shift = fv.hi;
        } else {
            fm.kind = 3;
            fm.index = nlp;
            nlp += 2;
            fm.shift = fv.lo;
            ++extra_rows;
        }
    }

    const int m0 = static_cast<int>(p.equalities.size());
    s.m = m0 + extra_rows;
    const int ndense = static_cast<int>(s.dims.size());
    s.A.assign(ndense, std::vector<SparseSym>(s.m));
    s.active.assign(ndense, {});
    s.C.resize(ndense);
    for (int k = 0; k < ndense; ++k) s.C[k] = Eigen::MatrixXd::Zero(s.dims[k], s.dims[k]);
    s.Alp = Eigen::MatrixXd::Zero(s.m, nlp);
    s.clp = Eigen::VectorXd::Zero(nlp);
    s.B = Eigen::MatrixXd::Zero(s.m, nfree);
    s.d = Eigen::VectorXd::Zero(nfree);
    s.b = Eigen::VectorXd::Zero(s.m);
    s.constant = p.objective_constant;

    auto put_free = [&](int row, int i, double v, Eigen::VectorXd* rhs_shift) {
        const auto& fm = s.free_map[i];
        switch (fm.kind) {
        case 0: s.B(row, fm.index) += v; break;
        case 1:
        case 3:
            s.Alp(row, fm.index) += v;
            if (rhs_shift) (*rhs_shift)(row) -= v * fm.shift;
            break;
        case 2:
            s.Alp(row, fm.index) -= v;
            if (rhs_shift) (*rhs_shift)(row) -= v * fm.shift;
            break;
        }
    };

    for (int j = 0; j < m0; ++j) {
        const auto& eq = p.equalities[j];
        s.b(j) += eq.rhs;
        for (const auto& e : eq.entries) {
            const int dk = s.dense_of_block[e.block];
            if (dk >= 0)
                s.A[dk][j].push(e.row, e.col, e.value);
            else
                s.Alp(j, s.lp_offset_of_block[e.block] + e.row) += e.value;
        }
        for (const auto& [i, v] : eq.free_coefs) put_free(j, i, v, &s.b);
    }
    int row = m0;
    for (int i = 0; i < nfree_user; ++i) {
        const auto& fm = s.free_map[i];
        if (fm.kind != 3) continue;
        s.Alp(row, fm.index) = 1.0;
        s.Alp(row, fm.index + 1) = 1.0;
        s.b(row) = p.free_vars[i].hi - p.free_vars[i].lo;
        ++row;
    }
    for (const auto& e : p.cost) {
        const int dk = s.dense_of_block[e.block];
        if (dk >= 0) {
            s.C[dk](e.row, e.col) += e.value;
            if (e.row != e.col) s.C[dk](e.col, e.row) += e.value;
        } else {
            s.clp(s.lp_offset_of_block[e.block] + e.row) += e.value;
        }
    }
    for (int i = 0; i < nfree_user; ++i) {
        const double v = p.free_cost[i];
        const auto& fm = s.free_map[i];
        switch (fm.kind) {
        case 0: s.d(fm.index) += v; break;
        case 1:
        case 3:
            s.clp(fm.index) += v;
            s.constant += v * fm.shift;
            break;
        case 2:
            s.clp(fm.index) -= v;
            s.constant += v * fm.shift;
            break;
        }
    }
    for (int k = 0; k < ndense; ++k)
        for (int j = 0; j < s.m; ++j)
            if (!s.A[k][j].empty()) s.active[k].push_back(j);
    return s;
}

/// Largest alpha in (0, inf] with X + alpha dX PSD, given chol(X) = L L^T.
inline double max_step_psd(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::MatrixXd& dX) {
    const auto& L = llt.matrixL();
    Eigen::MatrixXd S = L.solve(dX);
    S = L.solve(S.transpose()).transpose();
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    return lmin < 0 ? -1.0 / lmin : kInf;
}

inline double max_step_lp(const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
    double a = kInf;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (dx(i) < 0) a = std::min(a, -x(i) / dx(i));
    return a;
}

struct NtScaling {
    Eigen::MatrixXd G;      // W = G G^T, G^T Z G = G^{-1} X G^{-T} = diag(lambda)
    Eigen::MatrixXd Ginv;
    Eigen::VectorXd lambda;
    Eigen::MatrixXd W;
};

inline bool nt_scaling(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, NtScaling& out) {
    Eigen::LLT<Eigen::MatrixXd> lx(X), lz(Z);
    if (lx.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
    const Eigen::MatrixXd L = lx.matrixL();
    const Eigen::MatrixXd R = lz.matrixL();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R.transpose() * L, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.lambda = svd.singularValues();
    if (out.lambda.minCoeff() <= 0) return false;
    const Eigen::VectorXd isq = out.lambda.cwiseSqrt().cwiseInverse();
    out.G = L * svd.matrixV() * isq.asDiagonal();
    // G^{-1} = Lambda^{1/2} V^T L^{-1}
    Eigen::MatrixXd Linv_t = lx.matrixL().solve(Eigen::MatrixXd::Identity(X.rows(), X.cols()));
    out.Ginv = out.lambda.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() * Linv_t;
    out.W = out.G * out.G.transpose();
    return true;
}

} // namespace detail

// ============================================================================
// solve
// ============================================================================

inline SdpSolution solve(const SdpProblem& problem, const SdpOptions& opts = {}) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    problem.validate();
    detail::StdForm s = detail::to_standard_form(problem);
    const int m = s.m;
    const int ndense = static_cast<int>(s.dims.size());
    const int nlp = static_cast<int>(s.clp.size());
    const int nfree = static_cast<int>(s.d.size());

    SdpSolution sol;

    // free columns that never appear: fixed at 0 unless their cost makes the problem unbounded
    std::vector<int> free_cols;
    for (int i = 0; i < nfree; ++i) {
        if (s.B.col(i).lpNorm<Eigen::Infinity>() > 0) {
            free_cols.push_back(i);
        } else if (s.d(i) != 0.0) {
            sol.status = SdpStatus::unbounded;
            sol.message = "free variable with nonzero cost appears in no constraint";
            return sol;
        }
    }
    const int nf = static_cast<int>(free_cols.size());
    MatrixXd B(m, nf);
    VectorXd d(nf);
    for (int c = 0; c < nf; ++c) {
        B.col(c) = s.B.col(free_cols[c]);
        d(c) = s.d(free_cols[c]);
    }

    // Orthogonal split of the constraint space by the free columns. Newton
    // systems are solved on the complement of range(B), which keeps the
    // badly scaled cone part away from the free columns.
    Eigen::ColPivHouseholderQR<MatrixXd> qrB(m, nf);
    int rB = 0;
    MatrixXd Q1, Q2, R11;
    if (nf) {
        qrB.setThreshold(1e-12);
        qrB.compute(B);
        rB = static_cast<int>(qrB.rank());
        const MatrixXd Q = qrB.householderQ() * MatrixXd::Identity(m, m);
        Q1 = Q.leftCols(rB);
        Q2 = Q.rightCols(m - rB);
        R11 = qrB.matrixR().topLeftCorner(rB, rB).triangularView<Eigen::Upper>();
        if (rB < nf) {
            // null directions of B: P [-R11^-1 R12; I]
            const MatrixXd R12 = qrB.matrixR().topRightCorner(rB, nf - rB);
            MatrixXd N = MatrixXd::Zero(nf, nf - rB);
            N.topRows(rB) = -R11.triangularView<Eigen::Upper>().solve(R12);
            N.bottomRows(nf - rB).setIdentity();
            const MatrixXd Nfull = qrB.colsPermutation() * N;
            for (int c = 0; c < Nfull.cols(); ++c) {
                const VectorXd v = Nfull.col(c).normalized();
                if (std::abs(d.dot(v)) > 1e-9 * (1.0 + d.norm())) {
                    sol.status = SdpStatus::unbounded;
                    sol.message = "free variables move along a constraint-free direction that lowers the objective";
                    return sol;
                }
            }
        }
    } else {
        Q2 = MatrixXd::Identity(m, m);
    }

    // ---- operators ---------------------------------------------------------
    auto applyA = [&](const std::vector<MatrixXd>& X, const VectorXd& x, const VectorXd& xf) {
        VectorXd r = VectorXd::Zero(m);
        for (int k = 0; k < ndense; ++k)
            for (int j : s.active[k]) r(j) += s.A[k][j].inner(X[k]);
        if (nlp) r += s.Alp * x;
        if (nf) r += B * xf;
        return r;
    };
    auto applyAt = [&](const VectorXd& y, std::vector<MatrixXd>& Zk, VectorXd& zlp) {
        Zk.resize(ndense);
        for (int k = 0; k < ndense; ++k) {
            Zk[k] = MatrixXd::Zero(s.dims[k], s.dims[k]);
            for (int j : s.active[k])
                if (y(j) != 0.0) s.A[k][j].add_to(Zk[k], y(j));
        }
        zlp = nlp ? VectorXd(s.Alp.transpose() * y) : VectorXd();
    };

    // ---- norms for relative measures ----------------------------------------
    const double bnorm = s.b.norm();
    double cnorm2 = s.clp.squaredNorm() + d.squaredNorm();
    for (int k = 0; k < ndense; ++k) cnorm2 += s.C[k].squaredNorm();
    const double cnorm = std::sqrt(cnorm2);

    // ---- initial point ---------------------------------------------------------
    std::vector<MatrixXd> X(ndense), Z(ndense);
    VectorXd x = VectorXd::Ones(nlp), z = VectorXd::Ones(nlp);
    VectorXd xf = VectorXd::Zero(nf), y = VectorXd::Zero(m);
    {
        for (int k = 0; k < ndense; ++k) {
            const int n = s.dims[k];
            double xi = std::max(10.0, std::sqrt(static_cast<double>(n)));
            double eta = std::max({10.0, std::sqrt(static_cast<double>(n)), s.C[k].norm()});
            for (int j : s.active[k]) {
                MatrixXd Aj = MatrixXd::Zero(n, n);
                s.A[k][j].add_to(Aj, 1.0);
                const double an = Aj.norm();
                xi = std::max(xi, n * (1.0 + std::abs(s.b(j))) / (1.0 + an));
                eta = std::max(eta, an);
            }
            X[k] = xi * MatrixXd::Identity(n, n);
            Z[k] = eta * MatrixXd::Identity(n, n);
        }
        if (nlp) {
            double xi = std::max(10.0, std::sqrt(static_cast<double>(nlp)));
            double eta = std::max(10.0, s.clp.norm());
            for (int j = 0; j < m; ++j) {
                const double an = s.Alp.row(j).norm();
                if (an == 0) continue;
                xi = std::max(xi, (1.0 + std::abs(s.b(j))) / (1.0 + an));
                eta = std::max(eta, an);
            }
            x.setConstant(xi);
            z.setConstant(eta);
        }
    }
    double nu = nlp;
    for (int n : s.dims) nu += n;
    if (nu == 0) nu = 1;

    // ---- helpers -------------------------------------------------------------
    std::vector<MatrixXd> Rd(ndense);
    VectorXd rdlp, rdf, rp;
    double pobj = 0, dobj = 0, mu = 0;
    auto compute_residuals = [&]() {
        rp = s.b - applyA(X, x, xf);
        std::vector<MatrixXd> Aty;
        VectorXd atylp;
        applyAt(y, Aty, atylp);
        for (int k = 0; k < ndense; ++k) Rd[k] = s.C[k] - Z[k] - Aty[k];
        rdlp = nlp ? VectorXd(s.clp - z - atylp) : VectorXd();
        rdf = nf ? VectorXd(d - B.transpose() * y) : VectorXd();
        pobj = s.constant + (nlp ? s.clp.dot(x) : 0.0) + (nf ? d.dot(xf) : 0.0);
        double xz = nlp ? x.dot(z) : 0.0;
        for (int k = 0; k < ndense; ++k) {
            pobj += (s.C[k].array() * X[k].array()).sum();
            xz += (X[k].array() * Z[k].array()).sum();
        }
        dobj = s.constant + s.b.dot(y);
        mu = xz / nu;
        double rd2 = rdlp.squaredNorm() + rdf.squaredNorm();
        for (int k = 0; k < ndense; ++k) rd2 += Rd[k].squaredNorm();
        sol.residuals.primal = rp.norm() / (1.0 + bnorm);
        sol.residuals.dual = std::sqrt(rd2) / (1.0 + cnorm);
        sol.residuals.gap = std::max(std::abs(pobj - dobj), std::abs(xz)) / (1.0 + std::abs(pobj) + std::abs(dobj));
        sol.residuals.complementarity = std::abs(xz) / (1.0 + std::abs(pobj) + std::abs(dobj));
    };

    auto write_solution = [&](SdpStatus st, const std::string& msg) {
        sol.status = st;
        sol.message = msg;
        sol.primal_objective = pobj;
        sol.dual_objective = dobj;
        sol.X.assign(problem.blocks.size(), MatrixXd());
        sol.Z.assign(problem.blocks.size(), MatrixXd());
        for (std::size_t k = 0; k < problem.blocks.size(); ++k) {
            const int dk = s.dense_of_block[k];
            if (dk >= 0) {
                sol.X[k] = X[dk];
                sol.Z[k] = Z[dk];
            } else {
                const int n = -problem.blocks[k];
                const int off = s.lp_offset_of_block[k];
                sol.X[k] = x.segment(off, n).asDiagonal();
                sol.Z[k] = z.segment(off, n).asDiagonal();
            }
        }
        VectorXd full_free = VectorXd::Zero(nfree);
        for (int c = 0; c < nf; ++c) full_free(free_cols[c]) = xf(c);
        sol.free_values.assign(problem.free_vars.size(), 0.0);
        for (std::size_t i = 0; i < problem.free_vars.size(); ++i) {
            const auto& fm = s.free_map[i];
            switch (fm.kind) {
            case 0: sol.free_values[i] = full_free(fm.index); break;
            case 1:
            case 3: sol.free_values[i] = fm.shift + x(fm.index); break;
            case 2: sol.free_values[i] = fm.shift - x(fm.index); break;
            }
        }
        sol.duals.assign(y.data(), y.data() + std::min<int>(m, static_cast<int>(problem.equalities.size())));
        return sol;
    };

    std::vector<detail::NtScaling> nt(ndense);
    MatrixXd K(m, m);
    double best_merit = kInf;
    int stall = 0;

    struct Snapshot {
        std::vector<MatrixXd> X, Z;
        VectorXd x, z, xf, y;
        double merit = kInf;
        int iter = 0;
    } best;
    // Failure exits hand back the best iterate seen; usable() judges it.
    auto fail = [&](SdpStatus st, const std::string& msg) {
        if (best.merit < kInf) {
            X = best.X;
            Z = best.Z;
            x = best.x;
            z = best.z;
            xf = best.xf;
            y = best.y;
            compute_residuals();
            sol.iterations = best.iter;
        }
        return write_solution(st, msg);
    };

    for (int iter = 0; iter <= opts.max_iter; ++iter) {
        sol.iterations = iter;
        compute_residuals();
        const auto& res = sol.residuals;
        if (opts.verbose)
            std::fprintf(stderr, "%3d  pobj %+.9e  dobj %+.9e  pinf %.2e  dinf %.2e  gap %.2e  mu %.2e\n", iter, pobj,
                         dobj, res.primal, res.dual, res.gap, mu);
        if (res.primal <= opts.tol && res.dual <= opts.tol && res.gap <= opts.tol)
            return write_solution(SdpStatus::optimal, "converged");

        // Farkas rays read off the diverging iterates.
        // Infeasible: y/(b^T y) nearly satisfies A^T y <= 0, B^T y = 0.
        // Unbounded: X/(-<C,X>) nearly satisfies A(X) = 0.
        {
            const double by = s.b.dot(y);
            if (by > 0 && res.primal > opts.tol) {
                double r2 = (nf ? (d - rdf).squaredNorm() : 0.0) + (nlp ? (s.clp - rdlp).squaredNorm() : 0.0);
                for (int k = 0; k < ndense; ++k) r2 += (s.C[k] - Rd[k]).squaredNorm();
                if (std::sqrt(r2) * std::max(1.0, bnorm) / by <= opts.infeasibility_tol)
                    return write_solution(SdpStatus::infeasible, "primal infeasibility certificate");
            }
            const double cx = pobj - s.constant;
            if (cx < 0 && res.dual > opts.tol) {
                if ((s.b - rp).norm() * std::max(1.0, cnorm) / (-cx) <= opts.infeasibility_tol)
                    return write_solution(SdpStatus::unbounded, "dual infeasibility certificate");
            }
        }

        if (iter == opts.max_iter) {
            const double merit = std::max({res.primal, res.dual, res.gap});
            if (merit < best.merit) best = Snapshot{X, Z, x, z, xf, y, merit, iter};
            break;
        }

        const double merit = std::max({res.primal, res.dual, res.gap});
        if (merit < best.merit) best = Snapshot{X, Z, x, z, xf, y, merit, iter};
        else if (best.merit < 1e-4 && merit > 100.0 * best.merit)
            return fail(SdpStatus::numerical_failure, "residuals growing");
        if (merit < 0.9 * best_merit) {
            best_merit = merit;
            stall = 0;
        } else if (++stall > 30) {
            return fail(SdpStatus::numerical_failure, "no progress");
        }

        // ---- scaling and Schur complement ----------------------------------
        bool ok = true;
        for (int k = 0; k < ndense && ok; ++k) ok = detail::nt_scaling(X[k], Z[k], nt[k]);
        if (!ok || (nlp && (x.minCoeff() <= 0 || z.minCoeff() <= 0)))
            return fail(SdpStatus::numerical_failure, "iterate left the cone");
        const VectorXd wlp = nlp ? VectorXd(x.cwiseQuotient(z)) : VectorXd();

        K.setZero();
        for (int k = 0; k < ndense; ++k) {
            const MatrixXd& W = nt[k].W;
            const int n = s.dims[k];
            MatrixXd T(n, n);
            for (int j : s.active[k]) {
                const auto& Aj = s.A[k][j];
                T.setZero();
                for (std::size_t t = 0; t < Aj.val.size(); ++t) {
                    const int r = Aj.row[t], c = Aj.col[t];
                    const double v = Aj.val[t];
                    if (r == c)
                        T.noalias() += v * W.col(r) * W.col(r).transpose();
                    else
                        T.noalias() += v * (W.col(r) * W.col(c).transpose() + W.col(c) * W.col(r).transpose());
                }
                for (int i : s.active[k]) K(i, j) += s.A[k][i].inner(T);
            }
        }
        if (nlp) K.topLeftCorner(m, m).noalias() += s.Alp * wlp.asDiagonal() * s.Alp.transpose();
        K = 0.5 * (K + K.transpose()).eval();
        MatrixXd Kred = Q2.transpose() * K * Q2;
        const double kscale = Kred.rows() ? std::max(1.0, Kred.diagonal().cwiseAbs().maxCoeff()) : 1.0;
        Kred.diagonal().array() += 1e-14 * kscale;
        Eigen::LDLT<MatrixXd> ldlt;
        if (Kred.rows() > 0) ldlt.compute(Kred);

        // [K B; B^T 0] [dy; dxf] = [h; r], null-space method
        auto kkt = [&](const VectorXd& h, const VectorXd& r, VectorXd& dy_out, VectorXd& dxf_out) {
            VectorXd dy0 = VectorXd::Zero(m);
            if (nf) {
                const VectorXd rp_perm = qrB.colsPermutation().transpose() * r;
                const VectorXd t = R11.transpose().triangularView<Eigen::Lower>().solve(rp_perm.head(rB));
                dy0 = Q1 * t;
            }
            dy_out = dy0;
            if (Q2.cols() > 0) dy_out += Q2 * ldlt.solve(Q2.transpose() * (h - K * dy0));
            dxf_out.setZero(nf);
            if (nf) {
                VectorXd z = VectorXd::Zero(nf);
                z.head(rB) = R11.triangularView<Eigen::Upper>().solve(Q1.transpose() * (h - K * dy_out));
                dxf_out = qrB.colsPermutation() * z;
            }
        };

        // Solve for a direction given complementarity right-hand sides.
        std::vector<MatrixXd> dX(ndense), dZ(ndense);
        VectorXd dx, dz, dy, dxf;
        auto direction = [&](const std::vector<MatrixXd>& Rc, const VectorXd& rclp) {
            VectorXd h = rp;
            for (int k = 0; k < ndense; ++k) {
                const MatrixXd& W = nt[k].W;
                const MatrixXd Q = Rc[k] - W * Rd[k] * W;
                for (int j : s.active[k]) h(j) -= s.A[k][j].inner(Q);
            }
            if (nlp) h -= s.Alp * (rclp - wlp.cwiseProduct(rdlp));
            kkt(h, rdf, dy, dxf);
            std::vector<MatrixXd> Aty;
            VectorXd atylp;
            auto assemble = [&]() {
                applyAt(dy, Aty, atylp);
                for (int k = 0; k < ndense; ++k) {
                    dZ[k] = Rd[k] - Aty[k];
                    const MatrixXd& W = nt[k].W;
                    dX[k] = Rc[k] - W * dZ[k] * W;
                    dX[k] = 0.5 * (dX[k] + dX[k].transpose()).eval();
                }
                if (nlp) {
                    dz = rdlp - atylp;
                    dx = rclp - wlp.cwiseProduct(dz);
                }
            };
            assemble();
            // refine against the primal equation actually met by the assembled step
            double last = kInf;
            for (int pass = 0; pass < 8; ++pass) {
                const VectorXd ep = rp - applyA(dX, dx, dxf);
                const double en = ep.norm();
                if (en <= 1e-14 * (1.0 + rp.norm() + bnorm) || en > 0.5 * last) break;
                last = en;
                VectorXd ey, exf;
                kkt(ep, VectorXd::Zero(nf), ey, exf);
                dy += ey;
                dxf += exf;
                assemble();
            }
        };
        auto step_lengths = [&](double frac, double& ap, double& ad) {
            ap = 1.0 / frac;
            ad = 1.0 / frac;
            for (int k = 0; k < ndense; ++k) {
                Eigen::LLT<MatrixXd> lx(X[k]), lz(Z[k]);
                ap = std::min(ap, detail::max_step_psd(lx, dX[k]));
                ad = std::min(ad, detail::max_step_psd(lz, dZ[k]));
            }
            if (nlp) {
                ap = std::min(ap, detail::max_step_lp(x, dx));
                ad = std::min(ad, detail::max_step_lp(z, dz));
            }
            ap = std::min(1.0, frac * ap);
            ad = std::min(1.0, frac * ad);
        };

        // predictor
        std::vector<MatrixXd> Rc(ndense);
        for (int k = 0; k < ndense; ++k) Rc[k] = -X[k];
        VectorXd rclp = nlp ? VectorXd(-x) : VectorXd();
        direction(Rc, rclp);
        double ap, ad;
        step_lengths(1.0, ap, ad);
        double xz_aff = nlp ? (x + ap * dx).dot(z + ad * dz) : 0.0;
        for (int k = 0; k < ndense; ++k)
            xz_aff += ((X[k] + ap * dX[k]).array() * (Z[k] + ad * dZ[k]).array()).sum();
        const double mu_aff = std::max(0.0, xz_aff / nu);
        double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
        sigma = std::clamp(sigma, 0.0, 1.0);
        // keep centering when the infeasibilities lag far behind the gap
        if (std::max(res.primal, res.dual) > 1e3 * res.gap) sigma = std::max(sigma, 0.1);

        // corrector (Mehrotra second-order term in the NT-scaled space)
        for (int k = 0; k < ndense; ++k) {
            const auto& S = nt[k];
            const MatrixXd dXt = S.Ginv * dX[k] * S.Ginv.transpose();
            const MatrixXd dZt = S.G.transpose() * dZ[k] * S.G;
            MatrixXd prod = dXt * dZt;
            prod = 0.5 * (prod + prod.transpose()).eval();
            const int n = s.dims[k];
            MatrixXd inner(n, n);
            for (int a = 0; a < n; ++a)
                for (int c = 0; c < n; ++c) {
                    const double denom = S.lambda(a) + S.lambda(c);
                    inner(a, c) = -2.0 * prod(a, c) / denom;
                }
            for (int a = 0; a < n; ++a) inner(a, a) += sigma * mu / S.lambda(a) - S.lambda(a);
            Rc[k] = S.G * inner * S.G.transpose();
            Rc[k] = 0.5 * (Rc[k] + Rc[k].transpose()).eval();
        }
        if (nlp) {
            rclp = VectorXd(nlp);
            for (int i = 0; i < nlp; ++i) rclp(i) = (sigma * mu - dx(i) * dz(i)) / z(i) - x(i);
        }
        direction(Rc, rclp);
        const double frac = std::max(opts.step_fraction, 1.0 - 10.0 * std::min(mu_aff / std::max(mu, 1e-300), 1.0) * 0.05);
        step_lengths(std::min(frac, 0.99), ap, ad);

        for (int k = 0; k < ndense; ++k) {
            X[k] += ap * dX[k];
            Z[k] += ad * dZ[k];
            X[k] = 0.5 * (X[k] + X[k].transpose()).eval();
            Z[k] = 0.5 * (Z[k] + Z[k].transpose()).eval();
        }
        if (nlp) {
            x += ap * dx;
            z += ad * dz;
        }
        if (nf) xf += ap * dxf;
        y += ad * dy;
    }
    return fail(SdpStatus::max_iterations, "iteration limit reached");
}

} // namespace avgbound
