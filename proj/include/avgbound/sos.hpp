#pragma once

// Sum-of-squares programs over polynomials whose coefficients are affine in a
// set of decision variables, compiled to block SDPs via Gram matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "avgbound/error.hpp"
#include "avgbound/polynomial.hpp"
#include "avgbound/sdp.hpp"

namespace avgbound {

// ============================================================================
// LinearExpr
// ============================================================================

/// constant + sum coef_k * decision_k
class LinearExpr {
  public:
    LinearExpr() = default;
    LinearExpr(double c) : constant_(c) {} // NOLINT(google-explicit-constructor)

    static LinearExpr decision(int id, double coef = 1.0) {
        LinearExpr e;
        e.add(id, coef);
        return e;
    }

    double constant() const noexcept { return constant_; }
    const std::map<int, double>& coefs() const noexcept { return coefs_; }
    bool is_constant() const noexcept { return coefs_.empty(); }
    bool is_zero() const noexcept { return coefs_.empty() && constant_ == 0.0; }

    void add(int id, double c) {
        if (c == 0.0) return;
        auto [it, inserted] = coefs_.try_emplace(id, c);
        if (!inserted) it->second += c;
        if (it->second == 0.0) coefs_.erase(it);
    }

    LinearExpr& operator+=(const LinearExpr& o) {
        constant_ += o.constant_;
        for (const auto& [id, c] : o.coefs_) add(id, c);
        return *this;
    }
    LinearExpr& operator-=(const LinearExpr& o) {
        constant_ -= o.constant_;
        for (const auto& [id, c] : o.coefs_) add(id, -c);
        return *this;
    }
    LinearExpr& operator*=(double s) {
        if (s == 0.0) {
            *this = LinearExpr();
            return *this;
        }
        constant_ *= s;
        for (auto& [id, c] : coefs_) c *= s;
        return *this;
    }
    friend LinearExpr operator+(LinearExpr a, const LinearExpr& b) { return a += b; }
    friend LinearExpr operator-(LinearExpr a, const LinearExpr& b) { return a -= b; }
    friend LinearExpr operator*(LinearExpr a, double s) { return a *= s; }
    friend LinearExpr operator*(double s, LinearExpr a) { return a *= s; }
    LinearExpr operator-() const { return LinearExpr(*this) *= -1.0; }

    double evaluate(const std::vector<double>& values) const {
        double v = constant_;
        for (const auto& [id, c] : coefs_) v += c * values.at(id);
        return v;
    }

    int max_id() const { return coefs_.empty() ? -1 : coefs_.rbegin()->first; }

  private:
    double constant_ = 0.0;
    std::map<int, double> coefs_;
};

// ============================================================================
// DecisionPoly
// ============================================================================

/// Polynomial in x whose coefficients are LinearExpr in the decisions.
class DecisionPoly {
  public:
    using TermMap = std::map<Monomial, LinearExpr, GradedLex>;

    DecisionPoly() = default;
    explicit DecisionPoly(std::size_t nvars) : nvars_(nvars) {}
    DecisionPoly(const Polynomial& p) : nvars_(p.nvars()) { // NOLINT(google-explicit-constructor)
        for (const auto& [m, c] : p.terms()) terms_.emplace(m, LinearExpr(c));
    }

    std::size_t nvars() const noexcept { return nvars_; }
    const TermMap& terms() const noexcept { return terms_; }

    bool is_numeric() const {
        return std::all_of(terms_.begin(), terms_.end(), [](const auto& kv) { return kv.second.is_constant(); });
    }

    int degree() const {
        int d = -1;
        for (const auto& [m, e] : terms_)
            if (!e.is_zero()) d = std::max(d, m.degree());
        return d;
    }

    void add_term(const Monomial& m, const LinearExpr& e) {
        if (m.nvars() != nvars_) throw DimensionError("monomial/decision polynomial nvars mismatch");
        if (e.is_zero()) return;
        auto [it, inserted] = terms_.try_emplace(m, e);
        if (!inserted) it->second += e;
        if (it->second.is_zero()) terms_.erase(it);
    }

    DecisionPoly& operator+=(const DecisionPoly& o) {
        check_same(o);
        for (const auto& [m, e] : o.terms_) add_term(m, e);
        return *this;
    }
    DecisionPoly& operator-=(const DecisionPoly& o) {
        check_same(o);
        for (const auto& [m, e] : o.terms_) add_term(m, -e);
        return *this;
    }
    DecisionPoly& operator*=(double s) {
        if (s == 0.0) {
            terms_.clear();
            return *this;
        }
        for (auto& [m, e] : terms_) e *= s;
        return *this;
    }
    friend DecisionPoly operator+(DecisionPoly a, const DecisionPoly& b) { return a += b; }
    friend DecisionPoly operator-(DecisionPoly a, const DecisionPoly& b) { return a -= b; }
    friend DecisionPoly operator*(DecisionPoly a, double s) { return a *= s; }
    friend DecisionPoly operator*(double s, DecisionPoly a) { return a *= s; }
    DecisionPoly operator-() const { return DecisionPoly(*this) *= -1.0; }

    /// Product; at least one factor must be free of decisions.
    friend DecisionPoly operator*(const DecisionPoly& a, const DecisionPoly& b) {
        a.check_same(b);
        const bool an = a.is_numeric();
        const bool bn = b.is_numeric();
        if (!an && !bn) throw CompileError("product of two decision polynomials is not affine in the decisions");
        const DecisionPoly& num = an ? a : b;
        const DecisionPoly& dec = an ? b : a;
        DecisionPoly r(a.nvars_);
        for (const auto& [mn, en] : num.terms_)
            for (const auto& [md, ed] : dec.terms_) r.add_term(mn * md, ed * en.constant());
        return r;
    }

    /// Coefficient map with every decision fixed.
    Polynomial evaluate(const std::vector<double>& values) const {
        Polynomial p(nvars_);
        for (const auto& [m, e] : terms_) p.add_term(m, e.evaluate(values));
        return p;
    }

    /// Numeric part (requires is_numeric()).
    Polynomial to_polynomial() const {
        if (!is_numeric()) throw CompileError("decision polynomial still has unknown coefficients");
        return evaluate({});
    }

  private:
    void check_same(const DecisionPoly& o) const {
        if (o.nvars_ != nvars_) throw DimensionError("decision polynomial nvars mismatch");
    }

    std::size_t nvars_ = 0;
    TermMap terms_;
};

inline DecisionPoly dot(const std::vector<DecisionPoly>& a, const PolyVec& b) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("dot: dimension mismatch");
    DecisionPoly r(a.front().nvars());
    for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * DecisionPoly(b[i]);
    return r;
}

inline std::vector<DecisionPoly> gradient(const DecisionPoly& p) {
    std::vector<DecisionPoly> g(p.nvars(), DecisionPoly(p.nvars()));
    for (const auto& [m, e] : p.terms())
        for (std::size_t i = 0; i < p.nvars(); ++i)
            if (m[i] > 0) g[i].add_term(m.lowered(i), e * static_cast<double>(m[i]));
    return g;
}

// ============================================================================
// Gram parameterization
// ============================================================================

struct GramBlock {
    std::vector<Monomial> basis;
    int block = -1; ///< SDP block index once compiled
    std::size_t size() const noexcept { return basis.size(); }
};

/// Gram basis for an SOS polynomial of the given even degree.
inline GramBlock gram_parameterize(std::size_t nvars, int degree) {
    if (degree < 0 || degree % 2 != 0) throw CompileError("Gram parameterization needs an even degree, got " + std::to_string(degree));
    GramBlock g;
    g.basis = monomial_basis(nvars, degree / 2);
    return g;
}

namespace detail {

/// Pairs (r <= c) of basis indices grouped by the product monomial.
inline std::map<Monomial, std::vector<std::pair<int, int>>, GradedLex> gram_products(const std::vector<Monomial>& basis) {
    std::map<Monomial, std::vector<std::pair<int, int>>, GradedLex> out;
    const int n = static_cast<int>(basis.size());
    for (int r = 0; r < n; ++r)
        for (int c = r; c < n; ++c) out[basis[r] * basis[c]].push_back({r, c});
    return out;
}

/// Drops basis monomials whose Gram row must vanish: z_r can go when the body
/// coefficient of z_r^2 is identically zero and z_r^2 has no other
/// factorization z_a z_b (a != b) over the remaining basis. Any feasible Gram
/// matrix has Q_rr = 0 there, hence a zero row, so the optimum is unchanged
/// while the reduced block regains an interior.
inline std::vector<Monomial> trim_gram_basis(std::vector<Monomial> basis,
                                             const std::map<Monomial, LinearExpr, GradedLex>& body) {
    auto identically_zero = [&](const Monomial& m) {
        auto it = body.find(m);
        return it == body.end() || it->second.is_zero();
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t r = 0; r < basis.size(); ++r) {
            const Monomial sq = basis[r] * basis[r];
            if (!identically_zero(sq)) continue;
            bool other = false;
            for (std::size_t a = 0; a < basis.size() && !other; ++a)
                for (std::size_t b = a + 1; b < basis.size() && !other; ++b)
                    if (a != r && b != r && basis[a] * basis[b] == sq) other = true;
            if (other) continue;
            basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(r));
            changed = true;
            break;
        }
    }
    return basis;
}

} // namespace detail

// ============================================================================
// SosProgram
// ============================================================================

enum class MultiplierSign { sos, free };

class SosProgram {
  public:
    enum class Kind { sos, zero };

    struct Constraint {
        Kind kind;
        DecisionPoly body;
        std::string name;
        int half_degree = -1; ///< Gram basis degree; -1 = derive from body degree
    };

    struct Decision {
        enum class Type { scalar, gram } type = Type::scalar;
        std::string name;
        int index = -1;     ///< scalar: position among scalars; gram: program-level Gram block
        int row = 0, col = 0;
        double lo = -kInf, hi = kInf;
    };

    struct NamedPoly {
        std::string name;
        DecisionPoly poly;
        int gram = -1; ///< program-level Gram block when the polynomial is SOS by construction
    };

    explicit SosProgram(std::size_t nvars) : nvars_(nvars) {}

    std::size_t nvars() const noexcept { return nvars_; }
    std::size_t num_decisions() const noexcept { return decisions_.size(); }
    const std::vector<Decision>& decisions() const noexcept { return decisions_; }
    const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
    const std::vector<NamedPoly>& named_polys() const noexcept { return named_; }
    const std::vector<GramBlock>& gram_blocks() const noexcept { return grams_; }
    const LinearExpr& objective() const noexcept { return objective_; }
    const std::vector<std::pair<std::string, int>>& named_scalars() const noexcept { return scalars_; }

    /// New scalar decision, optionally box-bounded.
    LinearExpr add_scalar(const std::string& name, double lo = -kInf, double hi = kInf) {
        if (lo > hi) throw CompileError("scalar '" + name + "' has lo > hi");
        const int id = static_cast<int>(decisions_.size());
        Decision d;
        d.name = name;
        d.index = num_scalars_++;
        d.lo = lo;
        d.hi = hi;
        decisions_.push_back(d);
        scalars_.push_back({name, id});
        return LinearExpr::decision(id);
    }

    /// Polynomial with one fresh scalar coefficient per basis monomial, each boxed in [lo, hi].
    DecisionPoly add_poly(const std::string& name, const std::vector<Monomial>& basis, double lo = -kInf,
                          double hi = kInf) {
        DecisionPoly p(nvars_);
        for (const auto& m : basis) {
            if (m.nvars() != nvars_) throw DimensionError("basis monomial has wrong nvars");
            const int id = static_cast<int>(decisions_.size());
            Decision d;
            d.name = name + "[" + monomial_to_string(m, default_var_names(nvars_)) + "]";
            d.index = num_scalars_++;
            d.lo = lo;
            d.hi = hi;
            decisions_.push_back(d);
            p.add_term(m, LinearExpr::decision(id));
        }
        named_.push_back({name, p, -1});
        return p;
    }

    /// SOS polynomial z^T Q z of the given even degree with its own Gram block.
    DecisionPoly add_sos_poly(const std::string& name, int degree) {
        GramBlock g = gram_parameterize(nvars_, degree);
        const int gi = static_cast<int>(grams_.size());
        const int n = static_cast<int>(g.size());
        DecisionPoly p(nvars_);
        for (int r = 0; r < n; ++r)
            for (int c = r; c < n; ++c) {
                const int id = static_cast<int>(decisions_.size());
                Decision d;
                d.type = Decision::Type::gram;
                d.name = name + "{" + std::to_string(r) + "," + std::to_string(c) + "}";
                d.index = gi;
                d.row = r;
                d.col = c;
                decisions_.push_back(d);
                p.add_term(g.basis[r] * g.basis[c], LinearExpr::decision(id, r == c ? 1.0 : 2.0));
            }
        grams_.push_back(std::move(g));
        named_.push_back({name, p, gi});
        return p;
    }

    void add_sos(const DecisionPoly& body, const std::string& name = "", int half_degree = -1) {
        check_body(body);
        constraints_.push_back({Kind::sos, body, name.empty() ? "sos" + std::to_string(constraints_.size()) : name,
                                half_degree});
    }

    void add_zero(const DecisionPoly& body, const std::string& name = "") {
        check_body(body);
        constraints_.push_back({Kind::zero, body, name.empty() ? "zero" + std::to_string(constraints_.size()) : name, -1});
    }

    void minimize(const LinearExpr& obj) {
        if (obj.max_id() >= static_cast<int>(decisions_.size())) throw CompileError("objective references an unregistered decision");
        objective_ = obj;
    }

    int num_scalars() const noexcept { return num_scalars_; }

  private:
    void check_body(const DecisionPoly& body) const {
        if (body.nvars() != nvars_) throw DimensionError("constraint body has wrong nvars");
    }

    std::size_t nvars_;
    std::vector<Decision> decisions_;
    std::vector<Constraint> constraints_;
    std::vector<NamedPoly> named_;
    std::vector<GramBlock> grams_;
    std::vector<std::pair<std::string, int>> scalars_;
    LinearExpr objective_;
    int num_scalars_ = 0;
};

// ============================================================================
// compile
// ============================================================================

struct VariableMap {
    std::vector<int> gram_block;            ///< program Gram block -> SDP block
    std::vector<int> constraint_block;      ///< SOS constraint -> SDP block (-1 for zero constraints)
    std::vector<GramBlock> constraint_gram; ///< basis per constraint (empty for zero constraints)
};

struct CompiledSos {
    SdpProblem sdp;
    VariableMap map;
};

struct CompileOptions {
    /// remove Gram monomials whose rows are forced to zero (exact reduction)
    bool trim_basis = true;
};

inline CompiledSos compile(const SosProgram& prog, const CompileOptions& copts = {}) {
    CompiledSos out;
    SdpProblem& sdp = out.sdp;
    const int ndec = static_cast<int>(prog.num_decisions());
    const auto& decs = prog.decisions();

    for (const auto& g : prog.gram_blocks()) {
        out.map.gram_block.push_back(static_cast<int>(sdp.blocks.size()));
        sdp.blocks.push_back(static_cast<int>(g.size()));
    }
    sdp.free_vars.resize(prog.num_scalars());
    for (const auto& d : decs)
        if (d.type == SosProgram::Decision::Type::scalar) sdp.free_vars[d.index] = {d.lo, d.hi};
    sdp.free_cost.assign(prog.num_scalars(), 0.0);

    // adds coefficient * decision to an equality
    auto put = [&](Equality& eq, int id, double coef) {
        if (id < 0 || id >= ndec) throw CompileError("constraint references an unregistered decision");
        const auto& d = decs[id];
        if (d.type == SosProgram::Decision::Type::scalar) {
            eq.free_coefs.push_back({d.index, coef});
        } else {
            const double w = d.row == d.col ? 1.0 : 0.5;
            eq.entries.push_back({out.map.gram_block[d.index], d.row, d.col, coef * w});
        }
    };

    for (const auto& con : prog.constraints()) {
        if (con.kind == SosProgram::Kind::zero) {
            out.map.constraint_block.push_back(-1);
            out.map.constraint_gram.push_back({});
            for (const auto& [m, e] : con.body.terms()) {
                Equality eq;
                for (const auto& [id, c] : e.coefs()) put(eq, id, c);
                eq.rhs = -e.constant();
                sdp.equalities.push_back(std::move(eq));
            }
            continue;
        }
        const int deg = std::max(con.body.degree(), 0);
        int half = con.half_degree >= 0 ? con.half_degree : (deg + 1) / 2;
        GramBlock g = gram_parameterize(prog.nvars(), 2 * half);
        if (deg > 2 * half)
            throw CompileError("constraint '" + con.name + "' has degree " + std::to_string(deg) +
                               " above the Gram degree " + std::to_string(2 * half));
        if (copts.trim_basis) g.basis = detail::trim_gram_basis(std::move(g.basis), con.body.terms());
        if (g.basis.empty()) g.basis.push_back(Monomial(prog.nvars()));
        g.block = static_cast<int>(sdp.blocks.size());
        sdp.blocks.push_back(static_cast<int>(g.size()));
        out.map.constraint_block.push_back(g.block);

        // z^T Q z - body = 0, coefficient by coefficient; body monomials the
        // (trimmed) Gram span misses must vanish on their own
        auto products = detail::gram_products(g.basis);
        std::map<Monomial, int, GradedLex> rows;
        for (const auto& [m, pairs] : products) rows.emplace(m, 0);
        for (const auto& [m, e] : con.body.terms()) rows.emplace(m, 0);
        for (const auto& [m, unused] : rows) {
            Equality eq;
            if (auto pit = products.find(m); pit != products.end())
                for (const auto& [r, c] : pit->second) eq.entries.push_back({g.block, r, c, 1.0});
            if (auto it = con.body.terms().find(m); it != con.body.terms().end()) {
                for (const auto& [id, c] : it->second.coefs()) put(eq, id, -c);
                eq.rhs = it->second.constant();
            }
            if (eq.entries.empty() && eq.free_coefs.empty() && eq.rhs == 0.0) continue;
            sdp.equalities.push_back(std::move(eq));
        }
        out.map.constraint_gram.push_back(std::move(g));
    }

    // objective
    const auto& obj = prog.objective();
    sdp.objective_constant = obj.constant();
    for (const auto& [id, c] : obj.coefs()) {
        if (id >= ndec) throw CompileError("objective references an unregistered decision");
        const auto& d = decs[id];
        if (d.type == SosProgram::Decision::Type::scalar)
            sdp.free_cost[d.index] += c;
        else
            sdp.cost.push_back({out.map.gram_block[d.index], d.row, d.col, c * (d.row == d.col ? 1.0 : 0.5)});
    }
    return out;
}

// ============================================================================
// extract
// ============================================================================

struct SosFactors {
    std::string constraint;
    std::vector<Polynomial> factors;
    /// max |sum f_i^2 - body| over coefficients, divided by max(1, max |body coefficient|)
    double recomposition_error = 0.0;
    double min_eigenvalue = 0.0;
};

struct SosResult {
    SdpStatus status = SdpStatus::numerical_failure;
    double objective = 0.0;
    SdpResiduals residuals;
    int iterations = 0;
    std::vector<double> values; ///< per decision id
    std::map<std::string, Polynomial> polys;
    std::map<std::string, double> scalars;
    std::vector<SosFactors> sos_factors;

    const Polynomial& poly(const std::string& name) const {
        auto it = polys.find(name);
        if (it == polys.end()) throw Error("no decision polynomial named '" + name + "'");
        return it->second;
    }
    double scalar(const std::string& name) const {
        auto it = scalars.find(name);
        if (it == scalars.end()) throw Error("no decision scalar named '" + name + "'");
        return it->second;
    }
};

inline constexpr double kGramClip = 1e-9;

/// Factors z^T Q z as sum f_i^2 after clipping eigenvalues below kGramClip.
inline std::vector<Polynomial> gram_factors(const Eigen::MatrixXd& Q, const std::vector<Monomial>& basis,
                                            std::size_t nvars, double* min_eig = nullptr) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Q + Q.transpose()));
    if (min_eig) *min_eig = es.eigenvalues().size() ? es.eigenvalues().minCoeff() : 0.0;
    std::vector<Polynomial> out;
    for (Eigen::Index k = es.eigenvalues().size() - 1; k >= 0; --k) {
        const double lam = es.eigenvalues()(k);
        if (lam < kGramClip) continue;
        Polynomial f(nvars);
        const double s = std::sqrt(lam);
        for (std::size_t r = 0; r < basis.size(); ++r) f.add_term(basis[r], s * es.eigenvectors()(r, k));
        out.push_back(std::move(f));
    }
    return out;
}

inline SosResult extract(const SdpSolution& sol, const CompiledSos& compiled, const SosProgram& prog,
                         double accept_tol = 1e-6, bool primal_only = false) {
    const bool feasible = sol.status != SdpStatus::infeasible && sol.status != SdpStatus::unbounded &&
                          sol.residuals.primal <= accept_tol && sol.residuals.dual <= accept_tol;
    if (!(primal_only ? feasible : sol.usable(accept_tol)))
        throw Error(std::string("SDP solution not usable (status ") + to_string(sol.status) + "): " + sol.message);
    SosResult res;
    res.status = sol.status;
    res.residuals = sol.residuals;
    res.iterations = sol.iterations;
    res.objective = sol.primal_objective;

    const auto& decs = prog.decisions();
    res.values.resize(decs.size());
    for (std::size_t id = 0; id < decs.size(); ++id) {
        const auto& d = decs[id];
        if (d.type == SosProgram::Decision::Type::scalar)
            res.values[id] = sol.free_values.at(d.index);
        else
            res.values[id] = sol.X.at(compiled.map.gram_block[d.index])(d.row, d.col);
    }
    for (const auto& [name, id] : prog.named_scalars()) res.scalars[name] = res.values[id];
    for (const auto& np : prog.named_polys()) res.polys[np.name] = np.poly.evaluate(res.values);

    const auto& cons = prog.constraints();
    for (std::size_t i = 0; i < cons.size(); ++i) {
        if (cons[i].kind != SosProgram::Kind::sos) continue;
        const auto& g = compiled.map.constraint_gram[i];
        const Eigen::MatrixXd& Q = sol.X.at(compiled.map.constraint_block[i]);
        SosFactors sf;
        sf.constraint = cons[i].name;
        sf.factors = gram_factors(Q, g.basis, prog.nvars(), &sf.min_eigenvalue);
        Polynomial recomposed(prog.nvars());
        for (const auto& f : sf.factors) recomposed += f * f;
        const Polynomial body = cons[i].body.evaluate(res.values);
        double scale = 1.0;
        for (const auto& [m, c] : body.terms()) scale = std::max(scale, std::abs(c));
        sf.recomposition_error = max_coefficient_diff(recomposed, body) / scale;
        res.sos_factors.push_back(std::move(sf));
    }
    return res;
}

/// compile + solve + extract.
inline SosResult solve_sos(const SosProgram& prog, const SdpOptions& opts = {}, const CompileOptions& copts = {}) {
    const CompiledSos c = compile(prog, copts);
    const SdpSolution s = solve(c.sdp, opts);
    if (s.status == SdpStatus::infeasible) throw Error("SOS program infeasible: " + s.message);
    if (s.status == SdpStatus::unbounded) throw Error("SOS program unbounded: " + s.message);
    return extract(s, c, prog);
}

// ============================================================================
// S-procedure
// ============================================================================

struct KnownConstraint {
    Polynomial F;           ///< known residual, certified F <= 0 where it applies
    int degree = 0;         ///< multiplier degree
    MultiplierSign sign = MultiplierSign::sos;
    std::string name;
};

/// body + sum_j S_j F_j with fresh multipliers S_j registered in `prog`.
/// SOS multipliers need an even degree; free multipliers may take any degree
/// and get an optional coefficient box. `max_degree` (>= 0) caps the result.
inline DecisionPoly s_procedure_augment(SosProgram& prog, const DecisionPoly& body,
                                        const std::vector<KnownConstraint>& known, int max_degree = -1,
                                        double free_box = kInf) {
    DecisionPoly out = body;
    for (std::size_t j = 0; j < known.size(); ++j) {
        const auto& k = known[j];
        if (k.F.nvars() != prog.nvars()) throw DimensionError("known constraint has wrong nvars");
        if (k.degree < 0) throw CompileError("negative multiplier degree");
        const int total = k.degree + std::max(k.F.degree(), 0);
        if (max_degree >= 0 && total > max_degree)
            throw CompileError("multiplier degree overflow: S*F has degree " + std::to_string(total) + " > " +
                               std::to_string(max_degree));
        const std::string name = k.name.empty() ? "S" + std::to_string(j) : k.name;
        DecisionPoly S = k.sign == MultiplierSign::sos
                             ? prog.add_sos_poly(name, k.degree)
                             : prog.add_poly(name, monomial_basis(prog.nvars(), k.degree), -free_box, free_box);
        out += S * DecisionPoly(k.F);
    }
    return out;
}

} // namespace avgbound
