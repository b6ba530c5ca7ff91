#pragma once

// Sparse multivariate polynomials with double coefficients over a fixed,
// positional variable ordering.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avgbound/error.hpp"

namespace avgbound {

/// Coefficients smaller than this in magnitude are dropped after arithmetic.
inline constexpr double kCoefficientDropTol = 1e-14;

// ============================================================================
// Monomial
// ============================================================================

class Monomial {
  public:
    Monomial() = default;
    explicit Monomial(std::size_t nvars) : exps_(nvars, 0) {}
    explicit Monomial(std::vector<int> exps) : exps_(std::move(exps)) {
        for (int e : exps_)
            if (e < 0) throw DimensionError("negative exponent in monomial");
    }

    static Monomial variable(std::size_t nvars, std::size_t i, int power = 1) {
        Monomial m(nvars);
        m.exps_.at(i) = power;
        return m;
    }

    std::size_t nvars() const noexcept { return exps_.size(); }
    int degree() const noexcept { return std::accumulate(exps_.begin(), exps_.end(), 0); }
    int operator[](std::size_t i) const { return exps_[i]; }
    const std::vector<int>& exponents() const noexcept { return exps_; }

    Monomial operator*(const Monomial& o) const {
        if (o.nvars() != nvars()) throw DimensionError("monomial nvars mismatch");
        Monomial r = *this;
        for (std::size_t i = 0; i < exps_.size(); ++i) r.exps_[i] += o.exps_[i];
        return r;
    }

    /// Exponent vector with variable `i` lowered by one (caller checks > 0).
    Monomial lowered(std::size_t i) const {
        Monomial r = *this;
        --r.exps_[i];
        return r;
    }

    bool operator==(const Monomial&) const = default;

  private:
    std::vector<int> exps_;
};

/// Graded lexicographic order: total degree first, then the exponent of the
/// first variable descending (1 < x1 < x2 < x3 < x1^2 < x1 x2 < ...).
struct GradedLex {
    bool operator()(const Monomial& a, const Monomial& b) const {
        const int da = a.degree();
        const int db = b.degree();
        if (da != db) return da < db;
        return a.exponents() > b.exponents();
    }
};

/// All monomials of total degree <= maxdeg (and >= mindeg), graded-lex order.
inline std::vector<Monomial> monomial_basis(std::size_t nvars, int maxdeg, int mindeg = 0) {
    std::vector<Monomial> out;
    if (maxdeg < 0) return out;
    std::vector<int> e(nvars, 0);
    // enumerate exponent tuples with sum <= maxdeg via odometer recursion
    auto rec = [&](auto&& self, std::size_t pos, int remaining) -> void {
        if (pos == nvars) {
            const int d = maxdeg - remaining;
            if (d >= mindeg) out.emplace_back(e);
            return;
        }
        for (int k = 0; k <= remaining; ++k) {
            e[pos] = k;
            self(self, pos + 1, remaining - k);
        }
        e[pos] = 0;
    };
    rec(rec, 0, maxdeg);
    std::sort(out.begin(), out.end(), GradedLex{});
    return out;
}

// ============================================================================
// Polynomial
// ============================================================================

class Polynomial {
  public:
    using TermMap = std::map<Monomial, double, GradedLex>;

    Polynomial() = default;
    explicit Polynomial(std::size_t nvars) : nvars_(nvars) {}

    static Polynomial constant(std::size_t nvars, double c) {
        Polynomial p(nvars);
        p.add_term(Monomial(nvars), c);
        return p;
    }
    static Polynomial variable(std::size_t nvars, std::size_t i) {
        if (i >= nvars) throw DimensionError("variable index out of range");
        Polynomial p(nvars);
        p.add_term(Monomial::variable(nvars, i), 1.0);
        return p;
    }
    static Polynomial monomial(const Monomial& m, double c = 1.0) {
        Polynomial p(m.nvars());
        p.add_term(m, c);
        return p;
    }

    std::size_t nvars() const noexcept { return nvars_; }
    const TermMap& terms() const noexcept { return terms_; }
    std::size_t size() const noexcept { return terms_.size(); }
    bool is_zero() const noexcept { return terms_.empty(); }

    /// Total degree; -1 for the zero polynomial.
    int degree() const {
        return terms_.empty() ? -1 : terms_.rbegin()->first.degree();
    }

    double coefficient(const Monomial& m) const {
        auto it = terms_.find(m);
        return it == terms_.end() ? 0.0 : it->second;
    }

    /// Accumulates c into the coefficient of m, dropping it if it cancels.
    void add_term(const Monomial& m, double c) {
        if (m.nvars() != nvars_) throw DimensionError("monomial/polynomial nvars mismatch");
        if (c == 0.0) return;
        auto [it, inserted] = terms_.try_emplace(m, c);
        if (!inserted) it->second += c;
        if (std::abs(it->second) < kCoefficientDropTol) terms_.erase(it);
    }

    Polynomial& operator+=(const Polynomial& o) {
        check_same(o);
        for (const auto& [m, c] : o.terms_) add_term(m, c);
        return *this;
    }
    Polynomial& operator-=(const Polynomial& o) {
        check_same(o);
        for (const auto& [m, c] : o.terms_) add_term(m, -c);
        return *this;
    }
    Polynomial& operator*=(double s) {
        if (s == 0.0) {
            terms_.clear();
            return *this;
        }
        for (auto it = terms_.begin(); it != terms_.end();) {
            it->second *= s;
            if (std::abs(it->second) < kCoefficientDropTol)
                it = terms_.erase(it);
            else
                ++it;
        }
        return *this;
    }

    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
    friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
    friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
    Polynomial operator-() const { return Polynomial(*this) *= -1.0; }

    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        a.check_same(b);
        Polynomial r(a.nvars_);
        for (const auto& [ma, ca] : a.terms_)
            for (const auto& [mb, cb] : b.terms_) r.add_term(ma * mb, ca * cb);
        return r;
    }
    Polynomial& operator*=(const Polynomial& o) { return *this = *this * o; }

    Polynomial& operator+=(double c) {
        add_term(Monomial(nvars_), c);
        return *this;
    }
    friend Polynomial operator+(Polynomial a, double c) { return a += c; }
    friend Polynomial operator-(Polynomial a, double c) { return a += -c; }

    bool operator==(const Polynomial& o) const { return nvars_ == o.nvars_ && terms_ == o.terms_; }

    double evaluate(std::span<const double> x) const {
        if (x.size() != nvars_) throw DimensionError("evaluation point has wrong dimension");
        double sum = 0.0;
        for (const auto& [m, c] : terms_) {
            double t = c;
            for (std::size_t i = 0; i < nvars_; ++i)
                for (int k = 0; k < m[i]; ++k) t *= x[i];
            sum += t;
        }
        return sum;
    }

    /// Partial derivative with respect to variable i.
    Polynomial derivative(std::size_t i) const {
        if (i >= nvars_) throw DimensionError("derivative variable out of range");
        Polynomial r(nvars_);
        for (const auto& [m, c] : terms_)
            if (m[i] > 0) r.add_term(m.lowered(i), c * m[i]);
        return r;
    }

    /// Largest exponent of variable i over all terms.
    int degree_in(std::size_t i) const {
        int d = 0;
        for (const auto& [m, c] : terms_) d = std::max(d, m[i]);
        return d;
    }

    /// Coefficient polynomial of var^k: the terms containing exactly var^k,
    /// with that factor removed.
    Polynomial coefficient_of_power(std::size_t var, int k) const {
        Polynomial r(nvars_);
        for (const auto& [m, c] : terms_) {
            if (m[var] != k) continue;
            auto e = m.exponents();
            e[var] = 0;
            r.add_term(Monomial(std::move(e)), c);
        }
        return r;
    }

    /// Same polynomial re-embedded with `nvars` variables; extra variables are
    /// appended (must be absent from every term when shrinking).
    Polynomial resized(std::size_t nvars) const {
        Polynomial r(nvars);
        for (const auto& [m, c] : terms_) {
            auto e = m.exponents();
            for (std::size_t i = nvars; i < e.size(); ++i)
                if (e[i] != 0) throw DimensionError("cannot drop a variable that occurs in the polynomial");
            e.resize(nvars, 0);
            r.add_term(Monomial(std::move(e)), c);
        }
        return r;
    }

    double max_abs_coefficient() const {
        double m = 0.0;
        for (const auto& [mono, c] : terms_) m = std::max(m, std::abs(c));
        return m;
    }

  private:
    void check_same(const Polynomial& o) const {
        if (o.nvars_ != nvars_) throw DimensionError("polynomial nvars mismatch");
    }

    std::size_t nvars_ = 0;
    TermMap terms_;
};

inline Polynomial pow(const Polynomial& p, int k) {
    if (k < 0) throw DimensionError("negative polynomial power");
    Polynomial r = Polynomial::constant(p.nvars(), 1.0);
    Polynomial base = p;
    while (k > 0) {
        if (k & 1) r *= base;
        k >>= 1;
        if (k > 0) base = base * base;
    }
    return r;
}

/// Largest coefficient-wise difference |a - b|.
inline double max_coefficient_diff(const Polynomial& a, const Polynomial& b) {
    return (a - b).max_abs_coefficient();
}

// ============================================================================
// Vectors and matrices of polynomials
// ============================================================================

using PolyVec = std::vector<Polynomial>;

class PolyMat {
  public:
    PolyMat() = default;
    PolyMat(std::size_t rows, std::size_t cols, std::size_t nvars)
        : rows_(rows), cols_(cols), data_(rows * cols, Polynomial(nvars)) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    Polynomial& operator()(std::size_t r, std::size_t c) { return data_.at(r * cols_ + c); }
    const Polynomial& operator()(std::size_t r, std::size_t c) const { return data_.at(r * cols_ + c); }

    bool is_zero() const {
        return std::all_of(data_.begin(), data_.end(), [](const Polynomial& p) { return p.is_zero(); });
    }

    /// Matrix-vector product g * u.
    PolyVec apply(const PolyVec& u) const {
        if (u.size() != cols_) throw DimensionError("g*u: input dimension mismatch");
        PolyVec out;
        for (std::size_t r = 0; r < rows_; ++r) {
            Polynomial acc(u.empty() ? (*this)(r, 0).nvars() : u.front().nvars());
            for (std::size_t c = 0; c < cols_; ++c) acc += (*this)(r, c) * u[c];
            out.push_back(std::move(acc));
        }
        return out;
    }

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<Polynomial> data_;
};

inline PolyVec gradient(const Polynomial& p) {
    PolyVec g;
    g.reserve(p.nvars());
    for (std::size_t i = 0; i < p.nvars(); ++i) g.push_back(p.derivative(i));
    return g;
}

inline Polynomial dot(const PolyVec& a, const PolyVec& b) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("dot: dimension mismatch");
    Polynomial r(a.front().nvars());
    for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
    return r;
}

inline PolyVec operator+(PolyVec a, const PolyVec& b) {
    if (a.size() != b.size()) throw DimensionError("vector add: dimension mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline PolyVec operator*(double s, PolyVec a) {
    for (auto& p : a) p *= s;
    return a;
}

/// Lie derivative f . grad(V).
inline Polynomial lie_derivative(const PolyVec& f, const Polynomial& V) { return dot(f, gradient(V)); }

// ============================================================================
// Substitution
// ============================================================================

/// Composes p with polynomial images of its variables. The result lives in
/// `out_nvars` variables. Variable k of p maps to assign[k] if present,
/// otherwise to variable k of the output space (which must exist).
inline Polynomial substitute(const Polynomial& p, const std::map<std::size_t, Polynomial>& assign,
                             std::size_t out_nvars) {
    for (const auto& [k, img] : assign)
        if (img.nvars() != out_nvars) throw DimensionError("substitution image has wrong nvars");

    std::vector<Polynomial> images;
    images.reserve(p.nvars());
    for (std::size_t k = 0; k < p.nvars(); ++k) {
        if (auto it = assign.find(k); it != assign.end()) {
            images.push_back(it->second);
        } else if (k < out_nvars) {
            images.push_back(Polynomial::variable(out_nvars, k));
        } else {
            throw DimensionError("missing assignment for variable " + std::to_string(k));
        }
    }

    // power cache per variable
    std::vector<std::vector<Polynomial>> powers(p.nvars());
    auto power_of = [&](std::size_t k, int e) -> const Polynomial& {
        auto& cache = powers[k];
        if (cache.empty()) cache.push_back(Polynomial::constant(out_nvars, 1.0));
        while (static_cast<int>(cache.size()) <= e) cache.push_back(cache.back() * images[k]);
        return cache[e];
    };

    Polynomial r(out_nvars);
    for (const auto& [m, c] : p.terms()) {
        Polynomial t = Polynomial::constant(out_nvars, c);
        for (std::size_t k = 0; k < p.nvars(); ++k)
            if (m[k] > 0) t *= power_of(k, m[k]);
        r += t;
    }
    return r;
}

// ============================================================================
// Printing
// ============================================================================

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // prefer the shortest representation that round-trips
    for (int prec = 1; prec <= 17; ++prec) {
        char trial[40];
        std::snprintf(trial, sizeof trial, "%.*g", prec, v);
        if (std::strtod(trial, nullptr) == v) return trial;
    }
    return buf;
}

inline std::vector<std::string> default_var_names(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("x" + std::to_string(i + 1));
    return names;
}

inline std::string monomial_to_string(const Monomial& m, const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < m.nvars(); ++i) {
        if (m[i] == 0) continue;
        if (!s.empty()) s += "*";
        s += names.at(i);
        if (m[i] > 1) s += "^" + std::to_string(m[i]);
    }
    return s;
}

/// Canonical text form, terms in graded-lex order; re-parses to the same
/// polynomial.
inline std::string to_string(const Polynomial& p, const std::vector<std::string>& names) {
    if (names.size() != p.nvars()) throw DimensionError("name list does not match nvars");
    if (p.is_zero()) return "0";
    std::string s;
    bool first = true;
    for (const auto& [m, c] : p.terms()) {
        const double mag = std::abs(c);
        if (first) {
            if (c < 0) s += "-";
        } else {
            s += c < 0 ? " - " : " + ";
        }
        first = false;
        const std::string mono = monomial_to_string(m, names);
        if (mono.empty()) {
            s += format_double(mag);
        } else if (mag == 1.0) {
            s += mono;
        } else {
            s += format_double(mag) + "*" + mono;
        }
    }
    return s;
}

inline std::string to_string(const Polynomial& p) { return to_string(p, default_var_names(p.nvars())); }

// ============================================================================
// Fast repeated evaluation
// ============================================================================

/// Flattened polynomial for hot loops (integration, trajectory checks).
class CompiledPolynomial {
  public:
    CompiledPolynomial() = default;
    explicit CompiledPolynomial(const Polynomial& p) : nvars_(p.nvars()) {
        for (const auto& [m, c] : p.terms()) {
            coefs_.push_back(c);
            for (std::size_t i = 0; i < nvars_; ++i) {
                exps_.push_back(static_cast<std::uint8_t>(m[i]));
                max_exp_ = std::max(max_exp_, m[i]);
            }
        }
    }

    std::size_t nvars() const noexcept { return nvars_; }

    double operator()(std::span<const double> x) const {
        // power table: pw[i*(max+1)+k] = x_i^k
        double pw_stack[64];
        std::vector<double> pw_heap;
        const std::size_t stride = static_cast<std::size_t>(max_exp_) + 1;
        double* pw = pw_stack;
        if (nvars_ * stride > 64) {
            pw_heap.resize(nvars_ * stride);
            pw = pw_heap.data();
        }
        for (std::size_t i = 0; i < nvars_; ++i) {
            pw[i * stride] = 1.0;
            for (std::size_t k = 1; k < stride; ++k) pw[i * stride + k] = pw[i * stride + k - 1] * x[i];
        }
        double sum = 0.0;
        for (std::size_t t = 0; t < coefs_.size(); ++t) {
            double v = coefs_[t];
            const std::uint8_t* e = &exps_[t * nvars_];
            for (std::size_t i = 0; i < nvars_; ++i)
                if (e[i]) v *= pw[i * stride + e[i]];
            sum += v;
        }
        return sum;
    }

  private:
    std::size_t nvars_ = 0;
    int max_exp_ = 0;
    std::vector<double> coefs_;
    std::vector<std::uint8_t> exps_;
};

} // namespace avgbound
