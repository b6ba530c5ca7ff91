#pragma once

// Controlled polynomial dynamics  dx/dt = f(x) + g(x) u  with running cost
// Phi(x, u). f and g live over the states; Phi over states followed by inputs.

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "avgbound/error.hpp"
#include "avgbound/polynomial.hpp"

namespace avgbound {

struct PolySystem {
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    PolyVec f;
    PolyMat g;
    Polynomial phi;
    std::optional<double> beta; ///< attractor radius for the boundedness certificate

    std::size_t n() const noexcept { return states.size(); }
    std::size_t m() const noexcept { return inputs.size(); }

    std::vector<std::string> all_names() const {
        auto v = states;
        v.insert(v.end(), inputs.begin(), inputs.end());
        return v;
    }

    void validate() const {
        if (states.empty()) throw DimensionError("system needs at least one state");
        if (f.size() != n()) throw DimensionError("f has " + std::to_string(f.size()) + " entries for " + std::to_string(n()) + " states");
        for (const auto& p : f)
            if (p.nvars() != n()) throw DimensionError("f entry over the wrong variable count");
        if (m() > 0 && (g.rows() != n() || g.cols() != m())) throw DimensionError("g must be states x inputs");
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c)
                if (g(r, c).nvars() != n()) throw DimensionError("g entry over the wrong variable count");
        if (phi.nvars() != n() + m()) throw DimensionError("phi must be a polynomial over states and inputs");
    }

    /// Phi with u = 0.
    Polynomial phi_uncontrolled() const {
        std::map<std::size_t, Polynomial> assign;
        for (std::size_t k = 0; k < m(); ++k) assign[n() + k] = Polynomial(n());
        return substitute(phi, assign, n());
    }

    /// Phi(x, u(x)).
    Polynomial phi_closed(const PolyVec& u) const {
        if (u.size() != m()) throw DimensionError("controller has wrong input count");
        std::map<std::size_t, Polynomial> assign;
        for (std::size_t k = 0; k < m(); ++k) assign[n() + k] = u[k];
        return substitute(phi, assign, n());
    }

    /// f + g u(x).
    PolyVec closed_loop(const PolyVec& u) const {
        if (u.size() != m()) throw DimensionError("controller has wrong input count");
        if (m() == 0) return f;
        return f + g.apply(u);
    }

    PolyVec zero_input() const { return PolyVec(m(), Polynomial(n())); }

    /// Samples Phi at random points in [-range, range]^(n+m); returns the
    /// number of points where Phi < -tol.
    int phi_negative_samples(int count = 100, double range = 3.0, unsigned seed = 1, double tol = 1e-12) const {
        std::mt19937 rng(seed);
        std::uniform_real_distribution<double> U(-range, range);
        std::vector<double> pt(n() + m());
        int bad = 0;
        for (int s = 0; s < count; ++s) {
            for (auto& v : pt) v = U(rng);
            if (phi.evaluate(pt) < -tol) ++bad;
        }
        return bad;
    }
};

} // namespace avgbound
