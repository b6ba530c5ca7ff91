#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "avgbound/bound.hpp"
#include "avgbound/config.hpp"
#include "avgbound/json_io.hpp"
#include "avgbound/parse.hpp"
#include "avgbound/simulator.hpp"
#include "avgbound/sweep.hpp"

using namespace avgbound;

namespace {

const std::string kCylinder = std::string(AVGBOUND_SOURCE_DIR) + "/configs/cylinder.cfg";
const std::string kReferenceU1 = std::string(AVGBOUND_SOURCE_DIR) + "/configs/u1_reference.json";

const PolySystem& cylinder() {
    static const LoadedSystem ls = load_config(kCylinder);
    return ls.system;
}

ClosedLoop scalar(const std::string& f, const std::string& phi) {
    const std::vector<std::string> x{"x"};
    return ClosedLoop({parse_poly(f, x)}, parse_poly(phi, x));
}

SimConfig cfg(double dt, double T, std::vector<double> x0, double transient = 0.5) {
    SimConfig c;
    c.dt = dt;
    c.T = T;
    c.x0 = std::move(x0);
    c.transient_fraction = transient;
    return c;
}

// limit cycle of the uncontrolled model: a3 = sigma_r / beta, a1^2 + a2^2 = sigma_3 a3 / alpha
constexpr double kSigmaR = 0.05439, kSigma3 = 0.05347, kAlpha = 0.02095, kBeta = 0.02116;
constexpr double kA3 = kSigmaR / kBeta;
constexpr double kR2 = kSigma3 * kA3 / kAlpha;

} // namespace

TEST(Integrate, ExponentialDecay) {
    const Trajectory tr = integrate(scalar("-x", "x^2"), cfg(0.01, 1.0, {1.0}));
    ASSERT_EQ(tr.size(), 101u);
    EXPECT_DOUBLE_EQ(tr.at(0)[0], 1.0);
    EXPECT_NEAR(tr.back()[0], std::exp(-1.0), 1e-9);
}

TEST(Integrate, FourthOrderConvergence) {
    const ClosedLoop cl = scalar("-x", "x^2");
    const double exact = std::exp(-2.0);
    const double err1 = std::abs(integrate(cl, cfg(0.2, 2.0, {1.0})).back()[0] - exact);
    const double err2 = std::abs(integrate(cl, cfg(0.1, 2.0, {1.0})).back()[0] - exact);
    ASSERT_GT(err2, 0.0);
    EXPECT_GE(err1 / err2, 8.0);
    EXPECT_LE(err1 / err2, 24.0);
}

TEST(Integrate, DivergenceThrows) {
    EXPECT_THROW(integrate(scalar("x^2", "x^2"), cfg(0.01, 10.0, {2.0})), DivergenceError);
}

TEST(Integrate, ValidatesConfig) {
    const ClosedLoop cl = scalar("-x", "x^2");
    EXPECT_THROW(integrate(cl, cfg(0.0, 1.0, {1.0})), Error);
    EXPECT_THROW(integrate(cl, cfg(0.1, 0.05, {1.0})), Error);
    EXPECT_THROW(integrate(cl, cfg(0.1, 1.0, {1.0, 2.0})), DimensionError);
    EXPECT_THROW(integrate(cl, cfg(0.1, 1.0, {1.0}, 1.0)), Error);
}

TEST(TimeAverage, ConstantCost) {
    const SimReport r = time_average(scalar("-x", "x^2 + 3"), cfg(0.01, 200.0, {1.0}));
    EXPECT_NEAR(r.phi_bar, 3.0, 1e-9);
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(r.stabilized);
    EXPECT_FALSE(r.mean_planar_energy.has_value());
}

TEST(TimeAverage, CylinderLimitCycle) {
    const SimReport r = time_average(cylinder(), nullptr, cfg(0.01, 3000.0, {-0.3, -0.3, 0.3}));
    const double want = 0.5 * (kR2 + kA3 * kA3);
    EXPECT_NEAR(r.phi_bar, want, 1e-3 * want);
    ASSERT_TRUE(r.mean_planar_energy.has_value());
    EXPECT_NEAR(*r.mean_planar_energy, kR2, 1e-3 * kR2);
    EXPECT_NEAR(r.state_mean[2], kA3, 1e-3 * kA3);
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(r.oscillatory);
    EXPECT_FALSE(r.stabilized);
}

TEST(TimeAverage, WholeCycleMean) {
    // x1 = sin t, Phi = x1^2 + 1: the mean over whole periods is 3/2
    const std::vector<std::string> names{"x1", "x2"};
    const ClosedLoop cl({parse_poly("x2", names), parse_poly("-x1", names)}, parse_poly("x1^2 + 1", names));
    const SimReport r = time_average(cl, cfg(0.01, 100.0, {0.0, 1.0}, 0.1));
    ASSERT_TRUE(r.phi_bar_cycles.has_value());
    EXPECT_NEAR(*r.phi_bar_cycles, 1.5, 1e-7);
    EXPECT_EQ(r.cycles, 13);
    EXPECT_FALSE(time_average(scalar("-x", "x^2"), cfg(0.01, 10.0, {1.0})).phi_bar_cycles.has_value());
}

TEST(TimeAverage, CylinderCycleMeanIsStable) {
    const SimReport a = time_average(cylinder(), nullptr, cfg(0.01, 3000.0, {-0.3, -0.3, 0.3}));
    const SimReport b = time_average(cylinder(), nullptr, cfg(0.005, 6000.0, {-0.3, -0.3, 0.3}));
    ASSERT_TRUE(a.phi_bar_cycles && b.phi_bar_cycles);
    EXPECT_NEAR(*a.phi_bar_cycles, *b.phi_bar_cycles, 1e-7);
    EXPECT_NEAR(*a.phi_bar_cycles, 0.5 * (kR2 + kA3 * kA3), 1e-6);
}

TEST(TimeAverage, BoundHoldsForUncontrolledCylinder) {
    const BoundCertificate up = upper_bound(cylinder(), 2);
    ASSERT_TRUE(up.feasible);
    const SimReport r = time_average(cylinder(), nullptr, cfg(0.01, 3000.0, {-0.3, -0.3, 0.3}));
    EXPECT_LE(r.phi_bar, up.C + 1e-4 * (1.0 + up.C));
}

TEST(Equilibria, CubicRoots) {
    const auto eqs = find_equilibria(scalar("x - x^3", "x^2"));
    ASSERT_EQ(eqs.size(), 3u);
    EXPECT_NEAR(eqs[0].point[0], 0.0, 1e-12);
    EXPECT_FALSE(eqs[0].stable);
    EXPECT_NEAR(eqs[1].point[0], -1.0, 1e-10);
    EXPECT_NEAR(eqs[2].point[0], 1.0, 1e-10);
    for (const auto& e : eqs) EXPECT_LE(e.residual, 1e-8);
    EXPECT_TRUE(eqs[1].stable);
    EXPECT_NEAR(eqs[1].eigenvalues[0].real(), -2.0, 1e-8);
}

TEST(Equilibria, UncontrolledCylinderOnlyOrigin) {
    const auto eqs = find_equilibria(cylinder(), nullptr);
    ASSERT_EQ(eqs.size(), 1u);
    for (double v : eqs[0].point) EXPECT_NEAR(v, 0.0, 1e-10);
    EXPECT_FALSE(eqs[0].stable);
    EXPECT_FALSE(has_nonzero_equilibrium(eqs));
}

TEST(Equilibria, ResidualsBelowAcceptance) {
    const Controller c = load_controller(kReferenceU1, cylinder());
    for (double e : {0.02, 0.08}) {
        Controller ce = c;
        ce.epsilon = e;
        for (const auto& q : find_equilibria(cylinder(), &ce)) EXPECT_LE(q.residual, 1e-8) << "eps=" << e;
    }
}

TEST(Equilibria, RejectsBadGrid) {
    EquilibriumSearch s;
    s.step = 0.0;
    EXPECT_THROW(find_equilibria(scalar("-x", "x^2"), s), Error);
}

TEST(CertificateCheck, HoldsAlongTrajectories) {
    const BoundCertificate up = upper_bound(cylinder(), 2);
    ASSERT_TRUE(up.feasible);
    const ClosedLoop cl = close_loop(cylinder());
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (int k = 0; k < 10; ++k) {
        const SimConfig c = cfg(0.01, 100.0, {U(rng), U(rng), U(rng)});
        const CertificateCheck ok = check_certificate(up, cl, c);
        EXPECT_FALSE(ok.violated) << "max_H=" << ok.max_H;
        // the trajectory enters the region where H is near 0
        EXPECT_TRUE(check_certificate(up.V, up.C - 1.0, cl, integrate(cl, c)).violated);
    }
}

TEST(CertificateCheck, RejectsInfeasibleOrLower) {
    BoundCertificate c;
    const ClosedLoop cl = close_loop(cylinder());
    EXPECT_THROW(check_certificate(c, cl, cfg(0.01, 1.0, {0, 0, 0})), Error);
    c.feasible = true;
    c.kind = BoundKind::lower;
    c.V = Polynomial(3);
    EXPECT_THROW(check_certificate(c, cl, cfg(0.01, 1.0, {0, 0, 0})), Error);
}

TEST(Sweep, EpsRange) {
    const auto v = parse_eps_range("0:0.1:0.002");
    ASSERT_EQ(v.size(), 51u);
    EXPECT_DOUBLE_EQ(v.front(), 0.0);
    EXPECT_NEAR(v.back(), 0.1, 1e-15);
    EXPECT_EQ(parse_eps_range("0.5"), std::vector<double>{0.5});
    EXPECT_THROW(parse_eps_range("0:1"), Error);
    EXPECT_THROW(parse_eps_range("0:1:0"), Error);
    EXPECT_THROW(parse_eps_range("1:0:0.1"), Error);
    EXPECT_THROW(parse_eps_range("a:1:0.1"), Error);
}

TEST(Sweep, CsvFormat) {
    SweepRow r;
    r.eps = 0.01;
    r.phi_bar = 2.5;
    r.n_equilibria = 1;
    std::ostringstream os;
    write_csv(os, {r});
    EXPECT_EQ(os.str(),
              "eps,phi_bar,converged,C_eps,C_eps_relaxed,C_linear,n_equilibria,stabilized\r\n"
              "0.01,2.5,false,,,,1,false\r\n");
}

TEST(Sweep, StabilizationThreshold) {
    const Controller c = load_controller(kReferenceU1, cylinder());
    SweepOptions o;
    o.with_bounds = false;
    o.sim = cfg(0.01, 3000.0, {-0.3, -0.3, 0.3});
    const SweepResult r = sweep_eps(cylinder(), c.terms[0], {0.02, 0.005}, o);
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_DOUBLE_EQ(r.rows[0].eps, 0.005);
    EXPECT_FALSE(r.rows[0].stabilized);
    EXPECT_TRUE(r.rows[1].stabilized);
    EXPECT_NEAR(r.rows[1].phi_bar, 0.0, 1e-3);
    ASSERT_TRUE(r.eps1.has_value());
    EXPECT_GT(*r.eps1, 0.005);
    EXPECT_LT(*r.eps1, 0.02);
    EXPECT_FALSE(r.eps2.has_value());
}

TEST(Sweep, ThreadCount) {
    EXPECT_EQ(sweep_threads(4, 2), 2);
    EXPECT_EQ(sweep_threads(1, 10), 1);
    EXPECT_GE(sweep_threads(0, 10), 1);
}
