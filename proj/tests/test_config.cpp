#include <gtest/gtest.h>

#include "avgbound/config.hpp"

using namespace avgbound;

namespace {

const std::string kCylinder = std::string(AVGBOUND_SOURCE_DIR) + "/configs/cylinder.cfg";

const char* kSmall = R"(
[states]
names = x, y
[inputs]
names = u
[dynamics]
f.x = "-x + y"
f.y = "-y"   # trailing comment
[input_matrix]
g.y.u = 1
[cost]
phi = x^2 + u^2
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto pos = s.find(from);
    if (pos != std::string::npos) s.replace(pos, from.size(), to);
    return s;
}

} // namespace

TEST(Config, ShippedCylinder) {
    const LoadedSystem ls = load_config(kCylinder);
    const PolySystem& s = ls.system;
    EXPECT_EQ(s.n(), 3u);
    EXPECT_EQ(s.m(), 1u);
    EXPECT_TRUE(ls.warnings.empty());
    const std::vector<std::string> names{"a1", "a2", "a3", "u"};
    EXPECT_TRUE(max_coefficient_diff(s.phi, parse_poly("0.5*(a1^2 + a2^2 + a3^2) + u^2", names)) < 1e-15);
    EXPECT_DOUBLE_EQ(s.f[0].coefficient(Monomial({1, 0, 0})), 0.05439);
    EXPECT_DOUBLE_EQ(s.f[0].coefficient(Monomial({0, 1, 0})), -0.9232);
    EXPECT_DOUBLE_EQ(s.f[0].coefficient(Monomial({0, 1, 1})), 0.03504);
    EXPECT_DOUBLE_EQ(s.f[2].coefficient(Monomial({0, 0, 1})), -0.05347);
    EXPECT_DOUBLE_EQ(s.g(0, 0).coefficient(Monomial(3)), -0.15402);
    EXPECT_DOUBLE_EQ(s.g(1, 0).coefficient(Monomial(3)), 0.046387);
    EXPECT_TRUE(s.g(2, 0).is_zero());
    ASSERT_TRUE(s.beta.has_value());
    EXPECT_EQ(*s.beta, 100.0);
    EXPECT_EQ(ls.config.defaults.x0, (std::vector<double>{-0.3, -0.3, 0.3}));
    EXPECT_EQ(ls.config.defaults.dt, 0.01);
}

TEST(Config, SmallSystemDefaults) {
    const LoadedSystem ls = parse_config(kSmall);
    EXPECT_EQ(ls.system.n(), 2u);
    EXPECT_TRUE(ls.system.g(0, 0).is_zero());
    EXPECT_EQ(ls.system.g(1, 0), Polynomial::constant(2, 1.0));
    EXPECT_EQ(ls.config.defaults.T, 3000.0);
    EXPECT_FALSE(ls.system.beta.has_value());
}

TEST(Config, MissingDynamicsNamesState) {
    try {
        parse_config(replace(kSmall, "f.y = \"-y\"", ""));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("'y'"), std::string::npos) << e.what();
    }
}

TEST(Config, MalformedExpressionHasLineAndPosition) {
    try {
        parse_config(replace(kSmall, "\"-x + y\"", "\"-x + * y\""));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 7u);
        EXPECT_NE(std::string(e.what()).find("position 5"), std::string::npos) << e.what();
    }
}

TEST(Config, UnknownVariableInCost) {
    try {
        parse_config(replace(kSmall, "x^2 + u^2", "x^2 + v^2"));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 12u);
        EXPECT_NE(std::string(e.what()).find("'v'"), std::string::npos);
    }
}

TEST(Config, StructuralErrors) {
    EXPECT_THROW(parse_config(replace(kSmall, "[cost]", "[costs]")), ConfigError);
    EXPECT_THROW(parse_config(replace(kSmall, "g.y.u = 1", "g.z.u = 1")), ConfigError);
    EXPECT_THROW(parse_config(replace(kSmall, "g.y.u = 1", "g.y.u = 1\ng.y.u = 2")), ConfigError);
    EXPECT_THROW(parse_config(replace(kSmall, "[states]", "stray\n[states]")), ConfigError);
    EXPECT_THROW(parse_config(replace(kSmall, "f.y = \"-y\"", "f.y = \"-y\"\nf.w = 1")), ConfigError);
    EXPECT_THROW(parse_config(replace(kSmall, "names = u", "names = x")), ConfigError);
    EXPECT_THROW(parse_config(std::string(kSmall) + "[defaults]\nx0 = 1\n"), ConfigError);
    EXPECT_THROW(parse_config(std::string(kSmall) + "[defaults]\ndt = -1\n"), ConfigError);
    EXPECT_THROW(parse_config(std::string(kSmall) + "[defaults]\ncolour = 1\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/system.cfg"), ConfigError);
}

TEST(Config, ErrorLineNumbers) {
    try {
        parse_config(std::string(kSmall) + "[parameters]\nk = abc\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 14u);
    }
}

TEST(Config, NegativeCostWarns) {
    const LoadedSystem ls = parse_config(replace(kSmall, "x^2 + u^2", "x - u^2"));
    ASSERT_EQ(ls.warnings.size(), 1u);
    EXPECT_NE(ls.warnings[0].find("negative"), std::string::npos);
}

TEST(Config, ParametersAndNoInputs) {
    const LoadedSystem ls = parse_config("[parameters]\nk = 2.5\n[states]\nnames = x\n[dynamics]\nf.x = -k*x\n[cost]\nphi = x^2\n");
    EXPECT_EQ(ls.system.m(), 0u);
    EXPECT_DOUBLE_EQ(ls.system.f[0].coefficient(Monomial::variable(1, 0)), -2.5);
}
