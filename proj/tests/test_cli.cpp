#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "avgbound/json_io.hpp"
#include "avgbound/sdp.hpp"
#include "avgbound/sdpa_io.hpp"

using namespace avgbound;
namespace fs = std::filesystem;

namespace {

struct Output {
    int code = -1;
    std::string out;
};

Output run(const std::string& args) {
    const std::string cmd = std::string(AVGBOUND_CLI_PATH) + " " + args + " 2>/dev/null";
    Output o;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) throw std::runtime_error("popen failed");
    char buf[4096];
    for (std::size_t k; (k = std::fread(buf, 1, sizeof buf, p)) > 0;) o.out.append(buf, k);
    const int st = pclose(p);
    o.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return o;
}

fs::path scratch() {
    const fs::path d = fs::temp_directory_path() / ("avgbound_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
}

const std::string kReferenceU1 = std::string(AVGBOUND_SOURCE_DIR) + "/configs/u1_reference.json";

} // namespace

TEST(Cli, BoundDegreeTwo) {
    const Output o = run("bound --dv 2");
    ASSERT_EQ(o.code, 0) << o.out;
    const Json j = Json::parse(o.out);
    EXPECT_EQ(j["command"], "bound");
    EXPECT_EQ(j["tool"]["version"], kVersion);
    EXPECT_TRUE(j["upper"]["feasible"].get<bool>());
    const double C = j["upper"]["C"].get<double>();
    EXPECT_GE(C, 6.54);
    EXPECT_LE(C, 6.64);
    EXPECT_EQ(j["system"]["states"].size(), 3u);
}

TEST(Cli, RerunIsByteIdentical) {
    const Output a = run("bound --dv 2 --lower");
    const Output b = run("bound --dv 2 --lower");
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
}

TEST(Cli, OutFileMatchesStdout) {
    const fs::path f = scratch() / "bound.json";
    ASSERT_EQ(run("bound --dv 2 --out " + f.string()).code, 0);
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(Json::parse(ss.str()), Json::parse(run("bound --dv 2").out));
}

TEST(Cli, SynthAsymptoticFirstOrder) {
    const Output o = run("synth --method AII --dv 2 --du 2 --ds 2 --no-confirm");
    ASSERT_EQ(o.code, 0) << o.out;
    const Json j = Json::parse(o.out);
    ASSERT_EQ(j["steps"].size(), 2u);
    EXPECT_LT(j["steps"][1]["C"].get<double>(), 0.0);
    EXPECT_FALSE(j["bound"]["rigorous"].get<bool>());
    EXPECT_EQ(j["controller"]["terms"].size(), 1u);
    EXPECT_FALSE(j.contains("confirmation"));
}

TEST(Cli, SimulateStabilizes) {
    const Output o = run("simulate --controller " + kReferenceU1 + " --eps 0.02");
    ASSERT_EQ(o.code, 0) << o.out;
    const Json j = Json::parse(o.out);
    EXPECT_TRUE(j["report"]["stabilized"].get<bool>());
    ASSERT_EQ(j["equilibria"].size(), 1u);
    EXPECT_TRUE(j["equilibria"][0]["stable"].get<bool>());
}

TEST(Cli, SweepCsv) {
    const Output o = run("sweep --eps 0.01:0.014:0.004 --no-bounds --c1 -334 --csv -");
    ASSERT_EQ(o.code, 0) << o.out;
    std::istringstream in(o.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "eps,phi_bar,converged,C_eps,C_eps_relaxed,C_linear,n_equilibria,stabilized\r");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 2);
}

TEST(Cli, ExportSdpaRoundTrip) {
    const fs::path f = scratch() / "o0.dat-s";
    const Output o = run("export-sdpa --problem O0 --dv 2 --file " + f.string());
    ASSERT_EQ(o.code, 0) << o.out;
    const Json j = Json::parse(o.out);
    const SdpProblem p = import_sdpa(f.string());
    const SdpSolution s = solve(p);
    ASSERT_TRUE(s.usable());
    const Output b = run("bound --dv 2");
    const double C = Json::parse(b.out)["upper"]["C"].get<double>();
    EXPECT_NEAR(s.primal_objective + j["objective_constant"].get<double>(), C, 1e-5 * (1.0 + C));
}

TEST(Cli, UsageErrorsExitTwo) {
    for (const char* args : {"bound --nope", "frobnicate", "bound --dv x", "export-sdpa"}) {
        const Output o = run(args);
        EXPECT_EQ(o.code, 2) << args;
        const Json j = Json::parse(o.out);
        EXPECT_EQ(j["error"]["kind"], "usage") << args;
    }
}

TEST(Cli, RuntimeErrorsExitOne) {
    Output o = run("bound --system /nonexistent/system.cfg");
    EXPECT_EQ(o.code, 1);
    EXPECT_EQ(Json::parse(o.out)["error"]["kind"], "config");

    o = run("simulate --controller /nonexistent/u.json");
    EXPECT_EQ(o.code, 1);
    EXPECT_TRUE(Json::parse(o.out).contains("error"));

    o = run("synth --method AIII");
    EXPECT_EQ(o.code, 1);
}
