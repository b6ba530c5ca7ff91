#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "avgbound/sdpa_io.hpp"

using namespace avgbound;

namespace {

// min <1, X> s.t. <1, X> = 1 over a 1x1 block
SdpProblem toy() {
    SdpProblem p;
    p.blocks = {1};
    p.cost = {{0, 0, 0, 1.0}};
    Equality eq;
    eq.entries = {{0, 0, 0, 1.0}};
    eq.rhs = 1.0;
    p.equalities = {eq};
    return p;
}

SdpProblem random_problem(std::mt19937& rng, int idx) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0, 1);
    SdpProblem p;
    p.blocks = {3, -2};
    if (idx % 2) p.blocks.push_back(2);
    const int nf = idx % 4;
    for (int i = 0; i < nf; ++i) {
        FreeVar v;
        if (i == 1) v.lo = -N(rng) * 10;
        if (i == 2) v.hi = 1.0 / 3.0;
        if (i == 3) v = {-0.1, 0.7};
        p.free_vars.push_back(v);
        p.free_cost.push_back(i % 2 ? N(rng) : 0.0);
    }
    p.objective_constant = idx % 3 ? N(rng) : 0.0;
    auto rand_entries = [&](std::vector<BlockEntry>& out) {
        for (int k = 0; k < static_cast<int>(p.blocks.size()); ++k) {
            const int n = std::abs(p.blocks[k]);
            for (int r = 0; r < n; ++r)
                for (int c = r; c < n; ++c) {
                    if (p.blocks[k] < 0 && r != c) continue;
                    if (U(rng) < 0.4) out.push_back({k, r, c, N(rng) * std::pow(10.0, N(rng) * 3)});
                }
        }
    };
    rand_entries(p.cost);
    for (int j = 0; j < 5; ++j) {
        Equality eq;
        rand_entries(eq.entries);
        for (int i = 0; i < nf; ++i)
            if (U(rng) < 0.6) eq.free_coefs.push_back({i, N(rng)});
        eq.rhs = N(rng);
        p.equalities.push_back(eq);
    }
    return p;
}

int count_lines(const std::string& s, bool comments) {
    std::istringstream in(s);
    std::string line;
    int n = 0;
    while (std::getline(in, line))
        if (!line.empty() && (line[0] == '*') == comments) ++n;
    return n;
}

} // namespace

TEST(SdpaExport, ToyLayout) {
    const std::string s = export_sdpa_string(toy());
    EXPECT_EQ(count_lines(s, true), 0);
    EXPECT_EQ(count_lines(s, false), 6); // 4 header lines + 2 entries
    EXPECT_EQ(s, "1\n1\n1\n1\n0 1 1 1 -1\n1 1 1 1 1\n");
}

TEST(SdpaExport, FreeVariablesSplitIntoDiagonalBlock) {
    SdpProblem p = toy();
    p.free_vars = {FreeVar{-1.0, 2.0}};
    p.free_cost = {1.0};
    p.equalities[0].free_coefs = {{0, 1.0}};
    const std::string s = export_sdpa_string(p);
    // y+ and y- plus two bound slacks
    EXPECT_NE(s.find("\n1 -4\n"), std::string::npos) << s;
    EXPECT_NE(s.find("* bound 0 -1 2"), std::string::npos);
}

TEST(SdpaExport, EntriesAreUpperTriangular) {
    std::mt19937 rng(2);
    const std::string s = export_sdpa_string(random_problem(rng, 3));
    std::istringstream in(s);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '*') continue;
        if (++n <= 4) continue;
        int mat, blk, i, j;
        double v;
        std::istringstream ls(line);
        ASSERT_TRUE(ls >> mat >> blk >> i >> j >> v) << line;
        EXPECT_LE(i, j);
        EXPECT_NE(v, 0.0);
    }
}

TEST(SdpaRoundTrip, RandomProblemsBitExact) {
    std::mt19937 rng(7);
    for (int idx = 0; idx < 20; ++idx) {
        const SdpProblem p = random_problem(rng, idx);
        const SdpProblem q = import_sdpa_string(export_sdpa_string(p));
        EXPECT_TRUE(canonicalize(q) == canonicalize(p)) << "problem " << idx;
        EXPECT_EQ(export_sdpa_string(q), export_sdpa_string(p));
    }
}

TEST(SdpaRoundTrip, ThroughFile) {
    std::mt19937 rng(9);
    const SdpProblem p = random_problem(rng, 5);
    const auto path = std::filesystem::temp_directory_path() / "avgbound_roundtrip.dat-s";
    export_sdpa(p, path.string());
    const SdpProblem q = import_sdpa(path.string());
    std::filesystem::remove(path);
    EXPECT_TRUE(canonicalize(q) == canonicalize(p));
}

TEST(SdpaImport, PlainFileWithPunctuation) {
    const std::string text = "\"a comment\n2 = mDIM\n1\n{2}\n{1.0, 2.0}\n0 1 1 1 -1\n0 1 2 2 -1\n1 1 1 1 1\n2 1 2 2 1\n";
    const SdpProblem p = import_sdpa_string(text);
    ASSERT_EQ(p.blocks, std::vector<int>{2});
    ASSERT_EQ(p.equalities.size(), 2u);
    EXPECT_EQ(p.equalities[1].rhs, 2.0);
    EXPECT_TRUE(p.free_vars.empty());
}

TEST(SdpaImport, Errors) {
    EXPECT_THROW(import_sdpa_string("1\n1\n"), ConfigError);
    EXPECT_THROW(import_sdpa_string("1\n1\n1\n1\n0 1 1\n"), ConfigError);
    EXPECT_THROW(import_sdpa_string("1\n1\n1\n1\n3 1 1 1 1\n"), ConfigError);
    EXPECT_THROW(import_sdpa_string("1\n1\n1\nx\n"), ConfigError);
    EXPECT_THROW(import_sdpa("/nonexistent/dir/file.dat-s"), Error);
}

TEST(SdpaImport, SolvesSameAsOriginal) {
    SdpProblem p = toy();
    p.free_vars = {FreeVar{-1.0, 2.0}};
    p.free_cost = {1.0};
    p.equalities[0].free_coefs = {{0, 1.0}};
    const auto a = solve(p), b = solve(import_sdpa_string(export_sdpa_string(p)));
    ASSERT_EQ(a.status, SdpStatus::optimal);
    ASSERT_EQ(b.status, SdpStatus::optimal);
    EXPECT_EQ(a.primal_objective, b.primal_objective);
}
