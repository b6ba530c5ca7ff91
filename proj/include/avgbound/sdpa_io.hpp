#pragma once

// SDPA sparse (".dat-s") export and import.
//
// Our equality form  min <C,X> + d^T y  s.t.  <A_j,X> + a_j^T y = b_j  maps to
// SDPA's dual side  max <F0,Y>  s.t.  <F_j,Y> = c_j  with F_j = A_j, c = b,
// F0 = -C. Free variables are split as y = y+ - y- inside one trailing
// diagonal block; finite bounds add slack rows in the same block. Comment
// lines starting with '*' carry the metadata needed to rebuild the original
// problem, so import(export(p)) reproduces p exactly. Plain SDPA files without
// that metadata import as pure cone problems.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "avgbound/error.hpp"
#include "avgbound/polynomial.hpp"
#include "avgbound/sdp.hpp"

namespace avgbound {

/// Sorts entries and merges duplicates so that equal problems compare equal.
inline SdpProblem canonicalize(SdpProblem p) {
    auto canon_entries = [](std::vector<BlockEntry>& v) {
        std::map<std::tuple<int, int, int>, double> acc;
        for (const auto& e : v) acc[{e.block, e.row, e.col}] += e.value;
        v.clear();
        for (const auto& [key, val] : acc)
            if (val != 0.0) v.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), val});
    };
    canon_entries(p.cost);
    for (auto& eq : p.equalities) {
        canon_entries(eq.entries);
        std::map<int, double> acc;
        for (const auto& [i, c] : eq.free_coefs) acc[i] += c;
        eq.free_coefs.clear();
        for (const auto& [i, c] : acc)
            if (c != 0.0) eq.free_coefs.push_back({i, c});
    }
    return p;
}

namespace detail {

inline std::string sdpa_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return format_double(v);
}

inline double sdpa_parse_number(const std::string& tok, std::size_t line) {
    if (tok == "inf" || tok == "+inf") return kInf;
    if (tok == "-inf") return -kInf;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw ConfigError("bad number '" + tok + "'", line);
    return v;
}

} // namespace detail

inline std::string export_sdpa_string(const SdpProblem& problem) {
    problem.validate();
    const SdpProblem p = canonicalize(problem);
    const int nblocks_user = static_cast<int>(p.blocks.size());
    const int nfree = static_cast<int>(p.free_vars.size());
    std::vector<int> bounded_lo, bounded_hi;
    for (int i = 0; i < nfree; ++i) {
        if (std::isfinite(p.free_vars[i].lo)) bounded_lo.push_back(i);
        if (std::isfinite(p.free_vars[i].hi)) bounded_hi.push_back(i);
    }
    const int nslack = static_cast<int>(bounded_lo.size() + bounded_hi.size());
    const int lp_size = 2 * nfree + nslack;
    const int m0 = static_cast<int>(p.equalities.size());
    const int m = m0 + nslack;
    const int lp_block = nblocks_user + 1; // 1-based

    std::ostringstream out;
    // metadata only when the plain cone form would lose information
    if (nfree > 0 || p.objective_constant != 0.0) out << "* avgbound sdpa export\n";
    if (p.objective_constant != 0.0) out << "* constant " << detail::sdpa_number(p.objective_constant) << "\n";
    if (nfree > 0) {
        out << "* free " << nfree << " " << lp_block << "\n";
        for (int i = 0; i < nfree; ++i)
            if (std::isfinite(p.free_vars[i].lo) || std::isfinite(p.free_vars[i].hi))
                out << "* bound " << i << " " << detail::sdpa_number(p.free_vars[i].lo) << " "
                    << detail::sdpa_number(p.free_vars[i].hi) << "\n";
    }
    out << m << "\n";
    out << nblocks_user + (lp_size > 0 ? 1 : 0) << "\n";
    for (int k = 0; k < nblocks_user; ++k) out << (k ? " " : "") << p.blocks[k];
    if (lp_size > 0) out << (nblocks_user ? " " : "") << -lp_size;
    out << "\n";
    std::vector<double> rhs;
    for (const auto& eq : p.equalities) rhs.push_back(eq.rhs);
    for (int i : bounded_lo) rhs.push_back(p.free_vars[i].lo);
    for (int i : bounded_hi) rhs.push_back(p.free_vars[i].hi);
    for (int j = 0; j < m; ++j) out << (j ? " " : "") << detail::sdpa_number(rhs[j]);
    out << "\n";

    auto line = [&](int matno, int blk, int i, int j, double v) {
        out << matno << " " << blk << " " << i << " " << j << " " << detail::sdpa_number(v) << "\n";
    };
    for (const auto& e : p.cost) line(0, e.block + 1, e.row + 1, e.col + 1, -e.value);
    for (int i = 0; i < nfree; ++i) {
        const double d = p.free_cost[i];
        if (d == 0.0) continue;
        line(0, lp_block, 2 * i + 1, 2 * i + 1, -d);
        line(0, lp_block, 2 * i + 2, 2 * i + 2, d);
    }
    for (int j = 0; j < m0; ++j) {
        const auto& eq = p.equalities[j];
        for (const auto& e : eq.entries) line(j + 1, e.block + 1, e.row + 1, e.col + 1, e.value);
        for (const auto& [i, c] : eq.free_coefs) {
            line(j + 1, lp_block, 2 * i + 1, 2 * i + 1, c);
            line(j + 1, lp_block, 2 * i + 2, 2 * i + 2, -c);
        }
    }
    int row = m0 + 1;
    int slack = 2 * nfree + 1;
    for (int i : bounded_lo) {
        // y+ - y- - s = lo
        line(row, lp_block, 2 * i + 1, 2 * i + 1, 1.0);
        line(row, lp_block, 2 * i + 2, 2 * i + 2, -1.0);
        line(row, lp_block, slack, slack, -1.0);
        ++row;
        ++slack;
    }
    for (int i : bounded_hi) {
        // y+ - y- + s = hi
        line(row, lp_block, 2 * i + 1, 2 * i + 1, 1.0);
        line(row, lp_block, 2 * i + 2, 2 * i + 2, -1.0);
        line(row, lp_block, slack, slack, 1.0);
        ++row;
        ++slack;
    }
    return out.str();
}

inline void export_sdpa(const SdpProblem& problem, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    f << export_sdpa_string(problem);
    if (!f) throw Error("write failed for '" + path + "'");
}

inline SdpProblem import_sdpa_string(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    double constant = 0.0;
    int nfree = 0, lp_block = -1;
    std::map<int, FreeVar> bounds;
    std::vector<std::string> body;
    std::vector<std::size_t> body_lines;
    while (std::getline(in, raw)) {
        ++lineno;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (raw.empty()) continue;
        if (raw[0] == '*' || raw[0] == '"') {
            std::istringstream ls(raw.substr(1));
            std::string key;
            ls >> key;
            if (key == "constant") {
                std::string v;
                ls >> v;
                constant = detail::sdpa_parse_number(v, lineno);
            } else if (key == "free") {
                ls >> nfree >> lp_block;
            } else if (key == "bound") {
                int i;
                std::string lo, hi;
                ls >> i >> lo >> hi;
                bounds[i] = {detail::sdpa_parse_number(lo, lineno), detail::sdpa_parse_number(hi, lineno)};
            }
            continue;
        }
        // SDPA tolerates punctuation in header lines
        for (char& c : raw)
            if (c == ',' || c == '{' || c == '}' || c == '(' || c == ')') c = ' ';
        body.push_back(raw);
        body_lines.push_back(lineno);
    }
    if (body.size() < 4) throw ConfigError("SDPA file too short", lineno);

    auto tokens = [](const std::string& s) {
        std::istringstream ls(s);
        std::vector<std::string> t;
        std::string w;
        while (ls >> w) t.push_back(w);
        return t;
    };
    const int m = std::stoi(tokens(body[0]).at(0));
    const int nblocks = std::stoi(tokens(body[1]).at(0));
    std::vector<int> blocks;
    for (const auto& t : tokens(body[2])) blocks.push_back(std::stoi(t));
    if (static_cast<int>(blocks.size()) < nblocks) throw ConfigError("block structure too short", body_lines[2]);
    blocks.resize(nblocks);
    std::vector<double> rhs;
    std::size_t li = 3;
    while (static_cast<int>(rhs.size()) < m) {
        if (li >= body.size()) throw ConfigError("right-hand side too short", body_lines.back());
        for (const auto& t : tokens(body[li])) rhs.push_back(detail::sdpa_parse_number(t, body_lines[li]));
        ++li;
    }

    struct Raw {
        int mat, blk, i, j;
        double v;
    };
    std::vector<Raw> entries;
    for (; li < body.size(); ++li) {
        const auto t = tokens(body[li]);
        if (t.size() < 5) throw ConfigError("entry line needs 5 fields", body_lines[li]);
        Raw r{std::stoi(t[0]), std::stoi(t[1]), std::stoi(t[2]), std::stoi(t[3]),
              detail::sdpa_parse_number(t[4], body_lines[li])};
        if (r.mat < 0 || r.mat > m || r.blk < 1 || r.blk > nblocks)
            throw ConfigError("entry index out of range", body_lines[li]);
        if (r.i > r.j) std::swap(r.i, r.j);
        entries.push_back(r);
    }

    SdpProblem p;
    p.objective_constant = constant;
    const bool has_free = nfree > 0 && lp_block >= 1 && lp_block <= nblocks;
    const int nslack = static_cast<int>(std::count_if(bounds.begin(), bounds.end(), [](const auto& kv) {
        return std::isfinite(kv.second.lo);
    })) + static_cast<int>(std::count_if(bounds.begin(), bounds.end(), [](const auto& kv) {
        return std::isfinite(kv.second.hi);
    }));
    const int m0 = has_free ? m - nslack : m;
    for (int k = 0; k < nblocks; ++k)
        if (!(has_free && k + 1 == lp_block)) p.blocks.push_back(blocks[k]);
    auto user_block = [&](int blk) { return has_free && blk > lp_block ? blk - 2 : blk - 1; };
    if (has_free) {
        p.free_vars.assign(nfree, FreeVar{});
        for (const auto& [i, fv] : bounds) p.free_vars.at(i) = fv;
        p.free_cost.assign(nfree, 0.0);
    }
    p.equalities.resize(m0);
    for (int j = 0; j < m0; ++j) p.equalities[j].rhs = rhs[j];
    for (const auto& r : entries) {
        if (has_free && r.blk == lp_block) {
            // only the y+ column carries information; y- and slacks are implied
            if (r.i > 2 * nfree || r.i % 2 == 0) continue;
            const int var = (r.i - 1) / 2;
            if (r.mat == 0)
                p.free_cost[var] += -r.v;
            else if (r.mat <= m0)
                p.equalities[r.mat - 1].free_coefs.push_back({var, r.v});
            continue;
        }
        if (has_free && r.mat > m0) continue;
        const BlockEntry e{user_block(r.blk), r.i - 1, r.j - 1, r.mat == 0 ? -r.v : r.v};
        if (r.mat == 0)
            p.cost.push_back(e);
        else
            p.equalities[r.mat - 1].entries.push_back(e);
    }
    p = canonicalize(std::move(p));
    p.validate();
    return p;
}

inline SdpProblem import_sdpa(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return import_sdpa_string(ss.str());
}

} // namespace avgbound
