#!/usr/bin/env python3
"""Solve an SDPA sparse file with cvxpy and print the objective as JSON.

The file is read as  max <F0,Y>  s.t.  <F_j,Y> = c_j,  Y PSD (diagonal blocks
elementwise nonnegative). The reported objective uses the avgbound sign
convention: -max <F0,Y> plus the '* constant' metadata line when present.

Exit status 3 means cvxpy (or the requested solver) is not installed.
"""

import argparse
import json
import re
import sys


def read_sdpa(path):
    constant = 0.0
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line[0] in "*\"":
                m = re.match(r"\*\s*constant\s+(\S+)", line)
                if m:
                    constant = float(m.group(1))
                continue
            tokens.append(re.sub(r"[{}(),=]", " ", line).split())
    header = [t for row in tokens[:4] for t in row]
    m = int(tokens[0][0])
    nblocks = int(tokens[1][0])
    # block sizes and c may span lines; flatten after the first two counts
    flat = [t for row in tokens[2:] for t in row]
    sizes = [int(float(x)) for x in flat[:nblocks]]
    c = [float(x) for x in flat[nblocks:nblocks + m]]
    rest = flat[nblocks + m:]
    if len(rest) % 5:
        raise ValueError("entry section is not a multiple of 5 numbers")
    entries = []
    for k in range(0, len(rest), 5):
        mat, blk, i, j = (int(float(v)) for v in rest[k:k + 4])
        entries.append((mat, blk - 1, i - 1, j - 1, float(rest[k + 4])))
    del header
    return m, sizes, c, entries, constant


def solve(path, solver):
    try:
        import cvxpy as cp
        import numpy as np
    except ImportError:
        return None

    m, sizes, c, entries, constant = read_sdpa(path)
    Y = []
    cons = []
    for n in sizes:
        if n > 0:
            v = cp.Variable((n, n), symmetric=True)
            cons.append(v >> 0)
        else:
            v = cp.Variable(-n, nonneg=True)
        Y.append(v)

    mats = [[None] * len(sizes) for _ in range(m + 1)]
    for mat, blk, i, j, val in entries:
        n = abs(sizes[blk])
        if mats[mat][blk] is None:
            mats[mat][blk] = np.zeros((n, n)) if sizes[blk] > 0 else np.zeros(n)
        M = mats[mat][blk]
        if sizes[blk] > 0:
            M[i, j] += val
            if i != j:
                M[j, i] += val
        else:
            M[i] += val

    def inner(mat):
        terms = []
        for blk, M in enumerate(mats[mat]):
            if M is None:
                continue
            if sizes[blk] > 0:
                terms.append(cp.trace(M @ Y[blk]))
            else:
                terms.append(M @ Y[blk])
        return cp.sum(cp.hstack(terms)) if terms else cp.Constant(0.0)

    for j in range(1, m + 1):
        cons.append(inner(j) == c[j - 1])
    prob = cp.Problem(cp.Maximize(inner(0)), cons)
    prob.solve(solver=solver)
    value = prob.value
    return {
        "status": prob.status,
        "solver": solver,
        "objective": (None if value is None or not np.isfinite(value) else -float(value) + constant),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("file")
    ap.add_argument("--solver", default="CLARABEL")
    args = ap.parse_args()
    try:
        out = solve(args.file, args.solver)
    except Exception as exc:  # solver missing or failed
        msg = str(exc)
        if "not installed" in msg:
            print(json.dumps({"available": False, "reason": msg}))
            return 3
        print(json.dumps({"available": True, "error": msg}))
        return 1
    if out is None:
        print(json.dumps({"available": False, "reason": "cvxpy not importable"}))
        return 3
    out["available"] = True
    print(json.dumps(out))
    return 0 if out["objective"] is not None else 1


if __name__ == "__main__":
    sys.exit(main())
