#!/usr/bin/env python3
"""Solve an exported sparse SDPA relaxation and write a CSDP-style solution.

Usage::

    python tools/solve_sdpa.py problem.dat-s solution.sol [--backend clarabel|sdpa]

Suitable for ``oppbound bound --solver "python tools/solve_sdpa.py {in} {out}"``.
With the exporter's ``.json`` sidecar present, LP rows recorded as equality
pairs are passed to the backend as equalities.  The status, objectives and
timing go to ``solution.sol.json``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from scipy import sparse

from oppbound.moment.sdpa import read_sdpa, sidecar_path, write_solution


CLARABEL_STATUS = {"Solved": "optimal", "AlmostSolved": "feasible",
                   "PrimalInfeasible": "infeasible", "AlmostPrimalInfeasible": "infeasible",
                   "DualInfeasible": "unbounded", "AlmostDualInfeasible": "unbounded"}
# sdpap reads the file as its dual, so its dual infeasibility is ours
SDPA_STATUS = {"pdOPT": "optimal", "pdFEAS": "feasible", "pFEAS_dINF": "infeasible",
               "pINF_dFEAS": "unbounded", "pdINF": "infeasible"}


def _block_offsets(struct):
    offs, pos = [], 0
    for b in struct:
        offs.append(pos)
        pos += -b if b < 0 else b * (b + 1) // 2
    return offs, pos


def independent_rows(A_eq, b_eq, rtol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal independent subset of consistent equality rows (pivoted QR)."""
    from scipy.linalg import qr

    dense = A_eq.toarray()
    _, R, piv = qr(np.column_stack([dense, b_eq]).T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if diag.size else 0
    keep = np.sort(piv[:rank])
    _, R0, _ = qr(dense[keep].T, mode="economic", pivoting=True)
    d0 = np.abs(np.diag(R0))
    if int(np.sum(d0 > rtol * d0[0])) < rank:
        raise SystemExit("equality rows are inconsistent")
    return keep


def solve_clarabel(data, equality_pairs: int, verbose: bool = False):
    import clarabel

    struct = data.block_struct
    offs, total = _block_offsets(struct)
    lp = -struct[0] if struct[0] < 0 else 0
    # cone row of every (block, i, j) entry; PSD blocks use column-stacked upper triangles
    rows = np.empty(len(data.val), dtype=np.int64)
    scale = np.ones(len(data.val))
    for b, size in enumerate(struct, start=1):
        sel = data.blk == b
        i, j = data.row[sel] - 1, data.col[sel] - 1
        if size < 0:
            rows[sel] = offs[b - 1] + i
        else:
            lo, hi = np.minimum(i, j), np.maximum(i, j)
            rows[sel] = offs[b - 1] + hi * (hi + 1) // 2 + lo
            scale[sel] = np.where(lo == hi, 1.0, np.sqrt(2.0))
    vals = data.val * scale
    is_const = data.mat == 0
    b_vec = np.zeros(total)
    np.add.at(b_vec, rows[is_const], -vals[is_const])
    A = sparse.csc_matrix((-vals[~is_const], (rows[~is_const], data.mat[~is_const] - 1)), shape=(total, data.m))

    # reorder: equalities first (one row per pair), then the remaining LP rows, then PSD rows
    # the negated twin of each equality pair is dropped
    eq_rows = np.arange(0, 2 * equality_pairs, 2) if lp else np.array([], dtype=np.int64)
    rest_lp = np.arange(2 * equality_pairs if lp else 0, lp)
    order = np.concatenate([eq_rows, rest_lp, np.arange(lp, total)]).astype(np.int64)
    A = A[order, :]
    b_vec = b_vec[order]
    if len(eq_rows):
        keep = independent_rows(A[: len(eq_rows)], b_vec[: len(eq_rows)])
        order = np.concatenate([keep, np.arange(len(eq_rows), A.shape[0])])
        A, b_vec = A[order, :], b_vec[order]
        eq_rows = keep
    cones = []
    if len(eq_rows):
        cones.append(clarabel.ZeroConeT(len(eq_rows)))
    if len(rest_lp):
        cones.append(clarabel.NonnegativeConeT(len(rest_lp)))
    cones += [clarabel.PSDTriangleConeT(s) for s in struct if s > 0]
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_gap_abs = 1e-9
    settings.tol_gap_rel = 1e-9
    settings.tol_feas = 1e-9
    P = sparse.csc_matrix((data.m, data.m))
    result = clarabel.DefaultSolver(P, data.c, A.tocsc(), b_vec, cones, settings).solve()
    status = str(result.status)
    mapped = CLARABEL_STATUS.get(status, status)
    return np.array(result.x), {"status": mapped, "backend_status": status,
                                "primal_objective": float(result.obj_val),
                                "dual_objective": float(getattr(result, "obj_val_dual", result.obj_val))}


def solve_sdpa(path):
    import sdpap

    A, b, c, K, J = sdpap.importsdpa(str(path))
    x, y, info, _, _ = sdpap.solve(A, b, c, K, J, {"print": "no"})
    status = str(info.get("phasevalue", "unknown"))
    mapped = SDPA_STATUS.get(status, status)
    # sdpap treats the file as its dual form: our x is its y, with objectives negated
    y = y.toarray() if sparse.issparse(y) else np.asarray(y)
    return y.ravel(), {"status": mapped, "backend_status": status,
                       "primal_objective": -float(info["primalObj"]),
                       "dual_objective": -float(info["dualObj"])}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problem")
    ap.add_argument("solution")
    ap.add_argument("--backend", choices=("clarabel", "sdpa"), default="clarabel")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)
    data = read_sdpa(args.problem)
    side = sidecar_path(args.problem)
    pairs = json.loads(side.read_text())["lp_block"]["equality_pairs"] if side.exists() else 0
    t0 = time.perf_counter()
    if args.backend == "clarabel":
        x, info = solve_clarabel(data, pairs, args.verbose)
    else:
        x, info = solve_sdpa(args.problem)
    info["seconds"] = time.perf_counter() - t0
    info["backend"] = args.backend
    write_solution(args.solution, x, info.pop("status"), info.pop("primal_objective"),
                   info.pop("dual_objective"), extra=info)
    print(json.dumps({"status": json.loads(sidecar_path(args.solution).read_text())["status"],
                      "objective": float(data.c @ x), "seconds": round(info["seconds"], 3)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
