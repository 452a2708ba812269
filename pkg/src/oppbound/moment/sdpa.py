"""Sparse SDPA interchange: export of a relaxation, parsing, and solution import.

The exported program is ``min c^T x  s.t.  sum_i x_i F_i - F_0 >= 0`` with one
diagonal (LP) block first, followed by the moment and localizing matrices of
side length at least two.  The LP block holds, in order:

* each equality row ``a x = b`` as the pair ``a x - b >= 0``, ``b - a x >= 0``;
* each harmonic box ``lo <= a x <= hi`` as two rows;
* every 1x1 localizing block.

A JSON sidecar next to the file records this layout and maps each variable to
its slot and exponent tuple, so that solvers can treat equality pairs as
equalities and results can be mapped back onto slots.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import SolutionFormatError
from .construct import PseudoMomentSolution
from .problem import SdpProblem

FORMAT_VERSION = 1


@dataclass
class SdpaData:
    """Parsed sparse SDPA problem; ``entries`` rows are (matrix, block, i, j, value), 1-based."""

    m: int
    block_struct: list[int]
    c: np.ndarray
    mat: np.ndarray
    blk: np.ndarray
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.val)

    def block_dims(self) -> list[int]:
        return [abs(b) for b in self.block_struct]


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _lp_layout(prob: SdpProblem):
    scalar = [b for b in prob.blocks if b.size == 1]
    matrices = [b for b in prob.blocks if b.size > 1]
    return scalar, matrices


def to_sdpa(prob: SdpProblem) -> SdpaData:
    """Assemble the SDPA data arrays of ``prob`` in a deterministic order."""
    scalar, matrices = _lp_layout(prob)
    n_eq, n_box = prob.A_eq.shape[0], prob.A_box.shape[0]
    n_lp = 2 * n_eq + 2 * n_box + len(scalar)
    mats, blks, rows, cols, vals = [], [], [], [], []

    def emit(mat, blk, r, c, v):
        mats.append(np.asarray(mat, dtype=np.int64))
        blks.append(np.full(len(v), blk, dtype=np.int64))
        rows.append(np.asarray(r, dtype=np.int64))
        cols.append(np.asarray(c, dtype=np.int64))
        vals.append(np.asarray(v, dtype=float))

    def lp_rows(A, offset, b, sign):
        A = A.tocoo()
        diag = offset + 2 * A.row + (0 if sign > 0 else 1) + 1
        emit(A.col + 1, 1, diag, diag, sign * A.data)
        nz = np.nonzero(b)[0]
        diag0 = offset + 2 * nz + (0 if sign > 0 else 1) + 1
        emit(np.zeros(len(nz)), 1, diag0, diag0, sign * b[nz])

    lp_rows(prob.A_eq, 0, prob.b_eq, 1.0)
    lp_rows(prob.A_eq, 0, prob.b_eq, -1.0)
    lp_rows(prob.A_box, 2 * n_eq, prob.box_lo, 1.0)
    lp_rows(prob.A_box, 2 * n_eq, prob.box_hi, -1.0)
    base = 2 * n_eq + 2 * n_box
    for j, b in enumerate(scalar):
        d = np.full(len(b.vars), base + j + 1)
        emit(b.vars + 1, 1, d, d, b.coefs)
    for k, b in enumerate(matrices):
        emit(b.vars + 1, k + 2, b.rows + 1, b.cols + 1, b.coefs)

    mat = np.concatenate(mats)
    blk = np.concatenate(blks)
    row = np.concatenate(rows)
    col = np.concatenate(cols)
    val = np.concatenate(vals)
    # merge duplicates and sort lexicographically for byte-stable files
    keys = np.stack([mat, blk, row, col])
    uniq, inv = np.unique(keys, axis=1, return_inverse=True)
    summed = np.zeros(uniq.shape[1])
    np.add.at(summed, inv.ravel(), val)
    keep = summed != 0
    uniq, summed = uniq[:, keep], summed[keep]
    return SdpaData(m=prob.n_vars, block_struct=[-n_lp] + [b.size for b in matrices],
                    c=prob.objective.copy(), mat=uniq[0], blk=uniq[1], row=uniq[2], col=uniq[3], val=summed)


def write_sdpa(data: SdpaData, path, comment: str = "") -> None:
    lines = [f'"{comment}' if comment else '"sparse SDPA problem', str(data.m), str(len(data.block_struct)),
             " ".join(str(b) for b in data.block_struct),
             " ".join("%.17g" % v for v in data.c)]
    for q in range(len(data.val)):
        lines.append("%d %d %d %d %.17g" % (data.mat[q], data.blk[q], data.row[q], data.col[q], data.val[q]))
    Path(path).write_text("\n".join(lines) + "\n")


def _numbers(text: str) -> list[float]:
    return [float(t) for t in re.split(r"[\s,{}()]+", text) if t]


def read_sdpa(path) -> SdpaData:
    """Parse a sparse SDPA file (comments start with ``"`` or ``*``)."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise SolutionFormatError(f"cannot read {path}: {exc}") from None
    body = [ln for ln in raw.splitlines() if ln.strip() and ln.lstrip()[0] not in '"*']
    try:
        m = int(_numbers(body[0])[0])
        nblk = int(_numbers(body[1])[0])
        struct = [int(v) for v in _numbers(body[2])[:nblk]]
        rest = _numbers("\n".join(body[3:]))
        c = np.array(rest[:m])
        tail = np.array(rest[m:]).reshape(-1, 5)
    except (IndexError, ValueError) as exc:
        raise SolutionFormatError(f"{path} is not a sparse SDPA file: {exc}") from None
    if len(c) != m or len(struct) != nblk:
        raise SolutionFormatError(f"{path}: header does not match the data")
    ints = tail[:, :4].astype(np.int64)
    return SdpaData(m, struct, c, ints[:, 0], ints[:, 1], ints[:, 2], ints[:, 3], tail[:, 4])


def sidecar(prob: SdpProblem) -> dict:
    scalar, matrices = _lp_layout(prob)
    variables = []
    for s in prob.slots:
        for e in prob.basis(s):
            variables.append([s.index, list(e)])
    return {
        "format_version": FORMAT_VERSION,
        "problem": prob.summary(),
        "sense": "minimize c^T x subject to sum_i x_i F_i - F_0 PSD",
        "lp_block": {"equality_pairs": int(prob.A_eq.shape[0]), "box_pairs": int(prob.A_box.shape[0]),
                     "scalar_blocks": [b.name for b in scalar]},
        "equality_labels": prob.eq_labels,
        "box_labels": prob.box_labels,
        "matrix_blocks": [{"block": k + 2, "name": b.name, "size": b.size} for k, b in enumerate(matrices)],
        "slots": [{"index": s.index, "name": s.name, "kind": s.kind, "key": _plain(s.key),
                   "states": list(s.states), "offset": s.offset, "size": s.size,
                   "support": s.support(prob.theta_lock, prob.phi_scale)} for s in prob.slots],
        "variables": variables,
    }


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def export_interchange(prob: SdpProblem, path, write_sidecar: bool = True) -> dict:
    """Write ``prob`` as sparse SDPA (plus ``<path>.json``); returns size information."""
    data = to_sdpa(prob)
    g = prob.graph
    write_sdpa(data, path, comment=f"OPP moment relaxation beta={prob.beta} N={g.N} k={g.k} "
                                    f"{g.symmetry.value} tau={prob.tau:.17g}")
    if write_sidecar:
        sidecar_path(path).write_text(json.dumps(sidecar(prob), indent=1) + "\n")
    return {"path": str(path), "m": data.m, "blocks": len(data.block_struct), "nnz": data.nnz,
            "bytes": Path(path).stat().st_size, "block_struct": data.block_struct}


# ---------------------------------------------------------------- solutions


def write_solution(path, x, status: str | None = None, primal_objective: float | None = None,
                   dual_objective: float | None = None, extra: dict | None = None) -> None:
    """CSDP-style solution file: first line is ``x``; an optional ``<path>.json`` holds the status."""
    Path(path).write_text(" ".join("%.17g" % v for v in np.asarray(x, dtype=float)) + "\n")
    if status is not None:
        info = {"status": status, "primal_objective": primal_objective, "dual_objective": dual_objective}
        info.update(extra or {})
        sidecar_path(path).write_text(json.dumps(info, indent=1) + "\n")


def _parse_sdpa_out(text: str) -> tuple[np.ndarray, dict]:
    m = re.search(r"xVec\s*=\s*\{([^}]*)\}", text)
    if not m:
        raise SolutionFormatError("SDPA output has no xVec")
    info: dict = {"status": "unknown"}
    phase = re.search(r"phase\.value\s*=\s*(\w+)", text)
    if phase:
        info["status"] = {"pdOPT": "optimal", "pFEAS": "feasible", "pdFEAS": "feasible"}.get(
            phase.group(1), phase.group(1))
    for key, name in (("objValPrimal", "primal_objective"), ("objValDual", "dual_objective")):
        v = re.search(key + r"\s*=\s*([-+0-9.eE]+)", text)
        if v:
            info[name] = float(v.group(1))
    return np.array(_numbers(m.group(1))), info


def import_solution(path, prob: SdpProblem) -> PseudoMomentSolution:
    """Read a CSDP-style or SDPA ``.out`` solution of ``prob``'s export."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SolutionFormatError(f"cannot read {path}: {exc}") from None
    if "xVec" in text:
        x, info = _parse_sdpa_out(text)
    else:
        first = text.splitlines()[0] if text.strip() else ""
        try:
            x = np.array(_numbers(first))
        except ValueError:
            raise SolutionFormatError(f"{path}: first line is not a numeric vector") from None
        info = {"status": "unknown"}
        side = sidecar_path(path)
        if side.exists():
            try:
                info.update(json.loads(side.read_text()))
            except json.JSONDecodeError as exc:
                raise SolutionFormatError(f"{side}: {exc}") from None
    if x.shape != (prob.n_vars,):
        raise SolutionFormatError(f"solution has {x.size} entries, the problem has {prob.n_vars} variables")
    if not np.all(np.isfinite(x)):
        raise SolutionFormatError("solution contains non-finite values")
    primal = info.get("primal_objective")
    return PseudoMomentSolution(prob, x, status=str(info.get("status", "unknown")),
                                primal_objective=prob.objective_value(x) if primal is None else float(primal),
                                dual_objective=None if info.get("dual_objective") is None
                                else float(info["dual_objective"]))


def duality_gap(sol: PseudoMomentSolution) -> float:
    if sol.primal_objective is None or sol.dual_objective is None:
        return math.nan
    return abs(sol.primal_objective - sol.dual_objective)
