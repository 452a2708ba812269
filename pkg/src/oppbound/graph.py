"""Transition graphs, dwell tables and greedy pattern extraction.

Vertices are pairs ``(n, i)``: level index ``n`` (1-based) after ``i`` switches.
Under a symmetry only a window of the period is represented:

* FW: ``[0, 2*pi]`` with ``k`` switches;
* HW: ``[0, pi]`` with ``k/2`` switches and terminal level ``N + 1 - n^0``;
* QW: ``[0, pi/2]`` with ``k/4`` switches starting from the middle level, or,
  with ``extended=True``, the HW-compatible window ``[0, pi]`` with ``k/2``
  switches used for damped loads.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .converter import (TWO_PI, CheckItem, ConstraintReport, LevelSet, PulsePattern, Symmetry,
                        check_symmetry, expand_pattern)
from .errors import ExtractionError, GraphMismatch, InvalidDesign

PATH_CAP = 10 ** 7


@dataclass(frozen=True)
class TransitionGraph:
    N: int
    k: int
    symmetry: Symmetry
    unipolar: bool
    extended: bool
    k_eff: int
    vertices: tuple[tuple[int, int], ...]
    edges: tuple[tuple[tuple[int, int], tuple[int, int]], ...]

    # ---------------------------------------------------------------- geometry
    @property
    def period(self) -> float:
        """Length of the represented window."""
        if self.symmetry is Symmetry.FW:
            return TWO_PI
        if self.symmetry is Symmetry.QW and not self.extended:
            return math.pi / 2
        return math.pi

    @property
    def C_sym(self) -> int:
        return int(round(TWO_PI / self.period))

    @property
    def middle(self) -> int:
        return (self.N + 1) // 2

    def mirror(self, n: int) -> int:
        return self.N + 1 - n

    @property
    def quarter(self) -> bool:
        return self.symmetry is Symmetry.QW and not self.extended

    @cached_property
    def vertex_set(self) -> frozenset:
        return frozenset(self.vertices)

    @property
    def up_edges(self):
        return tuple(e for e in self.edges if e[1][0] == e[0][0] + 1)

    @property
    def down_edges(self):
        return tuple(e for e in self.edges if e[1][0] == e[0][0] - 1)

    def stage(self, i: int) -> tuple[int, ...]:
        return tuple(n for n, j in self.vertices if j == i)

    def start_levels(self, admissible: bool = True) -> tuple[int, ...]:
        """Levels allowed at ``i = 0``; QW patterns must start at the middle level."""
        levels = self.stage(0)
        if admissible and self.symmetry is Symmetry.QW:
            return tuple(n for n in levels if n == self.middle)
        return levels

    def terminal_levels(self, n0: int) -> tuple[int, ...]:
        """Levels allowed at ``i = k_eff`` for a path starting at ``n0``."""
        last = self.stage(self.k_eff)
        if self.symmetry is Symmetry.FW:
            target = (n0,)
        elif self.quarter:
            return last
        else:
            target = (self.mirror(n0),)
        return tuple(n for n in last if n in target)

    def successors(self, v: tuple[int, int]) -> tuple[tuple[int, int], ...]:
        return self._succ.get(v, ())

    @cached_property
    def _succ(self) -> dict:
        out: dict = {}
        for a, b in self.edges:
            out.setdefault(a, []).append(b)
        return {a: tuple(sorted(bs)) for a, bs in out.items()}

    def to_dict(self) -> dict:
        return {
            "N": self.N, "k": self.k, "symmetry": self.symmetry.value, "unipolar": self.unipolar,
            "extended": self.extended, "k_eff": self.k_eff, "C_sym": self.C_sym,
            "vertex_count": len(self.vertices), "edge_count": len(self.edges),
            "up_edge_count": len(self.up_edges), "down_edge_count": len(self.down_edges),
            "vertices": [list(v) for v in self.vertices],
            "edges": [[list(a), list(b)] for a, b in self.edges],
        }


def _allowed(N: int, n: int, i: int, symmetry: Symmetry, unipolar: bool) -> bool:
    if unipolar and 2 * n < N + 1:
        return False
    if symmetry is Symmetry.QW and (n + i - (N + 1) // 2) % 2:
        return False
    return True


def build_graph(N: int, k: int, symmetry="FW", unipolar: bool = False, extended: bool = False,
                levels: LevelSet | None = None) -> TransitionGraph:
    """Build the transition graph for ``N`` levels and ``k`` switches."""
    symmetry = Symmetry.parse(symmetry)
    if N < 2:
        raise InvalidDesign("need at least two levels")
    if k < 0 or k % 2:
        raise InvalidDesign("k must be a nonnegative even integer")
    if unipolar and symmetry is Symmetry.FW:
        raise InvalidDesign("unipolarity needs HW or QW symmetry")
    if symmetry is Symmetry.QW:
        if N % 2 == 0:
            raise InvalidDesign("QW graphs need an odd level count")
        if k % 4:
            raise InvalidDesign("QW graphs need k divisible by 4")
    if extended and symmetry is not Symmetry.QW:
        raise InvalidDesign("only QW graphs have an extended form")
    if levels is not None:
        if levels.N != N:
            raise InvalidDesign("level set size does not match N")
        if symmetry is not Symmetry.FW and not levels.is_sign_symmetric():
            raise InvalidDesign("symmetric graphs need levels symmetric about zero")
        if symmetry is Symmetry.QW:
            levels.check_quarter_wave()

    if symmetry is Symmetry.FW:
        k_eff = k
    elif symmetry is Symmetry.HW or extended:
        k_eff = k // 2
    else:
        k_eff = k // 4
    vertices = [(n, i) for i in range(k_eff + 1) for n in range(1, N + 1)
                if _allowed(N, n, i, symmetry, unipolar)]
    vset = set(vertices)
    edges = []
    for n, i in vertices:
        for m in (n - 1, n + 1):
            if (m, i + 1) in vset:
                edges.append(((n, i), (m, i + 1)))
    return TransitionGraph(N, k, symmetry, unipolar, extended, k_eff, tuple(vertices), tuple(edges))


# ---------------------------------------------------------------- paths


def _path_ok_end(g: TransitionGraph, path: Sequence[int]) -> bool:
    return path[-1] in g.terminal_levels(path[0])


def count_paths(g: TransitionGraph, admissible: bool = False) -> int:
    """Number of closure-consistent paths, by dynamic programming."""
    total = 0
    for n0 in g.start_levels(admissible):
        ways = {(n0, 0): 1}
        for i in range(g.k_eff):
            nxt: dict = {}
            for v, c in ways.items():
                for w in g.successors(v):
                    nxt[w] = nxt.get(w, 0) + c
            ways = nxt
        total += sum(c for (n, _), c in ways.items() if n in g.terminal_levels(n0))
    return total


def enumerate_paths(g: TransitionGraph, admissible: bool = False,
                    cap: int = PATH_CAP) -> list[tuple[int, ...]]:
    """All closure-consistent level sequences in lexicographic order.

    FW paths return to their first level, HW paths end at its mirror and QW
    quarter paths may end anywhere.  For QW every parity-valid start is
    included unless ``admissible`` restricts to the middle level.
    """
    count = count_paths(g, admissible)
    if count > cap:
        raise InvalidDesign(f"{count} paths exceed the enumeration cap {cap}; use count_paths")
    out: list[tuple[int, ...]] = []

    def walk(path: list[int]):
        i = len(path) - 1
        if i == g.k_eff:
            if _path_ok_end(g, path):
                out.append(tuple(path))
            return
        for m, _ in g.successors((path[-1], i)):
            path.append(m)
            walk(path)
            path.pop()

    for n0 in g.start_levels(admissible):
        walk([n0])
    out.sort()
    return out


# ---------------------------------------------------------------- dwell tables


@dataclass(frozen=True)
class DwellTable:
    """Nonnegative dwell angle per vertex of a transition graph."""

    graph: TransitionGraph
    xi: Mapping[tuple[int, int], float] = field(hash=False)

    def __post_init__(self):
        clean = {}
        for (n, i), v in self.xi.items():
            key = (int(n), int(i))
            if key not in self.graph.vertex_set:
                raise GraphMismatch(f"vertex {key} is not in the graph")
            clean[key] = float(v)
        object.__setattr__(self, "xi", dict(sorted(clean.items(), key=lambda kv: (kv[0][1], kv[0][0]))))

    def __getitem__(self, v) -> float:
        return self.xi.get(tuple(v), 0.0)

    @property
    def mass(self) -> float:
        return math.fsum(self.xi.values())

    def column(self, i: int) -> float:
        return math.fsum(v for (n, j), v in self.xi.items() if j == i)

    def support(self) -> list[tuple[int, int]]:
        return [v for v, x in self.xi.items() if x > 0]

    def to_dict(self) -> dict:
        return {"graph": {"N": self.graph.N, "k": self.graph.k, "symmetry": self.graph.symmetry.value,
                          "unipolar": self.graph.unipolar, "extended": self.graph.extended},
                "entries": [[n, i, x] for (n, i), x in self.xi.items()]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "DwellTable":
        gd = data["graph"]
        g = build_graph(gd["N"], gd["k"], gd["symmetry"], gd.get("unipolar", False), gd.get("extended", False))
        return cls(g, {(int(n), int(i)): float(x) for n, i, x in data["entries"]})

    def to_csv(self) -> str:
        """Stage-by-level matrix, highest level first."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n"] + [str(i) for i in range(self.graph.k_eff + 1)])
        for n in range(self.graph.N, 0, -1):
            w.writerow([n] + ["%.17g" % self[(n, i)] for i in range(self.graph.k_eff + 1)])
        return buf.getvalue()


def _window(p: PulsePattern, g: TransitionGraph):
    """Leading levels and angles of ``p`` inside the graph window."""
    K = g.k_eff
    return p.n[: K + 1], p.alpha[:K]


def pattern_to_dwell(p: PulsePattern, g: TransitionGraph) -> DwellTable:
    """Pure dwell table of a pattern compatible with ``g``."""
    if p.k != g.k:
        raise GraphMismatch(f"pattern has k={p.k}, graph expects k={g.k}")
    if any(not 1 <= v <= g.N for v in p.n):
        raise GraphMismatch("pattern uses levels outside the graph")
    if g.symmetry is not Symmetry.FW:
        chk = check_symmetry(p, LevelSet.uniform(g.N), g.symmetry)
        if not chk.passed:
            raise GraphMismatch(f"pattern is not {g.symmetry.value}-symmetric: {chk.violations[:3]}")
    n, a = _window(p, g)
    if n[0] not in g.start_levels(True):
        raise GraphMismatch(f"level {n[0]} is not an admissible start")
    if n[-1] not in g.terminal_levels(n[0]):
        raise GraphMismatch("pattern violates the terminal rule of the graph")
    edges = [0.0] + list(a) + [g.period]
    xi: dict = {}
    for i, lvl in enumerate(n):
        v = (lvl, i)
        if v not in g.vertex_set:
            raise GraphMismatch(f"vertex {v} is not in the graph")
        if i > 0 and (v not in g.successors((n[i - 1], i - 1))):
            raise GraphMismatch(f"no edge into {v}")
        xi[v] = edges[i + 1] - edges[i]
    if any(x < 0 for x in xi.values()):
        raise GraphMismatch("window angles are not increasing")
    return DwellTable(g, xi)


def mix_dwell(tables: Sequence[DwellTable], weights: Sequence[float]) -> DwellTable:
    """Convex combination of dwell tables over one graph."""
    if len(tables) != len(weights) or not tables:
        raise InvalidDesign("need one weight per table")
    if any(w < 0 for w in weights) or abs(math.fsum(weights) - 1.0) > 1e-12:
        raise InvalidDesign("weights must be nonnegative and sum to one")
    g = tables[0].graph
    if any(t.graph != g for t in tables):
        raise GraphMismatch("tables live on different graphs")
    keys = sorted({v for t in tables for v in t.xi})
    return DwellTable(g, {v: math.fsum(w * t[v] for t, w in zip(tables, weights)) for v in keys})


def _greedy(values: Mapping, g: TransitionGraph, stages: int, final_rule: bool) -> list[int]:
    def pick(cands):
        if not cands:
            raise ExtractionError("no admissible level at some stage")
        best = max(values.get(c, 0.0) for c in cands)
        return min(c[0] for c in cands if values.get(c, 0.0) == best)

    path = [pick([(n, 0) for n in g.start_levels(True)])]
    for i in range(1, stages + 1):
        cands = [w for w in g.successors((path[-1], i - 1))]
        if final_rule and i == stages:
            allowed = g.terminal_levels(path[0])
            closing = [w for w in cands if w[0] in allowed]
            if closing:
                cands = closing
        path.append(pick(cands))
    return path


def _prefix_angles(dwells: Sequence[float], span: float) -> list[float]:
    total = math.fsum(dwells)
    if total <= 0:
        raise ExtractionError("selected path carries no dwell")
    scale = 1.0 if abs(total - span) <= 4 * math.ulp(span) else span / total
    return [scale * math.fsum(dwells[:i]) for i in range(1, len(dwells))]


def extract_pattern(xi: DwellTable, g: TransitionGraph | None = None,
                    levels: LevelSet | None = None) -> PulsePattern:
    """Greedy pattern extraction, expanded to the full period.

    The start level and each successor are chosen by largest dwell, ties going
    to the smaller level.  At the last stage, successors satisfying the
    closure rule of the graph are preferred.  Angles are normalized prefix
    sums of the selected dwells.
    """
    g = xi.graph if g is None else g
    if xi.graph != g:
        raise GraphMismatch("dwell table belongs to a different graph")
    if not any(x > 0 for x in xi.xi.values()):
        raise ExtractionError("dwell table is identically zero")
    if any(x < 0 for x in xi.xi.values()):
        raise ExtractionError("dwell tables must be nonnegative")
    levels = levels or LevelSet.uniform(g.N)
    if g.symmetry is Symmetry.QW and g.extended:
        K, d = g.k_eff, g.k_eff // 2
        sym = {(n, i): 0.5 * (xi[(n, i)] + xi[(n, K - i)]) for (n, i) in g.vertices if i <= d}
        path = _greedy(sym, g, d, final_rule=False)
        dw = [sym[(n, i)] for i, n in enumerate(path)]
        dw[-1] *= 0.5
        angles = _prefix_angles(dw, math.pi / 2)
        return _expand(path, angles, levels, Symmetry.QW)
    path = _greedy(xi.xi, g, g.k_eff, final_rule=True)
    dw = [xi[(n, i)] for i, n in enumerate(path)]
    angles = _prefix_angles(dw, g.period)
    return _expand(path, angles, levels, g.symmetry)


def _expand(path, angles, levels, symmetry) -> PulsePattern:
    if any(b <= a for a, b in zip(angles, angles[1:])) or (angles and angles[0] <= 0):
        raise ExtractionError("selected path has a zero dwell; angles would coincide")
    try:
        return expand_pattern(path, angles, levels, symmetry)
    except InvalidDesign as exc:
        raise ExtractionError(f"extracted path cannot be expanded: {exc}") from None


def validate_dwell(xi: DwellTable, theta_lock: float, tol: float = 1e-12) -> ConstraintReport:
    """Nonnegativity, total mass and interlocking column sums of a dwell table."""
    g = xi.graph
    neg = tuple(v for v, x in xi.xi.items() if x < -tol)
    items = [CheckItem("nonnegative", not neg, "", neg)]
    mass = xi.mass
    items.append(CheckItem("mass", abs(mass - g.period) <= tol * max(1.0, g.period),
                           f"{mass:.17g} vs {g.period:.17g}"))
    cols = [xi.column(i) for i in range(g.k_eff + 1)]
    bad = [(i, cols[i]) for i in range(1, g.k_eff) if cols[i] < theta_lock - tol]
    if g.k_eff > 0:
        if g.quarter:
            for i in (0, g.k_eff):
                if 2 * cols[i] < theta_lock - tol:
                    bad.append((i, 2 * cols[i]))
        else:
            if cols[0] + cols[-1] < theta_lock - tol:
                bad.append((0, cols[0] + cols[-1]))
    items.append(CheckItem("interlocking", not bad, f"theta {theta_lock:.6g}", tuple(bad)))
    return ConstraintReport(tuple(items))


def pure_table_support_ok(xi: DwellTable) -> bool:
    """At most one positive entry per stage, consecutive entries one level apart."""
    by_stage: dict = {}
    for (n, i), x in xi.xi.items():
        if x > 0:
            by_stage.setdefault(i, []).append(n)
    if any(len(v) > 1 for v in by_stage.values()):
        return False
    stages = sorted(by_stage)
    return all(abs(by_stage[b][0] - by_stage[a][0]) == 1 for a, b in zip(stages, stages[1:]) if b == a + 1)


def load_dwell_table(path) -> DwellTable:
    with open(path) as fh:
        return DwellTable.from_dict(json.load(fh))


__all__: Iterable[str] = [
    "TransitionGraph", "build_graph", "count_paths", "enumerate_paths", "DwellTable",
    "pattern_to_dwell", "mix_dwell", "extract_pattern", "validate_dwell", "pure_table_support_ok",
]
