"""Assembly of the degree-beta moment relaxation over a transition graph.

Measure slots (in this order):

* ``initial``   -- one per admissible start level, states ``(phi, I)``;
* ``terminal``  -- only for quarter-wave windows (or unshared FW), ``(phi, I)``;
* ``occupation``-- one per graph vertex, states ``(c, s, phi, I)``;
* ``step_up`` / ``step_down`` -- one per edge, states ``(c, s, phi, I)``.

``phi`` is the time since the last switch and ``I`` the pulse current.  Both
are rescaled to ``phi / phi_max`` and ``I / I_bound`` so that every support
box becomes ``[0, 1]`` or ``[-1, 1]``; this only changes the units of the
pseudomoments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from ..converter import DesignSpec, DeviceSpec, LevelSet, LoadModel, Symmetry
from ..errors import ConfigurationError
from ..graph import TransitionGraph
from .polynomial import (_lie_parts, harmonic_poly, monomials, reduce_monomial, trig_moment)

STATE_NAMES = {2: ("phi", "I"), 4: ("c", "s", "phi", "I")}


@dataclass(frozen=True)
class MeasureSlot:
    index: int
    kind: str
    key: tuple
    nvars: int
    offset: int
    size: int
    arc: tuple[float, float] | None
    phi_range: tuple[float, float]

    @property
    def states(self) -> tuple[str, ...]:
        return STATE_NAMES[self.nvars]

    @property
    def name(self) -> str:
        if self.kind in ("initial", "terminal"):
            return f"{self.kind}[{self.key[0]}]"
        if self.kind == "occupation":
            return f"occupation[{self.key[0]},{self.key[1]}]"
        (n, i), (m, j) = self.key
        return f"{self.kind}[{n},{i}->{m},{j}]"

    @property
    def vars(self) -> slice:
        return slice(self.offset, self.offset + self.size)

    def support(self, theta: float, phi_scale: float) -> list[str]:
        out = []
        if self.arc is not None:
            out.append(f"theta in [{self.arc[0]:.17g}, {self.arc[1]:.17g}]")
        out.append(f"phi in [{self.phi_range[0]:.17g}, {self.phi_range[1]:.17g}]")
        out.append("|I| <= I_bound")
        return out


@dataclass
class PsdBlock:
    """Symmetric matrix ``sum_j x_j F_j`` stored by its upper-triangle entries."""

    name: str
    slot: int
    size: int
    rows: np.ndarray
    cols: np.ndarray
    vars: np.ndarray
    coefs: np.ndarray

    def matrix(self, x: np.ndarray) -> np.ndarray:
        M = np.zeros((self.size, self.size))
        np.add.at(M, (self.rows, self.cols), self.coefs * x[self.vars])
        off = self.rows != self.cols
        upper = np.zeros_like(M)
        np.add.at(upper, (self.rows[off], self.cols[off]), self.coefs[off] * x[self.vars[off]])
        return M + upper.T


@dataclass
class SdpProblem:
    """Degree-beta relaxation: PSD blocks, linear rows and a linear objective."""

    graph: TransitionGraph
    levels: LevelSet
    beta: int
    tau: float
    theta_lock: float
    C_sym: int
    phi_scale: float
    I_bound: float
    share_terminal: bool
    slots: list[MeasureSlot]
    bases: dict
    blocks: list[PsdBlock]
    A_eq: sparse.csr_matrix
    b_eq: np.ndarray
    eq_labels: list[str]
    A_box: sparse.csr_matrix
    box_lo: np.ndarray
    box_hi: np.ndarray
    box_labels: list[str]
    objective: np.ndarray
    skipped: list[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    @property
    def max_block_size(self) -> int:
        return max(b.size for b in self.blocks)

    def slot(self, kind: str, key) -> MeasureSlot:
        key = tuple(key) if not isinstance(key, tuple) else key
        for s in self.slots:
            if s.kind == kind and s.key == key:
                return s
        raise KeyError((kind, key))

    def slots_of(self, kind: str) -> list[MeasureSlot]:
        return [s for s in self.slots if s.kind == kind]

    def basis(self, slot: MeasureSlot):
        return self.bases[slot.nvars]

    def eq_residual(self, x) -> np.ndarray:
        return self.A_eq @ x - self.b_eq

    def box_violation(self, x) -> np.ndarray:
        v = self.A_box @ x
        return np.maximum(self.box_lo - v, 0) + np.maximum(v - self.box_hi, 0)

    def min_eigenvalues(self, x) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(b.matrix(x))[0] for b in self.blocks])

    def objective_value(self, x) -> float:
        return float(self.objective @ x)

    def summary(self) -> dict:
        sizes: dict = {}
        for b in self.blocks:
            sizes[b.size] = sizes.get(b.size, 0) + 1
        return {
            "beta": self.beta, "C_sym": self.C_sym, "tau": self.tau, "theta_lock": self.theta_lock,
            "graph": {k: v for k, v in self.graph.to_dict().items() if k not in ("vertices", "edges")},
            "n_vars": self.n_vars, "n_slots": len(self.slots),
            "slot_counts": {k: len(self.slots_of(k)) for k in
                            ("initial", "terminal", "occupation", "step_up", "step_down")},
            "n_blocks": len(self.blocks), "max_block_size": self.max_block_size,
            "block_sizes": {str(k): v for k, v in sorted(sizes.items())},
            "n_equalities": int(self.A_eq.shape[0]), "n_boxes": int(self.A_box.shape[0]),
            "phi_scale": self.phi_scale, "I_bound": self.I_bound, "skipped_harmonics": list(self.skipped),
        }


# ---------------------------------------------------------------- templates


def _index(nvars: int, beta: int) -> dict:
    return {m: j for j, m in enumerate(monomials(nvars, 2 * beta, nvars == 4))}


@lru_cache(maxsize=None)
def _template(nvars: int, beta: int, order: int, gamma: tuple[int, ...]):
    """Entries of ``M_order[x^gamma y]``: rows, cols, basis index, coefficient (upper triangle)."""
    circle = nvars == 4
    half = monomials(nvars, order, circle)
    idx = _index(nvars, beta)
    rows, cols, ids, coefs = [], [], [], []
    for p, mp in enumerate(half):
        for q in range(p, len(half)):
            e = tuple(a + b + g for a, b, g in zip(mp, half[q], gamma))
            for red, c in (reduce_monomial(e) if circle else ((e, 1.0),)):
                rows.append(p)
                cols.append(q)
                ids.append(idx[red])
                coefs.append(c)
    return (len(half), np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
            np.array(ids, dtype=np.int64), np.array(coefs))


def _block(name: str, slot: MeasureSlot, beta: int, order: int, poly: dict) -> PsdBlock:
    rows, cols, ids, coefs = [], [], [], []
    size = None
    for gamma, g in poly.items():
        if g == 0:
            continue
        size, r, c, i, v = _template(slot.nvars, beta, order, gamma)
        rows.append(r)
        cols.append(c)
        ids.append(i + slot.offset)
        coefs.append(v * g)
    if size is None:
        size = _template(slot.nvars, beta, order, (0,) * slot.nvars)[0]
    return PsdBlock(name, slot.index, size, np.concatenate(rows), np.concatenate(cols),
                    np.concatenate(ids), np.concatenate(coefs))


@lru_cache(maxsize=None)
def _lie_matrices(beta: int, tau: float, phi_scale: float, I_scale: float):
    """Sparse ``drift`` and ``forcing`` matrices with ``L_u w = (drift + u*forcing) w``."""
    basis = monomials(4, 2 * beta, True)
    idx = _index(4, beta)
    out = []
    for part in (0, 1):
        r, c, v = [], [], []
        for j, m in enumerate(basis):
            for e, coef in _lie_parts(m, tau, phi_scale, I_scale)[part].items():
                r.append(j)
                c.append(idx[e])
                v.append(coef)
        out.append(sparse.csr_matrix((v, (r, c)), shape=(len(basis), len(basis))))
    return tuple(out)


@lru_cache(maxsize=None)
def _reset_matrix(beta: int):
    basis = monomials(4, 2 * beta, True)
    keep = [j for j, m in enumerate(basis) if m[2] == 0]
    return sparse.csr_matrix((np.ones(len(keep)), (keep, keep)), shape=(len(basis), len(basis)))


@lru_cache(maxsize=None)
def _evaluation_matrix(beta: int, cs: tuple[int, int], flip: bool):
    """``w(c0, s0, phi, +-I)`` as a map from a clock slot's moments to rows indexed by ``w``."""
    basis = monomials(4, 2 * beta, True)
    idx2 = _index(2, beta)
    r, c, v = [], [], []
    for j, (a, b, p, q) in enumerate(basis):
        val = cs[0] ** a * cs[1] ** b
        if val == 0:
            continue
        if flip and q % 2:
            val = -val
        r.append(j)
        c.append(idx2[(p, q)])
        v.append(float(val))
    return sparse.csr_matrix((v, (r, c)), shape=(len(basis), len(idx2)))


# ---------------------------------------------------------------- assembly


def default_current_bound(levels: LevelSet, symmetry: Symmetry, tau: float) -> float:
    """A priori bound on ``|I|`` over every periodic pulse current with these levels.

    With ``|u| <= U`` a damped periodic current stays within ``U / tau``; half-wave
    antisymmetry ``I(t + pi) = -I(t)`` tightens this to ``(U / tau) tanh(tau pi / 2)``
    (``U pi / 2`` when lossless).  A lossless FW current has zero mean and total
    variation at most ``2 pi U``, hence ``|I| <= pi U``.
    """
    U = max(abs(v) for v in levels.levels)
    if symmetry is Symmetry.FW:
        return U / tau if tau > 0 else math.pi * U
    if tau > 0:
        return U * math.tanh(0.5 * math.pi * tau) / tau
    return 0.5 * math.pi * U


def _window_geometry(g: TransitionGraph, theta: float):
    K = g.k_eff
    P = g.period
    offset = 0.5 * theta if g.symmetry is Symmetry.QW else 0.0

    def sw_lo(i):
        return offset + (i - 1) * theta

    def sw_hi(i):
        return P - offset - (K - i) * theta

    def stage(i):
        lo = 0.0 if i == 0 else sw_lo(i)
        hi = P if i == K else sw_hi(i + 1)
        return lo, hi

    if g.quarter:
        # stage 0 starts with clock a_1 because the previous switch sits at -a_1
        phi_max = math.pi - (2 * K - 1) * theta
    else:
        phi_max = P - (K - 1) * theta
    return K, P, offset, sw_lo, sw_hi, stage, phi_max


def _prune(g: TransitionGraph):
    starts = set(g.start_levels(True))
    K = g.k_eff
    fwd = {(n, 0) for n in starts if (n, 0) in g.vertex_set}
    for i in range(K):
        fwd |= {w for v in fwd if v[1] == i for w in g.successors(v)}

    def closes(n):
        if g.symmetry is Symmetry.FW:
            return n in starts
        if g.quarter:
            return True
        return g.mirror(n) in starts

    back = {(n, K) for n, i in fwd if i == K and closes(n)}
    pred: dict = {}
    for a, b in g.edges:
        pred.setdefault(b, []).append(a)
    frontier = set(back)
    while frontier:
        nxt = set()
        for v in frontier:
            for a in pred.get(v, ()):
                if a not in back:
                    back.add(a)
                    nxt.add(a)
        frontier = nxt
    keep = fwd & back
    verts = sorted(keep, key=lambda v: (v[1], v[0]))
    edges = [e for e in g.edges if e[0] in keep and e[1] in keep]
    start_levels = sorted(n for n in starts if (n, 0) in keep)
    return verts, edges, start_levels


def build_moment_problem(g: TransitionGraph, dev: DeviceSpec, des: DesignSpec, load: LoadModel,
                         beta: int, I_bound: float | None = None,
                         share_terminal: bool = True) -> SdpProblem:
    """Assemble the degree-``beta`` moment relaxation of the OPP problem on ``g``."""
    if beta < 1:
        raise ConfigurationError("beta must be at least 1")
    levels = dev.levels
    theta = dev.theta_lock
    tau = load.tau
    if levels.N != g.N:
        raise ConfigurationError("device levels do not match the graph")
    if des.k != g.k or des.symmetry is not g.symmetry or des.unipolar != g.unipolar:
        raise ConfigurationError("design and graph disagree on k, symmetry or unipolarity")
    des.validate_levels(levels)
    if g.symmetry is Symmetry.QW and tau > 0 and not g.extended:
        raise ConfigurationError("QW with a damped load needs the extended (HW-compatible) graph")
    if g.k_eff < 1:
        raise ConfigurationError("the relaxation needs at least one switch in the window")

    K, P, offset, sw_lo, sw_hi, stage, phi_max = _window_geometry(g, theta)
    if phi_max <= theta or any(stage(i)[0] > stage(i)[1] for i in range(K + 1)):
        raise ConfigurationError("k switches do not fit the window under the interlocking angle")
    if I_bound is None:
        I_bound = default_current_bound(levels, g.symmetry, tau)
    I_bound = float(I_bound)
    C_sym = g.C_sym
    clock_lo = offset if g.symmetry is Symmetry.QW else 0.0

    verts, edges, starts = _prune(g)
    if not starts:
        raise ConfigurationError("no admissible path in the graph")
    B4 = len(monomials(4, 2 * beta, True))
    B2 = len(monomials(2, 2 * beta, False))

    slots: list[MeasureSlot] = []
    offset_var = 0

    def add_slot(kind, key, nvars, arc, phi_range):
        nonlocal offset_var
        size = B4 if nvars == 4 else B2
        s = MeasureSlot(len(slots), kind, key, nvars, offset_var, size, arc, phi_range)
        slots.append(s)
        offset_var += size
        return s

    init = {n: add_slot("initial", (n,), 2, None, (clock_lo, phi_max)) for n in starts}
    term: dict = {}
    if g.quarter or (g.symmetry is Symmetry.FW and not share_terminal):
        last = sorted(n for n, i in verts if i == K)
        term = {n: add_slot("terminal", (n,), 2, None, (clock_lo, phi_max)) for n in last}
    occ = {v: add_slot("occupation", v, 4, stage(v[1]), (0.0, phi_max)) for v in verts}
    edge_slot = {}
    for kind, pick in (("step_up", 1), ("step_down", -1)):
        for e in sorted(edges, key=lambda e: (e[0][1], e[0][0])):
            if e[1][0] - e[0][0] == pick:
                i = e[1][1]
                edge_slot[e] = add_slot(kind, e, 4, (sw_lo(i), sw_hi(i)), (theta, phi_max))
    n_vars = offset_var

    # ---- PSD blocks
    blocks: list[PsdBlock] = []
    for s in slots:
        blocks.append(_block(f"moment[{s.name}]", s, beta, beta, {(0,) * s.nvars: 1.0}))
    for s in slots:
        pad = (0, 0) if s.nvars == 4 else ()
        if s.arc is not None:
            mid = 0.5 * (s.arc[0] + s.arc[1])
            half = 0.5 * (s.arc[1] - s.arc[0])
            arc = {(1, 0, 0, 0): math.cos(mid), (0, 1, 0, 0): math.sin(mid), (0, 0, 0, 0): -math.cos(half)}
            blocks.append(_block(f"arc[{s.name}]", s, beta, beta - 1, arc))
        lo, hi = s.phi_range[0] / phi_max, s.phi_range[1] / phi_max
        clock = {pad + (2, 0): -1.0, pad + (1, 0): lo + hi, pad + (0, 0): -lo * hi}
        blocks.append(_block(f"clock[{s.name}]", s, beta, beta - 1, clock))
        blocks.append(_block(f"current[{s.name}]", s, beta, beta - 1, {pad + (0, 0): 1.0, pad + (0, 2): -1.0}))

    # ---- equality rows
    eq_parts: list = []
    b_eq: list = []
    labels: list[str] = []
    n_rows = 0

    def add_rows(entries, rhs, names):
        """``entries``: list of (sparse matrix with rows local to this chunk, slot offset, sign)."""
        nonlocal n_rows
        for M, off, sign in entries:
            M = M.tocoo()
            eq_parts.append((M.row + n_rows, M.col + off, sign * M.data))
        b_eq.extend(rhs)
        labels.extend(names)
        n_rows += len(rhs)

    drift, forcing = _lie_matrices(beta, float(tau), float(phi_max), I_bound)
    reset = _reset_matrix(beta)
    eye4 = sparse.identity(B4, format="csr")
    basis4 = monomials(4, 2 * beta, True)
    at_zero = _evaluation_matrix(beta, (1, 0), False)
    if g.symmetry is Symmetry.FW:
        at_end, end_flip = (1, 0), False
    elif g.quarter:
        at_end, end_flip = (0, 1), False
    else:
        at_end, end_flip = (-1, 0), True
    end_eval = _evaluation_matrix(beta, at_end, end_flip)

    incoming: dict = {}
    outgoing: dict = {}
    for e in edge_slot:
        incoming.setdefault(e[1], []).append(edge_slot[e])
        outgoing.setdefault(e[0], []).append(edge_slot[e])

    for v in verts:
        n, i = v
        u = levels.value(n)
        entries = [(drift + u * forcing, occ[v].offset, 1.0)]
        if i == 0:
            entries.append((at_zero, init[n].offset, 1.0))
        for s in incoming.get(v, ()):
            entries.append((reset, s.offset, 1.0))
        for s in outgoing.get(v, ()):
            entries.append((eye4, s.offset, -1.0))
        if i == K:
            if term:
                entries.append((end_eval, term[n].offset, -1.0))
            elif g.symmetry is Symmetry.FW:
                entries.append((end_eval, init[n].offset, -1.0))
            else:
                entries.append((end_eval, init[g.mirror(n)].offset, -1.0))
        add_rows(entries, [0.0] * B4, [f"continuity[{n},{i}]{m}" for m in basis4])

    if term and g.symmetry is Symmetry.FW:
        eye2 = sparse.identity(B2, format="csr")
        basis2 = monomials(2, 2 * beta, False)
        for n, t in term.items():
            add_rows([(eye2, t.offset, 1.0), (eye2, init[n].offset, -1.0)], [0.0] * B2,
                     [f"terminal_tie[{n}]{m}" for m in basis2])

    # probability
    one_row = sparse.csr_matrix(([1.0], ([0], [0])), shape=(1, B2))
    add_rows([(one_row, s.offset, 1.0) for s in init.values()], [1.0], ["probability"])

    # uniformity of the angle occupation
    trig = [m for m in basis4 if m[2] == 0 and m[3] == 0]
    idx4 = {m: j for j, m in enumerate(basis4)}
    for m in trig:
        row = sparse.csr_matrix(([1.0], ([0], [idx4[m]])), shape=(1, B4))
        add_rows([(row, s.offset, 1.0) for s in occ.values()], [trig_moment(m[:2], P)],
                 [f"uniformity{m[:2]}"])

    # quarter matching on the extended QW window
    if g.symmetry is Symmetry.QW and g.extended:
        for e, s in edge_slot.items():
            (n1, i1), (n2, i2) = e
            if i2 > K // 2:
                continue
            partner = ((n2, K - i2), (n1, K - i2 + 1))
            if partner not in edge_slot:
                continue
            t = edge_slot[partner]
            cols = [idx4[m] for m in trig]
            rows = list(range(len(trig)))
            A = sparse.csr_matrix((np.ones(len(trig)), (rows, cols)), shape=(len(trig), B4))
            Bm = sparse.csr_matrix(([(-1.0) ** m[0] for m in trig], (rows, cols)), shape=(len(trig), B4))
            add_rows([(A, s.offset, 1.0), (Bm, t.offset, -1.0)], [0.0] * len(trig),
                     [f"quarter[{s.name}~{t.name}]{m[:2]}" for m in trig])

    # harmonics
    box_rows, box_lo, box_hi, box_labels, skipped = [], [], [], [], []
    for e in des.harmonics.entries:
        vanishes = (g.symmetry is not Symmetry.FW and e.order % 2 == 0) or \
                   (g.symmetry is Symmetry.QW and e.kind == "cosine")
        label = f"{e.kind}[{e.order}]"
        if vanishes:
            if not (e.lo <= 0.0 <= e.hi):
                raise ConfigurationError(f"{label} vanishes under {g.symmetry.value} but its box excludes 0")
            skipped.append(f"{label}: zero by symmetry")
            continue
        if e.order > 2 * beta:
            skipped.append(f"{label}: order exceeds 2*beta")
            continue
        poly = harmonic_poly(e.kind, e.order)
        scale = C_sym / math.pi
        cols, vals = [], []
        for v, s in occ.items():
            u = levels.value(v[0])
            if u == 0:
                continue
            for mono, coef in poly.items():
                cols.append(s.offset + idx4[mono])
                vals.append(scale * u * coef)
        row = (np.array(cols, dtype=np.int64), np.array(vals))
        if e.is_equality:
            eq_parts.append((np.zeros(len(cols), dtype=np.int64) + n_rows, row[0], row[1]))
            b_eq.append(e.lo)
            labels.append(label)
            n_rows += 1
        else:
            box_rows.append(row)
            box_lo.append(e.lo)
            box_hi.append(e.hi)
            box_labels.append(label)

    r = np.concatenate([p[0] for p in eq_parts])
    c = np.concatenate([p[1] for p in eq_parts])
    v = np.concatenate([p[2] for p in eq_parts])
    A_eq = sparse.csr_matrix((v, (r, c)), shape=(n_rows, n_vars))
    A_eq.sum_duplicates()
    A_eq.eliminate_zeros()
    if box_rows:
        rr = np.concatenate([np.full(len(cols), j) for j, (cols, _) in enumerate(box_rows)])
        A_box = sparse.csr_matrix((np.concatenate([vals for _, vals in box_rows]),
                                   (rr, np.concatenate([cols for cols, _ in box_rows]))),
                                  shape=(len(box_rows), n_vars))
    else:
        A_box = sparse.csr_matrix((0, n_vars))

    objective = np.zeros(n_vars)
    i2 = idx4[(0, 0, 0, 2)]
    for s in occ.values():
        objective[s.offset + i2] = C_sym * I_bound ** 2

    return SdpProblem(
        graph=g, levels=levels, beta=beta, tau=float(tau), theta_lock=theta, C_sym=C_sym,
        phi_scale=phi_max, I_bound=I_bound, share_terminal=share_terminal, slots=slots,
        bases={4: basis4, 2: monomials(2, 2 * beta, False)}, blocks=blocks,
        A_eq=A_eq, b_eq=np.array(b_eq), eq_labels=labels, A_box=A_box,
        box_lo=np.array(box_lo), box_hi=np.array(box_hi), box_labels=box_labels,
        objective=objective, skipped=skipped)
