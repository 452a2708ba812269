"""Selective harmonic elimination on a quarter-wave level sequence.

For quarter levels ``u_0 .. u_d`` with jumps ``du_i = u_i - u_{i-1}`` the odd
sine coefficients of the QW waveform are

    b_l = 4 / (pi l) * sum_i du_i cos(l a_i).

The system fixes ``b_1`` and zeroes ``d - 1`` further odd orders.  It is
solved by damped Newton from a stratified set of ordered starts, in
coordinates that keep the angles inside ``0 < a_1 < ... < a_d < pi/2``: the
``d + 1`` gaps are ``(pi/2) softmax(s_1, .., s_d, 0)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .converter import LevelSet, LoadModel, PulsePattern, quarter_wave_pattern
from .energy import signal_energy
from .errors import InvalidDesign

RESIDUAL_TOL = 1e-10
DUPLICATE_TOL = 1e-8


@dataclass(frozen=True)
class SheSpec:
    n_quarter: tuple[int, ...]
    b1: float
    eliminated: tuple[int, ...]
    k: int

    def __post_init__(self):
        object.__setattr__(self, "n_quarter", tuple(int(v) for v in self.n_quarter))
        object.__setattr__(self, "eliminated", tuple(int(v) for v in self.eliminated))
        if self.k % 4:
            raise InvalidDesign("QW patterns need k divisible by 4")
        d = self.k // 4
        if len(self.n_quarter) != d + 1:
            raise InvalidDesign(f"k={self.k} needs {d + 1} quarter levels, got {len(self.n_quarter)}")
        if len(self.eliminated) + 1 != d:
            raise InvalidDesign(f"{d} angles need {d - 1} eliminated orders, got {len(self.eliminated)}")
        if any(l < 3 or l % 2 == 0 for l in self.eliminated) or len(set(self.eliminated)) != len(self.eliminated):
            raise InvalidDesign("eliminated orders must be distinct odd integers >= 3")
        if any(abs(b - a) != 1 for a, b in zip(self.n_quarter, self.n_quarter[1:])):
            raise InvalidDesign("quarter levels must step one level at a time")

    @classmethod
    def lowest_orders(cls, n_quarter, b1: float) -> "SheSpec":
        """Eliminate ``3, 5, .., 2d - 1`` for ``d = len(n_quarter) - 1`` angles."""
        d = len(n_quarter) - 1
        return cls(tuple(n_quarter), b1, tuple(range(3, 2 * d, 2)), 4 * d)

    @property
    def d(self) -> int:
        return self.k // 4

    @property
    def orders(self) -> np.ndarray:
        return np.array((1,) + self.eliminated, dtype=float)

    @property
    def targets(self) -> np.ndarray:
        return np.array([self.b1] + [0.0] * len(self.eliminated))


@dataclass
class SheSolution:
    alpha: tuple[float, ...]
    pattern: PulsePattern
    residual: float
    min_gap: float
    interlock_ok: bool
    energy: float | None
    rate: float | None
    iterations: int
    residual_log: list = field(default_factory=list)


@dataclass
class SheResult:
    spec: SheSpec
    solutions: list
    starts: list
    status: str

    def feasible_solutions(self) -> list:
        return [s for s in self.solutions if s.interlock_ok]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start", "converged", "residual", "energy", "iterations"])
        for row in self.starts:
            w.writerow([row["start"], int(row["converged"]), "%.6e" % row["residual"],
                        "" if row["energy"] is None else "%.17g" % row["energy"], row["iterations"]])
        return buf.getvalue()


def she_residual(spec: SheSpec, levels: LevelSet, a) -> np.ndarray:
    du = np.diff(levels.values(spec.n_quarter))
    l = spec.orders
    return 4.0 / math.pi * (np.cos(np.outer(l, a)) @ du) / l - spec.targets


def she_jacobian(spec: SheSpec, levels: LevelSet, a) -> np.ndarray:
    du = np.diff(levels.values(spec.n_quarter))
    return -4.0 / math.pi * np.sin(np.outer(spec.orders, a)) * du[None, :]


def _angles(s):
    z = np.append(s, 0.0)
    w = np.exp(z - z.max())
    gaps = 0.5 * math.pi * w / w.sum()
    return np.cumsum(gaps)[:-1], gaps


def _angles_jacobian(s):
    """``d a / d s`` for the softmax gap map."""
    a, gaps = _angles(s)
    d = len(s)
    frac = gaps / gaps.sum()
    # d gap_j / d s_m = gap_j (delta_jm - frac_m)
    dg = gaps[:, None] * (np.eye(d + 1)[:, :d] - frac[None, :d])
    return np.cumsum(dg, axis=0)[:-1]


def _coords(a):
    gaps = np.diff(np.concatenate([[0.0], a, [0.5 * math.pi]]))
    return np.log(gaps[:-1] / gaps[-1])


def _newton(spec, levels, s, max_iter: int):
    log = []
    for it in range(max_iter):
        a, _ = _angles(s)
        F = she_residual(spec, levels, a)
        r = float(np.max(np.abs(F)))
        log.append(r)
        if r < 1e-14:
            return s, log, it
        J = she_jacobian(spec, levels, a) @ _angles_jacobian(s)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        t = 1.0
        while t > 1e-6:
            cand = s + t * step
            if np.all(np.isfinite(cand)) and np.max(np.abs(she_residual(spec, levels, _angles(cand)[0]))) < r:
                break
            t *= 0.5
        else:
            return s, log, it
        s = cand
    return s, log, max_iter


def convergence_rate(residuals) -> float | None:
    """Order estimate ``log(r3/r2) / log(r2/r1)`` over the last usable triple of residuals."""
    r = [v for v in residuals if v > 1e-14]
    best = None
    for i in range(len(r) - 2):
        r1, r2, r3 = r[i], r[i + 1], r[i + 2]
        if r1 < 1e-2 and r2 < r1 and r3 < r2:
            best = math.log(r3 / r2) / math.log(r2 / r1)
    return best


def _start_points(d: int, starts: int, seed: int) -> np.ndarray:
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    pts = sampler.random_base2(max(0, math.ceil(math.log2(starts))))[:starts]
    return np.sort(pts, axis=1) * 0.5 * math.pi


def solve_she(spec: SheSpec, levels: LevelSet, starts: int = 64, theta_lock: float | None = None,
              load: LoadModel | None = None, seed: int = 0, max_iter: int = 100) -> SheResult:
    """Multi-start damped Newton; returns every distinct root, sorted by the first angle."""
    if starts < 1:
        raise InvalidDesign("need at least one start")
    theta = 0.0 if theta_lock is None else theta_lock
    found: list[SheSolution] = []
    table = []
    for sid, a0 in enumerate(_start_points(spec.d, starts, seed)):
        a0 = np.clip(a0, 1e-6, 0.5 * math.pi - 1e-6)
        if np.any(np.diff(a0) <= 0):
            a0 = np.linspace(0.5 * math.pi / (spec.d + 1), 0.5 * math.pi * spec.d / (spec.d + 1), spec.d)
        s, log, its = _newton(spec, levels, _coords(a0), max_iter)
        a, _ = _angles(s)
        res = float(np.max(np.abs(she_residual(spec, levels, a))))
        ok = res < RESIDUAL_TOL
        energy = None
        if ok:
            dup = next((f for f in found if np.max(np.abs(np.array(f.alpha) - a)) < DUPLICATE_TOL), None)
            if dup is None:
                p = quarter_wave_pattern(spec.n_quarter, a, levels)
                gaps = np.diff(np.concatenate([[-a[0]], a, [math.pi - a[-1]]]))
                energy = signal_energy(p, levels, load) if load is not None else None
                found.append(SheSolution(tuple(float(v) for v in a), p, res, float(gaps.min()),
                                         bool(gaps.min() >= theta), energy, convergence_rate(log), its, log))
            else:
                energy = dup.energy
        table.append({"start": sid, "converged": ok, "residual": res, "energy": energy, "iterations": its})
    found.sort(key=lambda f: f.alpha)
    if not found:
        status = "no_root"
    elif not any(f.interlock_ok for f in found):
        status = "no_interlock_feasible_root"
    else:
        status = "solved"
    return SheResult(spec, found, table, status)
