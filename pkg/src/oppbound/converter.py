"""Pulse patterns, their spectra and the constraints of the OPP design problem.

A pulse pattern is a periodic staircase signal ``u(theta)`` built from the
levels of a multilevel converter.  It is stored as the level indices
``n[0..k]`` (1-based into a :class:`LevelSet`) together with the switching
angles ``alpha[1..k]`` at which the level changes.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateLoad, InconsistentInputs, InvalidDesign

TWO_PI = 2.0 * math.pi

#: equality harmonics are accepted within this absolute tolerance
EQUALITY_TOL = 1e-9
#: tolerance for structural angle comparisons in symmetry checks
STRUCTURE_TOL = 1e-9


class Symmetry(str, Enum):
    """Waveform symmetry imposed on a design."""

    FW = "FW"
    HW = "HW"
    QW = "QW"

    @classmethod
    def parse(cls, value: "Symmetry | str") -> "Symmetry":
        if isinstance(value, Symmetry):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidDesign(f"unknown symmetry {value!r}; expected FW, HW or QW") from None


@dataclass(frozen=True)
class LevelSet:
    """Ordered per-unit voltage levels ``u_1 < ... < u_N``."""

    levels: tuple[float, ...]

    def __post_init__(self):
        lv = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", lv)
        if len(lv) < 2:
            raise InvalidDesign("a level set needs at least two levels")
        if not all(math.isfinite(v) for v in lv):
            raise InvalidDesign("levels must be finite")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise InvalidDesign("levels must be strictly increasing")

    @classmethod
    def uniform(cls, N: int) -> "LevelSet":
        """``N`` equally spaced levels on ``[-1, 1]``."""
        return cls(tuple(np.linspace(-1.0, 1.0, N)))

    @property
    def N(self) -> int:
        return len(self.levels)

    @property
    def middle(self) -> int:
        """1-based index of the middle level (requires odd ``N``)."""
        if self.N % 2 == 0:
            raise InvalidDesign("an even level count has no middle level")
        return (self.N + 1) // 2

    def value(self, n: int) -> float:
        return self.levels[n - 1]

    def values(self, n: Sequence[int]) -> np.ndarray:
        return np.asarray(self.levels)[np.asarray(n, dtype=int) - 1]

    def mirror(self, n: int) -> int:
        """Index of the level with opposite sign."""
        return self.N + 1 - n

    def is_sign_symmetric(self, tol: float = 1e-12) -> bool:
        return all(abs(self.levels[i] + self.levels[-1 - i]) <= tol for i in range(self.N))

    def indices(self, values: Iterable[float], tol: float = 1e-12) -> tuple[int, ...]:
        """Translate level values into 1-based indices."""
        out = []
        for v in values:
            hits = [i + 1 for i, lv in enumerate(self.levels) if abs(lv - v) <= tol]
            if not hits:
                raise InvalidDesign(f"value {v} is not a level of {self.levels}")
            out.append(hits[0])
        return tuple(out)

    def check_quarter_wave(self) -> None:
        if self.N % 2 == 0 or abs(self.levels[self.middle - 1]) > 1e-12:
            raise InvalidDesign("quarter-wave designs need an odd level count with a zero middle level")


@dataclass(frozen=True)
class DeviceSpec:
    """Converter hardware: fundamental frequency, interlocking time and levels.

    The interlocking angle is ``theta_lock = 2*pi*f1*Ts``.
    """

    f1: float
    Ts: float
    levels: LevelSet
    theta_lock: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.levels, LevelSet):
            object.__setattr__(self, "levels", LevelSet(tuple(self.levels)))
        theta = TWO_PI * float(self.f1) * float(self.Ts)
        if not (math.isfinite(theta) and theta > 0):
            raise InvalidDesign("the interlocking angle must be positive")
        object.__setattr__(self, "theta_lock", theta)

    @classmethod
    def from_angle(cls, theta_lock: float, levels: LevelSet, f1: float = 50.0) -> "DeviceSpec":
        """Build a device directly from its interlocking angle."""
        return cls(f1=f1, Ts=float(theta_lock) / (TWO_PI * f1), levels=levels)


@dataclass(frozen=True)
class LoadModel:
    """R-L load with a sinusoidal back-EMF ``A cos(theta + phi)``.

    ``tau`` is the damping of the normalized current in the angle domain.
    ``from_tau`` builds the normalized model (``R = tau``, ``L = 1``,
    ``omega1 = 1``) used throughout the experiments.
    """

    R_load: float
    L_load: float
    A: float = 0.0
    phi: float = 0.0
    Vdc: float = 2.0
    I_nominal: float = 1.0
    omega1: float = 1.0

    def __post_init__(self):
        if self.R_load == 0 and self.L_load == 0:
            raise DegenerateLoad("R_load and L_load are both zero")
        if self.R_load < 0 or self.L_load <= 0:
            raise InvalidDesign("need R_load >= 0 and L_load > 0")
        if self.omega1 <= 0 or self.I_nominal <= 0 or self.Vdc <= 0:
            raise InvalidDesign("omega1, I_nominal and Vdc must be positive")

    @classmethod
    def from_tau(cls, tau: float, A: float = 0.0, phi: float = 0.0) -> "LoadModel":
        return cls(R_load=float(tau), L_load=1.0, A=A, phi=phi)

    @property
    def tau(self) -> float:
        return self.R_load / self.L_load

    @property
    def C_p(self) -> float:
        """Proportionality constant between normalized and load-current TDD."""
        return self.Vdc / 2.0 / (math.sqrt(2.0) * self.I_nominal * self.omega1
                                 * math.hypot(self.R_load, self.L_load))

    def without_external(self) -> "LoadModel":
        return LoadModel(self.R_load, self.L_load, 0.0, 0.0, self.Vdc, self.I_nominal, self.omega1)


@dataclass(frozen=True)
class PulsePattern:
    """Level indices ``n^0..n^k`` and strictly increasing angles ``alpha^1..alpha^k``."""

    n: tuple[int, ...]
    alpha: tuple[float, ...]

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        alpha = tuple(float(v) for v in self.alpha)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "alpha", alpha)
        if len(n) != len(alpha) + 1:
            raise InvalidDesign("need exactly one more level index than switching angles")
        if len(alpha) % 2:
            raise InvalidDesign("the switch count k must be even")
        if any(v < 1 for v in n):
            raise InvalidDesign("level indices are 1-based")
        if any(not math.isfinite(a) for a in alpha):
            raise InvalidDesign("angles must be finite")
        if alpha and (alpha[0] < 0 or alpha[-1] > TWO_PI):
            raise InvalidDesign("angles must lie in [0, 2*pi]")
        if any(b <= a for a, b in zip(alpha, alpha[1:])):
            raise InvalidDesign("angles must be strictly increasing")

    @classmethod
    def unchecked(cls, n, alpha) -> "PulsePattern":
        """Skip validation, for optimizers probing the analytic extension of the closed forms."""
        p = object.__new__(cls)
        object.__setattr__(p, "n", tuple(int(v) for v in n))
        object.__setattr__(p, "alpha", tuple(float(v) for v in alpha))
        return p

    @classmethod
    def constant(cls, n0: int) -> "PulsePattern":
        return cls((n0,), ())

    @property
    def k(self) -> int:
        return len(self.alpha)

    def extended_angles(self) -> np.ndarray:
        """Angles with ``alpha^0 = 0`` and ``alpha^{k+1} = 2*pi`` appended."""
        return np.concatenate(([0.0], self.alpha, [TWO_PI]))

    def segment_levels(self, levels: LevelSet) -> np.ndarray:
        return levels.values(self.n)

    def with_alpha(self, alpha: Sequence[float]) -> "PulsePattern":
        return PulsePattern(self.n, tuple(alpha))


def half_wave_pattern(n_half: Sequence[int], a_half: Sequence[float], levels: LevelSet) -> PulsePattern:
    """Expand a half period (levels ``n^0..n^K`` and angles in ``(0, pi)``) by ``u(theta+pi) = -u(theta)``."""
    n_half = [int(v) for v in n_half]
    a_half = [float(v) for v in a_half]
    if len(n_half) != len(a_half) + 1:
        raise InvalidDesign("need one more level than angles")
    if n_half[-1] != levels.mirror(n_half[0]):
        raise InvalidDesign("a half-wave segment must end at the mirror of its first level")
    n = n_half + [levels.mirror(v) for v in n_half[1:]]
    alpha = a_half + [a + math.pi for a in a_half]
    return PulsePattern(tuple(n), tuple(alpha))


def quarter_wave_pattern(n_quarter: Sequence[int], a_quarter: Sequence[float], levels: LevelSet) -> PulsePattern:
    """Expand a quarter period starting at the middle level into a full QW pattern."""
    n_quarter = [int(v) for v in n_quarter]
    a_quarter = [float(v) for v in a_quarter]
    if len(n_quarter) != len(a_quarter) + 1:
        raise InvalidDesign("need one more level than angles")
    if n_quarter[0] != levels.middle:
        raise InvalidDesign("a quarter-wave segment starts at the middle level")
    n_half = n_quarter + n_quarter[-2::-1]
    a_half = a_quarter + [math.pi - a for a in reversed(a_quarter)]
    return half_wave_pattern(n_half, a_half, levels)


def free_angle_count(k: int, symmetry: Symmetry | str) -> int:
    """Number of independent switching angles for a symmetry."""
    symmetry = Symmetry.parse(symmetry)
    return {Symmetry.FW: k, Symmetry.HW: k // 2, Symmetry.QW: k // 4}[symmetry]


def reduce_pattern(p: PulsePattern, symmetry: Symmetry | str) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Leading levels and angles that generate ``p`` under ``symmetry``."""
    d = free_angle_count(p.k, symmetry)
    return p.n[: d + 1], p.alpha[:d]


def expand_pattern(n_free: Sequence[int], a_free: Sequence[float], levels: LevelSet,
                   symmetry: Symmetry | str) -> PulsePattern:
    """Inverse of :func:`reduce_pattern`."""
    symmetry = Symmetry.parse(symmetry)
    if symmetry is Symmetry.QW:
        return quarter_wave_pattern(n_free, a_free, levels)
    if symmetry is Symmetry.HW:
        return half_wave_pattern(n_free, a_free, levels)
    return PulsePattern(tuple(n_free), tuple(a_free))


def angle_jacobian(k: int, symmetry: Symmetry | str) -> np.ndarray:
    """Matrix ``D`` with ``d alpha_full = D @ d alpha_free``."""
    symmetry = Symmetry.parse(symmetry)
    d = free_angle_count(k, symmetry)
    D = np.zeros((k, d))
    if symmetry is Symmetry.FW:
        return np.eye(k)
    if symmetry is Symmetry.HW:
        for i in range(d):
            D[i, i] = D[i + d, i] = 1.0
        return D
    h = k // 2
    for i in range(d):
        D[i, i] = 1.0
        D[h - 1 - i, i] = -1.0
        D[h + i, i] = 1.0
        D[k - 1 - i, i] = -1.0
    return D


def sample_waveform(p: PulsePattern, levels: LevelSet, theta: float) -> float:
    """Right-continuous value ``u(theta)`` for ``theta`` in ``[0, 2*pi]``."""
    i = bisect.bisect_right(p.alpha, float(theta))
    return levels.value(p.n[i])


@dataclass(frozen=True)
class FourierSpectrum:
    """Coefficients of ``a0/2 + sum_l a_l cos(l theta) + b_l sin(l theta)``."""

    a0: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise InvalidDesign("cosine and sine coefficient lists must have equal length")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a0", float(self.a0))

    @property
    def lmax(self) -> int:
        return len(self.a)

    def cosine(self, order: int) -> float:
        if order == 0:
            return self.a0
        return float(self.a[order - 1])

    def sine(self, order: int) -> float:
        if order == 0:
            return 0.0
        return float(self.b[order - 1])

    def to_dict(self) -> dict:
        return {"a0": self.a0, "a": self.a.tolist(), "b": self.b.tolist()}


def fourier_coefficients(p: PulsePattern, levels: LevelSet, lmax: int) -> FourierSpectrum:
    """Closed-form Fourier coefficients of the staircase waveform."""
    if lmax < 1:
        raise InvalidDesign("lmax must be at least 1")
    u = p.segment_levels(levels)
    du = np.diff(u)
    alpha = np.asarray(p.alpha)
    a0 = 2.0 * u[0] - float(np.dot(du, alpha)) / math.pi
    if p.k == 0:
        return FourierSpectrum(a0, np.zeros(lmax), np.zeros(lmax))
    ell = np.arange(1, lmax + 1, dtype=float)
    phase = np.outer(ell, alpha)
    a = -(np.sin(phase) @ du) / (ell * math.pi)
    b = (np.cos(phase) @ du) / (ell * math.pi)
    return FourierSpectrum(a0, a, b)


def load_spectrum(s: FourierSpectrum, load: LoadModel) -> FourierSpectrum:
    """Load-current coefficients through the per-harmonic impedance ``R + j*l*omega1*L``.

    The back-EMF phasor ``A exp(j phi)`` enters the fundamental only.  The DC
    term is divided by ``R``; for a lossless load it is undetermined and set
    to zero, which requires a zero-mean voltage.
    """
    if s.lmax < 1:
        raise InvalidDesign("spectrum must contain the fundamental")
    R, L, w1 = load.R_load, load.L_load, load.omega1
    ell = np.arange(1, s.lmax + 1)
    z = s.a + 1j * s.b
    z[0] += load.A * np.exp(1j * load.phi)
    out = z / (R + 1j * ell * w1 * L)
    if R > 0:
        a0 = s.a0 / R
    elif abs(s.a0) <= 1e-12:
        a0 = 0.0
    else:
        raise InconsistentInputs("a lossless load driven by a nonzero mean voltage has no steady state")
    return FourierSpectrum(a0, out.real, out.imag)


def tdd_from_spectrum(s_load: FourierSpectrum, C_p: float) -> float:
    """``C_p * sqrt(sum over l != 1 of a_l^2 + b_l^2)`` with the DC term weighted by 1/2."""
    harm = float(np.sum(s_load.a[1:] ** 2 + s_load.b[1:] ** 2))
    return C_p * math.sqrt(harm + 0.5 * s_load.a0 ** 2)


def tdd_time_domain(energy: float, a1_tilde: float, b1_tilde: float, C_p: float) -> float:
    """Parseval form ``C_p * sqrt(E/pi - a1^2 - b1^2)``."""
    radicand = energy / math.pi - a1_tilde ** 2 - b1_tilde ** 2
    if radicand < -1e-10:
        raise InconsistentInputs(f"energy is below the fundamental content (radicand {radicand:.3e})")
    return C_p * math.sqrt(max(radicand, 0.0))


def chebyshev_T(l: int, c: float) -> float:
    """Chebyshev polynomial of the first kind by the three-term recurrence."""
    if l < 0:
        raise InvalidDesign("order must be nonnegative")
    prev, cur = 1.0, c
    if l == 0:
        return prev
    for _ in range(l - 1):
        prev, cur = cur, 2.0 * c * cur - prev
    return cur


def chebyshev_U(l: int, c: float) -> float:
    """Chebyshev polynomial of the second kind, ``U_l(cos t) = sin((l+1)t)/sin(t)``."""
    if l < 0:
        raise InvalidDesign("order must be nonnegative")
    prev, cur = 1.0, 2.0 * c
    if l == 0:
        return prev
    for _ in range(l - 1):
        prev, cur = cur, 2.0 * c * cur - prev
    return cur


# ---------------------------------------------------------------- design data


@dataclass(frozen=True)
class HarmonicEntry:
    kind: str
    order: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("cosine", "sine"):
            raise InvalidDesign(f"harmonic kind must be 'cosine' or 'sine', got {self.kind!r}")
        if self.order < 0 or (self.kind == "sine" and self.order == 0):
            raise InvalidDesign("invalid harmonic order")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo > self.hi:
            raise InvalidDesign("harmonic boxes need finite bounds with lo <= hi")

    @property
    def is_equality(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class HarmonicsSpec:
    entries: tuple[HarmonicEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def max_order(self) -> int:
        return max((e.order for e in self.entries), default=0)

    def to_list(self) -> list:
        return [[e.kind, e.order, e.lo, e.hi] for e in self.entries]

    @classmethod
    def from_list(cls, rows) -> "HarmonicsSpec":
        return cls(tuple(HarmonicEntry(str(r[0]), int(r[1]), float(r[2]), float(r[3])) for r in rows))


@dataclass(frozen=True)
class DesignSpec:
    """Switch count, symmetry, unipolarity and harmonic boxes of an OPP design."""

    k: int
    symmetry: Symmetry
    unipolar: bool = False
    harmonics: HarmonicsSpec = HarmonicsSpec()

    def __post_init__(self):
        object.__setattr__(self, "symmetry", Symmetry.parse(self.symmetry))
        if self.k < 0 or self.k % 2:
            raise InvalidDesign("k must be a nonnegative even integer")
        if self.unipolar and self.symmetry is Symmetry.FW:
            raise InvalidDesign("unipolarity needs HW or QW symmetry")
        if self.symmetry is Symmetry.HW and self.k % 2:
            raise InvalidDesign("HW designs need even k")
        if self.symmetry is Symmetry.QW and self.k % 4:
            raise InvalidDesign("QW designs need k divisible by 4")

    @classmethod
    def with_modulation(cls, k: int, symmetry, M: float, unipolar: bool = False,
                        extra: Iterable[HarmonicEntry] = ()) -> "DesignSpec":
        entries = (HarmonicEntry("sine", 1, M, M),) + tuple(extra)
        return cls(k, Symmetry.parse(symmetry), unipolar, HarmonicsSpec(entries))

    def validate_levels(self, levels: LevelSet) -> None:
        if self.symmetry is Symmetry.QW:
            levels.check_quarter_wave()
        if self.symmetry is not Symmetry.FW and not levels.is_sign_symmetric():
            raise InvalidDesign("symmetric designs need levels symmetric about zero")


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class CheckItem:
    name: str
    passed: bool
    detail: str = ""
    violations: tuple = ()


@dataclass(frozen=True)
class ConstraintReport:
    items: tuple[CheckItem, ...]

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def __getitem__(self, name: str) -> CheckItem:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [it.name for it in self.items if not it.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": [{"name": it.name, "passed": it.passed, "detail": it.detail,
                            "violations": [list(v) if isinstance(v, tuple) else v for v in it.violations]}
                           for it in self.items]}


def _events(p: PulsePattern) -> list[tuple[float, int, int]]:
    return [(a, p.n[i], p.n[i + 1]) for i, a in enumerate(p.alpha)]


def _find_event(events, angle: float, tol: float) -> int | None:
    best, where = tol, None
    for j, (a, _, _) in enumerate(events):
        d = abs((a - angle + math.pi) % TWO_PI - math.pi)
        if d <= best:
            best, where = d, j
    return where


def check_symmetry(p: PulsePattern, levels: LevelSet, sym, tol: float = STRUCTURE_TOL) -> CheckItem:
    """Structural symmetry check on the switching events.

    Every switch ``a -> b`` at angle ``x`` needs a partner: ``mirror(a) ->
    mirror(b)`` at ``x + pi`` for HW, and additionally ``b -> a`` at ``pi - x``
    for QW.  Violations are reported as ``(switch index, expected angle)``
    pairs with 1-based switch indices.
    """
    sym = Symmetry.parse(sym)
    name = "symmetry"
    if sym is Symmetry.FW:
        return CheckItem(name, True, "FW")
    events = _events(p)
    violations = []
    mirror = levels.mirror
    # level right after pi must mirror the level right after 0
    level_pi = p.n[bisect.bisect_right(p.alpha, math.pi)]
    if level_pi != mirror(p.n[0]) and not any(abs(a - math.pi) <= tol for a in p.alpha):
        violations.append((0, math.pi))
    for i, (a, lo, hi) in enumerate(events, start=1):
        j = _find_event(events, a + math.pi, tol)
        if j is None or events[j][1:] != (mirror(lo), mirror(hi)):
            violations.append((i, (a + math.pi) % TWO_PI))
        if sym is Symmetry.QW:
            j = _find_event(events, math.pi - a, tol)
            if j is None or events[j][1:] != (hi, lo):
                violations.append((i, (math.pi - a) % TWO_PI))
    if sym is Symmetry.QW and p.n[0] != (levels.N + 1) // 2:
        violations.append((0, 0.0))
    detail = "ok" if not violations else f"{len(violations)} unmatched switch(es)"
    return CheckItem(name, not violations, detail, tuple(violations))


def _harmonic_value(spec: FourierSpectrum, e: HarmonicEntry) -> float:
    return spec.cosine(e.order) if e.kind == "cosine" else spec.sine(e.order)


def check_constraints(p: PulsePattern, dev: DeviceSpec, des: DesignSpec,
                      eq_tol: float = EQUALITY_TOL) -> ConstraintReport:
    """Per-constraint feasibility report for the OPP problem."""
    levels = dev.levels
    theta = dev.theta_lock
    items = []

    items.append(CheckItem("switch_count", p.k == des.k, f"k={p.k}, design k={des.k}"))

    in_range = all(1 <= v <= levels.N for v in p.n)
    items.append(CheckItem("level_range", in_range, f"N={levels.N}",
                           tuple(i for i, v in enumerate(p.n) if not 1 <= v <= levels.N)))

    bad_adj = tuple(i for i in range(p.k) if abs(p.n[i + 1] - p.n[i]) != 1)
    items.append(CheckItem("adjacency", not bad_adj, "steps of one level", bad_adj))

    items.append(CheckItem("periodicity", p.n[0] == p.n[-1], f"n0={p.n[0]}, nk={p.n[-1]}"))

    gaps = []
    for i in range(1, p.k):
        gap = p.alpha[i] - p.alpha[i - 1]
        if gap < theta:
            gaps.append((i, gap))
    if p.k:
        wrap = p.alpha[0] + TWO_PI - p.alpha[-1]
        if wrap < theta:
            gaps.append((p.k, wrap))
    min_gap = min([p.alpha[0] + TWO_PI - p.alpha[-1]] + list(np.diff(p.alpha))) if p.k else math.inf
    items.append(CheckItem("interlocking", not gaps, f"min gap {min_gap:.6g} vs theta {theta:.6g}",
                           tuple(gaps)))

    if in_range:
        items.append(check_symmetry(p, levels, des.symmetry))
    else:
        items.append(CheckItem("symmetry", False, "levels out of range"))

    if des.unipolar and in_range:
        mid = (levels.N + 1) / 2
        bad = tuple(i for i in range(p.k + 1)
                    if (i == 0 or p.alpha[i - 1] < math.pi) and p.n[i] < mid)
        items.append(CheckItem("unipolarity", not bad, "nonnegative on [0, pi)", bad))
    else:
        items.append(CheckItem("unipolarity", True, "not required" if not des.unipolar else "n/a"))

    if des.harmonics.entries and in_range:
        spec = fourier_coefficients(p, levels, max(1, des.harmonics.max_order))
        bad = []
        for e in des.harmonics.entries:
            v = _harmonic_value(spec, e)
            slack = eq_tol if e.is_equality else 0.0
            if not (e.lo - slack <= v <= e.hi + slack):
                bad.append((e.kind, e.order, v))
        items.append(CheckItem("harmonics", not bad, f"{len(des.harmonics.entries)} box(es)", tuple(bad)))
    else:
        items.append(CheckItem("harmonics", in_range, "no boxes" if in_range else "levels out of range"))
    return ConstraintReport(tuple(items))


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class PatternRecord:
    """Self-describing pattern: levels, indices, angles, symmetry and unipolarity."""

    levels: LevelSet
    pattern: PulsePattern
    symmetry: Symmetry = Symmetry.FW
    unipolar: bool = False

    def to_json(self) -> str:
        def num(v: float) -> str:
            return "%.17g" % v

        parts = [
            '"levels": [' + ", ".join(num(v) for v in self.levels.levels) + "]",
            '"n": [' + ", ".join(str(v) for v in self.pattern.n) + "]",
            '"alpha": [' + ", ".join(num(v) for v in self.pattern.alpha) + "]",
            f'"k": {self.pattern.k}',
            f'"symmetry": "{Symmetry.parse(self.symmetry).value}"',
            f'"unipolar": {"true" if self.unipolar else "false"}',
        ]
        return "{" + ", ".join(parts) + "}\n"

    @classmethod
    def from_dict(cls, data: dict) -> "PatternRecord":
        try:
            levels = LevelSet(tuple(data["levels"]))
            pattern = PulsePattern(tuple(data["n"]), tuple(data["alpha"]))
            if "k" in data and int(data["k"]) != pattern.k:
                raise InvalidDesign("record k does not match its angle list")
            return cls(levels, pattern, Symmetry.parse(data.get("symmetry", "FW")),
                       bool(data.get("unipolar", False)))
        except (KeyError, TypeError) as exc:
            raise InvalidDesign(f"malformed pattern record: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "PatternRecord":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidDesign(f"pattern record is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise InvalidDesign("pattern record must be a JSON object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PatternRecord":
        with open(path) as fh:
            return cls.from_json(fh.read())
