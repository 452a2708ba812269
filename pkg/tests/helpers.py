"""Random feasible patterns and independent oracles shared by the test modules."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize

from oppbound.converter import (LevelSet, PulsePattern, Symmetry, fourier_coefficients, half_wave_pattern,
                                quarter_wave_pattern)

THETA = math.pi / 100
LEVELS5 = LevelSet.uniform(5)


# ---------------------------------------------------------------- generators


def random_walk(rng, N: int, steps: int, start: int, end=None, floor: int = 1) -> list[int]:
    """Uniform +-1 walk in ``[floor, N]`` from ``start``; ``end`` (a level or set) constrains the last level."""
    ends = None if end is None else ({end} if isinstance(end, int) else set(end))
    # ways[i][n]: completions from level n after i steps
    ways = [dict() for _ in range(steps + 1)]
    for n in range(floor, N + 1):
        ways[steps][n] = 1 if ends is None or n in ends else 0
    for i in range(steps - 1, -1, -1):
        for n in range(floor, N + 1):
            ways[i][n] = sum(ways[i + 1].get(m, 0) for m in (n - 1, n + 1) if floor <= m <= N)
    if ways[0][start] == 0:
        raise ValueError("no walk with these constraints")
    path = [start]
    for i in range(steps):
        opts = [m for m in (path[-1] - 1, path[-1] + 1) if floor <= m <= N and ways[i + 1].get(m, 0)]
        w = np.array([ways[i + 1][m] for m in opts], dtype=float)
        path.append(int(rng.choice(opts, p=w / w.sum())))
    return path


def spaced_angles(rng, count: int, span: float, min_gap: float, lead: float = 0.0, tail: float = 0.0):
    """``count`` increasing angles in ``(lead, span - tail)`` with every gap (ends included) above ``min_gap``."""
    slack = span - lead - tail - (count + 1) * min_gap
    if slack <= 0:
        raise ValueError("angles do not fit")
    w = rng.dirichlet(np.ones(count + 1))
    gaps = min_gap + slack * w
    return list(lead + np.cumsum(gaps)[:-1])


def _zero_mean_angles(u, a, theta):
    """Angles closest to ``a`` (L1) with zero waveform mean and all gaps above ``theta``."""
    k = len(a)
    du = np.diff(u)
    # variables: alpha (k), t (k) with |alpha - a| <= t
    c = np.concatenate([np.zeros(k), np.ones(k)])
    rows, rhs = [], []
    for i in range(k):
        r = np.zeros(2 * k); r[i], r[k + i] = 1, -1; rows.append(r); rhs.append(a[i])
        r = np.zeros(2 * k); r[i], r[k + i] = -1, -1; rows.append(r); rhs.append(-a[i])
    for i in range(1, k):
        r = np.zeros(2 * k); r[i - 1], r[i] = 1, -1; rows.append(r); rhs.append(-theta)
    r = np.zeros(2 * k); r[k - 1], r[0] = 1, -1; rows.append(r); rhs.append(2 * math.pi - theta)
    eq = np.concatenate([du, np.zeros(k)])[None, :]
    res = optimize.linprog(c, A_ub=np.array(rows), b_ub=rhs, A_eq=eq, b_eq=[2 * math.pi * u[0]],
                           bounds=[(0, 2 * math.pi)] * k + [(0, None)] * k, method="highs")
    return list(res.x[:k]) if res.status == 0 else None


def random_fw(rng, N: int, k: int, theta: float = THETA, zero_mean: bool = False,
              levels: LevelSet | None = None) -> PulsePattern:
    levels = levels or LevelSet.uniform(N)
    for _ in range(200):
        n0 = int(rng.integers(1, N + 1))
        n = random_walk(rng, N, k, n0, n0)
        # the wrap gap alpha_1 + 2pi - alpha_k is split between both ends
        a = spaced_angles(rng, k, 2 * math.pi, 1.5 * theta)
        shift = rng.uniform(0, a[0] - 0.75 * theta) if k else 0.0
        a = [x - shift for x in a]
        if zero_mean and k:
            a = _zero_mean_angles(levels.values(n), a, 1.2 * theta)
            if a is None or any(b <= x for x, b in zip(a, a[1:])):
                continue
        elif zero_mean and levels.value(n[0]) != 0:
            continue
        return PulsePattern(tuple(n), tuple(a))
    raise RuntimeError("could not draw a zero-mean pattern")


def random_hw(rng, N: int, k: int, theta: float = THETA, unipolar: bool = False,
              levels: LevelSet | None = None) -> PulsePattern:
    levels = levels or LevelSet.uniform(N)
    h = k // 2
    floor = (N + 1) // 2 if unipolar else 1
    if unipolar:
        n0 = levels.middle if N % 2 else None
        n_half = random_walk(rng, N, h, n0, n0, floor=floor) if n0 else None
        if n_half is None:
            raise ValueError("unipolar HW needs an odd level count")
    else:
        starts = [n for n in range(1, N + 1) if (h - abs(levels.mirror(n) - n)) % 2 == 0
                  and abs(levels.mirror(n) - n) <= h]
        if not starts:
            raise ValueError(f"no HW level path of {h} steps on {N} levels")
        n0 = int(rng.choice(starts))
        n_half = random_walk(rng, N, h, n0, levels.mirror(n0))
    a = spaced_angles(rng, h, math.pi, 1.5 * theta)
    shift = rng.uniform(0, a[0] - 0.75 * theta)
    return half_wave_pattern(n_half, [x - shift for x in a], levels)


def random_qw(rng, N: int, k: int, theta: float = THETA, unipolar: bool = False,
              levels: LevelSet | None = None) -> PulsePattern:
    levels = levels or LevelSet.uniform(N)
    d = k // 4
    mid = levels.middle
    n_q = random_walk(rng, N, d, mid, None, floor=mid if unipolar else 1)
    a = spaced_angles(rng, d, math.pi / 2, 1.5 * theta, lead=-0.75 * theta, tail=-0.75 * theta)
    return quarter_wave_pattern(n_q, a, levels)


def random_pattern(rng, N: int, k: int, symmetry, theta: float = THETA, unipolar: bool = False,
                   zero_mean: bool = False) -> PulsePattern:
    sym = Symmetry.parse(symmetry)
    if sym is Symmetry.FW:
        return random_fw(rng, N, k, theta, zero_mean)
    if sym is Symmetry.HW:
        return random_hw(rng, N, k, theta, unipolar)
    return random_qw(rng, N, k, theta, unipolar)


# ---------------------------------------------------------------- oracles


def segments(p: PulsePattern, levels: LevelSet):
    edges = [0.0] + list(p.alpha) + [2 * math.pi]
    return [(levels.value(p.n[i]), edges[i], edges[i + 1]) for i in range(p.k + 1)]


def quadrature_fourier(p: PulsePattern, levels: LevelSet, order: int) -> tuple[float, float]:
    """``(a_l, b_l)`` by adaptive quadrature of ``u cos``, ``u sin`` per constant segment."""
    a = b = 0.0
    for u, lo, hi in segments(p, levels):
        if hi > lo:
            a += u * integrate.quad(lambda t: math.cos(order * t), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            b += u * integrate.quad(lambda t: math.sin(order * t), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return a / math.pi, b / math.pi


def ode_energy(p: PulsePattern, levels: LevelSet, tau: float, A: float = 0.0, phi: float = 0.0) -> float:
    """Signal energy of the steady-state solution of ``I' = u - A cos(theta + phi) - tau I``.

    The state ``(I, int I, int I^2)`` is integrated with an explicit Runge-Kutta
    scheme per segment.  The periodic (``tau > 0``) or zero-mean (``tau = 0``)
    initial current follows from two runs, since the end state is affine in ``I0``.
    """
    def run(I0):
        y = np.array([I0, 0.0, 0.0])
        for u, lo, hi in segments(p, levels):
            if hi <= lo:
                continue
            sol = integrate.solve_ivp(
                lambda t, z, u=u: [u - A * math.cos(t + phi) - tau * z[0], z[0], z[0] ** 2],
                (lo, hi), y, method="DOP853", rtol=1e-12, atol=1e-13)
            y = sol.y[:, -1]
        return y

    y0, y1 = run(0.0), run(1.0)
    if tau > 0:
        # I(2pi) = y0 + (y1 - y0) I0 = I0
        slope = y1[0] - y0[0]
        I0 = y0[0] / (1.0 - slope)
    else:
        I0 = -y0[1] / (2 * math.pi)
    return float(run(I0)[2])


def finite_difference_gradient(f, a, h: float = 1e-6) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    g = np.zeros_like(a)
    for j in range(len(a)):
        e = np.zeros_like(a)
        e[j] = h
        g[j] = (f(a + e) - f(a - e)) / (2 * h)
    return g


def brute_force_paths(N: int, steps: int, start_levels, ok_end, ok_vertex=lambda n, i: True):
    """Every +-1 walk by exhaustive recursion."""
    out = []

    def walk(path):
        if len(path) == steps + 1:
            if ok_end(path):
                out.append(tuple(path))
            return
        for m in (path[-1] - 1, path[-1] + 1):
            if 1 <= m <= N and ok_vertex(m, len(path)):
                walk(path + [m])

    for n0 in start_levels:
        if ok_vertex(n0, 0):
            walk([n0])
    return sorted(out)


def spectrum_b(p: PulsePattern, levels: LevelSet, order: int) -> float:
    return fourier_coefficients(p, levels, order).sine(order)
