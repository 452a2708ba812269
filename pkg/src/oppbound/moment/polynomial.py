"""Monomial bases, circle reduction and the Lie derivative of the mode dynamics.

Polynomials are dictionaries mapping exponent tuples to coefficients.  The
four-state variables are ``(c, s, phi, I)``; two-state slots use ``(phi, I)``.
On the circle ``c^2 + s^2 = 1`` every monomial is reduced to ``c``-degree at
most one.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import product

import numpy as np

from ..converter import chebyshev_T, chebyshev_U  # noqa: F401  (re-exported for convenience)

CIRCLE_STATES = ("c", "s", "phi", "I")
CLOCK_STATES = ("phi", "I")

Poly = dict


def _monomials(nvars: int, degree: int):
    """All exponent tuples of total degree ``<= degree``."""
    out = []
    for exps in product(range(degree + 1), repeat=nvars):
        if sum(exps) <= degree:
            out.append(exps)
    return out


def _grlex_key(exps):
    return (sum(exps), tuple(-e for e in exps))


@lru_cache(maxsize=None)
def monomials(nvars: int, degree: int, circle: bool) -> tuple[tuple[int, ...], ...]:
    """Graded-lex ordered exponents of degree ``<= degree``; ``c``-degree capped at 1 on the circle."""
    mons = _monomials(nvars, degree)
    if circle:
        mons = [m for m in mons if m[0] < 2]
    return tuple(sorted(mons, key=_grlex_key))


def moment_basis(beta: int, states=CIRCLE_STATES, circle_constrained: bool | None = None):
    """Pseudomoment indices of degree ``<= 2*beta`` for the given states."""
    if beta < 1:
        raise ValueError("beta must be at least 1")
    states = tuple(states)
    if circle_constrained is None:
        circle_constrained = states[:2] == ("c", "s")
    if circle_constrained and states[:2] != ("c", "s"):
        raise ValueError("circle reduction needs (c, s) as the leading states")
    return monomials(len(states), 2 * beta, bool(circle_constrained))


def basis_size(beta: int, nvars: int = 4, circle: bool = True) -> int:
    """Closed-form size of the reduced basis of degree ``<= 2*beta``."""
    d = 2 * beta
    if not circle:
        return math.comb(nvars + d, nvars)
    return math.comb(nvars - 1 + d, nvars - 1) + math.comb(nvars - 2 + d, nvars - 1)


def psd_size(beta: int, nvars: int = 4, circle: bool = True) -> int:
    """Side length of a degree-``beta`` moment matrix."""
    if not circle:
        return math.comb(nvars + beta, nvars)
    return math.comb(nvars - 1 + beta, nvars - 1) + math.comb(nvars - 2 + beta, nvars - 1)


@lru_cache(maxsize=None)
def reduce_monomial(exps: tuple[int, ...]) -> tuple[tuple[tuple[int, ...], float], ...]:
    """Rewrite ``c^a`` with ``a >= 2`` through ``c^2 = 1 - s^2``."""
    a = exps[0]
    if a < 2:
        return ((exps, 1.0),)
    j, r = divmod(a, 2)
    out = []
    for m in range(j + 1):
        new = (r, exps[1] + 2 * m) + tuple(exps[2:])
        out.append((new, float((-1) ** m * math.comb(j, m))))
    return tuple(out)


def reduce_poly(poly: Poly, circle: bool = True) -> Poly:
    out: Poly = {}
    for exps, coef in poly.items():
        if coef == 0:
            continue
        terms = reduce_monomial(exps) if circle else ((exps, 1.0),)
        for e, c in terms:
            out[e] = out.get(e, 0.0) + coef * c
    return {e: c for e, c in out.items() if c != 0}


def multiply(p: Poly, q: Poly, circle: bool = True) -> Poly:
    out: Poly = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, 0.0) + c1 * c2
    return reduce_poly(out, circle)


def evaluate(poly: Poly, x) -> float:
    return float(sum(c * np.prod([xi ** e for xi, e in zip(x, exps)]) for exps, c in poly.items()))


def _partial(exps, var):
    e = exps[var]
    if e == 0:
        return None, 0.0
    new = list(exps)
    new[var] -= 1
    return tuple(new), float(e)


@lru_cache(maxsize=None)
def _lie_parts(exps: tuple[int, ...], tau: float, phi_scale: float, I_scale: float):
    """Split the Lie derivative into a level-independent part and the ``u``-coefficient."""
    drift: Poly = {}
    forcing: Poly = {}

    def add(target, e, c):
        if e is not None and c != 0:
            target[e] = target.get(e, 0.0) + c

    de, dc = _partial(exps, 0)  # -s d/dc
    if de is not None:
        add(drift, (de[0], de[1] + 1) + de[2:], -dc)
    de, dc = _partial(exps, 1)  # +c d/ds
    if de is not None:
        add(drift, (de[0] + 1,) + de[1:], dc)
    de, dc = _partial(exps, 2)  # clock runs at unit rate
    add(drift, de, dc / phi_scale)
    if exps[3]:
        add(drift, exps, -tau * exps[3])  # -tau I dI
        de, dc = _partial(exps, 3)
        add(forcing, de, dc / I_scale)
    return reduce_poly(drift), reduce_poly(forcing)


def lie_derivative(monomial, mode=None, levels=None, tau: float = 0.0, *, u: float | None = None,
                   phi_scale: float = 1.0, I_scale: float = 1.0) -> Poly:
    """Lie derivative ``(-s d_c + c d_s + d_phi + (u - tau I) d_I) w`` reduced on the circle.

    The level ``u`` is taken from ``levels`` at the mode's level index, or
    passed directly.  ``phi_scale`` and ``I_scale`` express the derivative in
    the scaled states ``phi/phi_scale`` and ``I/I_scale``.
    """
    exps = tuple(int(e) for e in monomial)
    if len(exps) != 4:
        raise ValueError("the Lie derivative acts on (c, s, phi, I) monomials")
    if u is None:
        n = mode[0] if isinstance(mode, tuple) else mode
        u = levels.value(n)
    drift, forcing = _lie_parts(exps, float(tau), float(phi_scale), float(I_scale))
    out = dict(drift)
    for e, c in forcing.items():
        out[e] = out.get(e, 0.0) + u * c
    return {e: c for e, c in out.items() if c != 0}


@lru_cache(maxsize=None)
def chebyshev_poly(kind: str, order: int) -> tuple:
    """Coefficients (low to high) of ``T_order`` or ``U_order`` in one variable."""
    prev = np.array([1.0])
    if order == 0:
        return tuple(prev)
    cur = np.array([0.0, 1.0]) if kind == "T" else np.array([0.0, 2.0])
    for _ in range(order - 1):
        nxt = np.zeros(len(cur) + 1)
        nxt[1:] = 2.0 * cur
        nxt[: len(prev)] -= prev
        prev, cur = cur, nxt
    return tuple(cur)


def harmonic_poly(kind: str, order: int, nvars: int = 4) -> Poly:
    """``T_l(c)`` for cosine rows or ``s U_{l-1}(c)`` for sine rows, reduced."""
    pad = (0,) * (nvars - 2)
    poly: Poly = {}
    if kind == "cosine":
        for j, a in enumerate(chebyshev_poly("T", order)):
            if a:
                poly[(j, 0) + pad] = a
    else:
        for j, a in enumerate(chebyshev_poly("U", order - 1)):
            if a:
                poly[(j, 1) + pad] = a
    return reduce_poly(poly)


def trig_moment(delta, upper: float) -> float:
    """``int_0^upper cos(t)^d1 sin(t)^d2 dt`` by integration-by-parts recurrences."""
    d1, d2 = int(delta[0]), int(delta[1])
    if d1 < 0 or d2 < 0:
        raise ValueError("exponents must be nonnegative")
    return _trig(d1, d2, float(upper))


@lru_cache(maxsize=None)
def _trig(m: int, n: int, x: float) -> float:
    c, s = math.cos(x), math.sin(x)
    if n >= 2:
        # boundary term vanishes at t = 0 because it carries a factor s
        return -(s ** (n - 1)) * c ** (m + 1) / (m + n) + (n - 1) / (m + n) * _trig(m, n - 2, x)
    if m >= 2:
        return c ** (m - 1) * s ** (n + 1) / (m + n) + (m - 1) / (m + n) * _trig(m - 2, n, x)
    return {(0, 0): x, (1, 0): s, (0, 1): 1.0 - c, (1, 1): 0.5 * s * s}[(m, n)]
