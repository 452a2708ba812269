"""Load-current trajectory and signal energy ``||I||_2^2`` of a pulse pattern.

The normalized current obeys ``dI/dtheta = u(theta) - A cos(theta + phi) - tau*I``.
It splits into the steady response to the back-EMF,
``I_ext = -gamma0 sin(theta + phi + psi)`` with ``gamma0 = A/sqrt(1+tau^2)`` and
``psi = atan(tau)``, plus the pulse-driven part ``I_p``.  The energy over one
period is ``E_ext + 2*E_mix + E_p``.

All per-interval integrals are written in terms of ``expm1`` so that the
damped formulas stay accurate when ``tau * dalpha`` is tiny.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .converter import TWO_PI, LevelSet, LoadModel, PulsePattern
from .errors import NoPeriodicSolution, WrongRegime

#: mean-voltage tolerance below which a lossless pattern counts as zero-mean
ZERO_MEAN_TOL = 1e-9


def _segments(p: PulsePattern, levels: LevelSet):
    ext = p.extended_angles()
    return p.segment_levels(levels), ext[:-1], np.diff(ext)


def _decay(tau: float, width):
    """``exp(-tau*width)``."""
    return np.exp(-tau * np.asarray(width, dtype=float))


def _gain(tau: float, width):
    """``(1 - exp(-tau*width)) / tau``, equal to ``width`` at ``tau = 0``."""
    width = np.asarray(width, dtype=float)
    if tau == 0:
        return width
    return -np.expm1(-tau * width) / tau


def flow(I_start, u, tau: float, t):
    """Pulse current ``t`` radians into a segment of level ``u`` started at ``I_start``."""
    return I_start * _decay(tau, t) + u * _gain(tau, t)


def _cubic_factor(x: np.ndarray) -> np.ndarray:
    """``(x - 2(1-e^-x) + (1-e^-2x)/2) / x^3``, series-evaluated near 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 0.5
    xs = x[small]
    # Taylor coefficients (-1)^n (2 - 2^(n-1)) / n! of x^(n-3), n >= 3
    acc = np.zeros_like(xs)
    for n in range(29, 2, -1):
        c = (-1) ** n * (2.0 - 2.0 ** (n - 1)) / math.factorial(n)
        acc = acc * xs + c
    out[small] = acc
    xl = x[~small]
    out[~small] = (xl + 2.0 * np.expm1(-xl) - 0.5 * np.expm1(-2.0 * xl)) / xl ** 3
    return out


@dataclass(frozen=True)
class CurrentTrajectory:
    """Pulse current ``I_p`` of a pattern, sampled at ``alpha^0 = 0 .. alpha^{k+1} = 2*pi``."""

    p: PulsePattern
    levels: LevelSet
    load: LoadModel
    I0: float
    nodes: tuple[float, ...]

    @property
    def tau(self) -> float:
        return self.load.tau

    def current(self, theta) -> np.ndarray:
        """Pulse current at arbitrary angles in ``[0, 2*pi]``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        u, starts, _ = _segments(self.p, self.levels)
        idx = np.searchsorted(self.p.alpha, theta, side="right")
        I_s = np.asarray(self.nodes)[idx]
        return flow(I_s, u[idx], self.tau, theta - starts[idx])

    @property
    def periodic_error(self) -> float:
        return abs(self.nodes[-1] - self.nodes[0])


def rollout(p: PulsePattern, levels: LevelSet, tau: float, I0: float) -> np.ndarray:
    """Node currents ``I(alpha^0), ..., I(alpha^{k+1})`` from the exact per-segment flow."""
    u, _, width = _segments(p, levels)
    dec = _decay(tau, width)
    gain = _gain(tau, width)
    nodes = np.empty(len(u) + 1)
    nodes[0] = I0
    for i in range(len(u)):
        nodes[i + 1] = nodes[i] * dec[i] + u[i] * gain[i]
    return nodes


def _zero_mean_shift(p: PulsePattern, levels: LevelSet) -> float:
    u, _, width = _segments(p, levels)
    nodes = rollout(p, levels, 0.0, 0.0)
    integral = float(np.sum(nodes[:-1] * width + 0.5 * u * width ** 2))
    return -integral / TWO_PI


def periodic_initial_current(p: PulsePattern, levels: LevelSet, load: LoadModel) -> float:
    """Initial current of the periodic steady state.

    For ``tau > 0`` this is the fixed point of the affine one-period map.  In
    the lossless case every shift is periodic once the mean voltage vanishes,
    and the zero-mean current (the minimal-energy one) is returned.
    """
    tau = load.tau
    if tau > 0:
        end = rollout(p, levels, tau, 0.0)[-1]
        return float(end / -math.expm1(-TWO_PI * tau))
    u, _, width = _segments(p, levels)
    mean_voltage = float(np.dot(u, width)) / TWO_PI
    if abs(mean_voltage) > ZERO_MEAN_TOL:
        raise NoPeriodicSolution(f"lossless load with mean voltage {mean_voltage:.3e} has no periodic current")
    return _zero_mean_shift(p, levels)


def steady_initial_current(p: PulsePattern, levels: LevelSet, load: LoadModel) -> float:
    """Periodic initial current, or the zero-mean shift for a lossless load."""
    if load.tau > 0:
        return periodic_initial_current(p, levels, load)
    return _zero_mean_shift(p, levels)


def current_trajectory(p: PulsePattern, levels: LevelSet, load: LoadModel,
                       I0: float | None = None) -> CurrentTrajectory:
    if I0 is None:
        I0 = steady_initial_current(p, levels, load)
    nodes = rollout(p, levels, load.tau, float(I0))
    return CurrentTrajectory(p, levels, load, float(I0), tuple(nodes.tolist()))


@dataclass(frozen=True)
class EnergyBreakdown:
    E_ext: float
    E_mix: float
    E_p: float

    @property
    def total(self) -> float:
        return self.E_ext + 2.0 * self.E_mix + self.E_p

    def to_dict(self) -> dict:
        return {"E_ext": self.E_ext, "E_mix": self.E_mix, "E_p": self.E_p, "total": self.total}


def _external(traj: CurrentTrajectory, ext):
    if ext is None:
        return traj.load.A, traj.load.phi
    return float(ext[0]), float(ext[1])


def external_amplitude(A: float, tau: float) -> float:
    return A / math.sqrt(1.0 + tau * tau)


def energy_pure_reactance(traj: CurrentTrajectory, ext=None) -> EnergyBreakdown:
    """Closed-form energy for ``tau = 0``: cubic/flat pulse terms and trigonometric mixing."""
    if traj.tau != 0:
        raise WrongRegime("energy_pure_reactance needs tau = 0")
    A, phi = _external(traj, ext)
    u, starts, width = _segments(traj.p, traj.levels)
    I = np.asarray(traj.nodes)
    I_s, I_e = I[:-1], I[1:]
    flat = u == 0
    E_seg = np.where(flat, I_s ** 2 * width, 0.0)
    nz = ~flat
    E_seg[nz] = (I_e[nz] ** 3 - I_s[nz] ** 3) / (3.0 * u[nz])
    E_p = float(np.sum(E_seg))

    gamma0 = A
    a = starts + phi
    b = a + width
    mix = I_s * (np.cos(a) - np.cos(b)) + u * (np.sin(b) - np.sin(a) - width * np.cos(b))
    E_mix = -gamma0 * float(np.sum(mix))
    return EnergyBreakdown(math.pi * gamma0 ** 2, E_mix, E_p)


def _damped_terms(tau: float, width):
    """Per-segment integrals of ``e^{-2 tau t}``, ``e^{-tau t} g(t)`` and ``g(t)^2``."""
    A1 = _gain(2.0 * tau, width)
    A2 = 0.5 * _gain(tau, width) ** 2
    A3 = width ** 3 * _cubic_factor(tau * width)
    return A1, A2, A3


def _exp_sine(tau: float, a, b, width):
    """``int_0^w e^{-tau t} sin(a + t) dt`` with ``b = a + w``."""
    dec = _decay(tau, width)
    return (tau * np.sin(a) + np.cos(a) - dec * (tau * np.sin(b) + np.cos(b))) / (1.0 + tau * tau)


def _gain_sine(tau: float, a, b, width):
    """``int_0^w g(t) sin(a + t) dt`` with ``g(t) = (1 - e^{-tau t})/tau``."""
    dec = _decay(tau, width)
    exp_cos = (dec * (np.sin(b) - tau * np.cos(b)) - (np.sin(a) - tau * np.cos(a))) / (1.0 + tau * tau)
    return -_gain(tau, width) * np.cos(b) + exp_cos


def energy_mixed(traj: CurrentTrajectory, ext=None) -> EnergyBreakdown:
    """Closed-form energy for ``tau > 0``."""
    tau = traj.tau
    if not tau > 0:
        raise WrongRegime("energy_mixed needs tau > 0")
    A, phi = _external(traj, ext)
    u, starts, width = _segments(traj.p, traj.levels)
    I_s = np.asarray(traj.nodes)[:-1]
    A1, A2, A3 = _damped_terms(tau, width)
    E_p = float(np.sum(I_s ** 2 * A1 + 2.0 * I_s * u * A2 + u ** 2 * A3))

    gamma0 = external_amplitude(A, tau)
    a = starts + phi + math.atan(tau)
    b = a + width
    mix = I_s * _exp_sine(tau, a, b, width) + u * _gain_sine(tau, a, b, width)
    E_mix = -gamma0 * float(np.sum(mix))
    return EnergyBreakdown(math.pi * gamma0 ** 2, E_mix, E_p)


def energy_breakdown(p: PulsePattern, levels: LevelSet, load: LoadModel,
                     I0: float | None = None, ext=None) -> EnergyBreakdown:
    traj = current_trajectory(p, levels, load, I0)
    if load.tau > 0:
        return energy_mixed(traj, ext)
    return energy_pure_reactance(traj, ext)


def signal_energy(p: PulsePattern, levels: LevelSet, load: LoadModel,
                  I0: float | None = None, ext=None) -> float:
    """``||I||_2^2`` over one period, steady state unless ``I0`` is given."""
    return energy_breakdown(p, levels, load, I0, ext).total


def external_current(theta, A: float, phi: float, tau: float):
    return -external_amplitude(A, tau) * np.sin(np.asarray(theta) + phi + math.atan(tau))


def energy_numeric_oracle(p: PulsePattern, levels: LevelSet, load: LoadModel,
                          I0: float | None = None, ext=None, tol: float = 1e-12) -> float:
    """Adaptive quadrature of ``(I_p + I_ext)^2`` segment by segment."""
    if I0 is None:
        I0 = steady_initial_current(p, levels, load)
    A, phi = (load.A, load.phi) if ext is None else ext
    tau = load.tau
    u, starts, width = _segments(p, levels)
    nodes = rollout(p, levels, tau, I0)
    per_seg = tol / max(len(u), 1)
    total = 0.0
    for i in range(len(u)):
        if width[i] == 0:
            continue

        def integrand(t, i=i):
            cur = flow(nodes[i], u[i], tau, t) + external_current(starts[i] + t, A, phi, tau)
            return float(cur) ** 2

        val, _ = integrate.quad(integrand, 0.0, width[i], epsabs=per_seg, epsrel=1e-13, limit=200)
        total += val
    return total


def energy_gradient(p: PulsePattern, levels: LevelSet, load: LoadModel, ext=None) -> np.ndarray:
    """``dE/dalpha`` of the steady-state energy (periodic, or zero-mean when lossless).

    Moving ``alpha^j`` injects a current step ``u^{j-1} - u^j`` at that angle.
    Its steady-state response decays as ``e^{-tau s}`` around the period, so the
    derivative is twice the overlap of that response with the total current.
    """
    if p.k == 0:
        return np.zeros(0)
    A, phi = (load.A, load.phi) if ext is None else ext
    tau = load.tau
    I0 = steady_initial_current(p, levels, load)
    u, starts, width = _segments(p, levels)
    nodes = rollout(p, levels, tau, I0)
    I_s = nodes[:-1]
    jump = u[:-1] - u[1:]
    gamma0 = external_amplitude(A, tau)
    a = starts + phi + math.atan(tau)
    b = a + width
    if tau == 0:
        seg_int = I_s * width + 0.5 * u * width ** 2 - gamma0 * (np.cos(a) - np.cos(b))
        tail = np.cumsum(seg_int[::-1])[::-1]
        return 2.0 * jump * tail[1:]
    A1, A2, _ = _damped_terms(tau, width)
    Q = I_s * A1 + u * A2 - gamma0 * _exp_sine(tau, a, b, width)
    alpha = np.asarray(p.alpha)
    lag = starts[:, None] - alpha[None, :]
    lag = np.where(lag < 0, lag + TWO_PI, lag)
    weights = np.exp(-tau * lag)
    K = jump / -math.expm1(-TWO_PI * tau)
    return 2.0 * K * (Q @ weights)
