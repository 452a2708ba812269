"""Fixed-level refinement of switching angles.

The level sequence of the seed is frozen and only the free angles move: all
``k`` of them under FW symmetry, ``k/2`` under HW and ``k/4`` under QW.  The
energy and harmonic functionals have analytic gradients, and interlocking is
a set of linear inequalities on the free angles.  The solve runs in three
stages:

1. phase one (:func:`restore_feasibility`): when the seed is infeasible,
   minimize the squared constraint violation, then project onto the feasible
   set;
2. an SQP solve (SLSQP) of the energy subject to the harmonic equalities and
   boxes and the interlocking inequalities;
3. a Newton polish of the KKT system on the active set, accepted only when it
   lowers the KKT residual while staying feasible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .converter import (DesignSpec, DeviceSpec, LoadModel, PulsePattern, Symmetry, angle_jacobian,
                        check_constraints, expand_pattern, fourier_coefficients, free_angle_count,
                        reduce_pattern)
from .energy import energy_gradient, signal_energy
from .errors import InvalidDesign

INTERLOCK_MARGIN = 1e-12


@dataclass(frozen=True)
class RefineConfig:
    max_iter: int = 400
    feas_tol: float = 1e-9
    kkt_tol: float = 1e-6
    ftol: float = 1e-15
    polish_steps: int = 8
    starts: int = 1
    jitter_seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1 or self.starts < 1 or self.polish_steps < 0:
            raise InvalidDesign("max_iter and starts must be positive")
        if not (self.feas_tol > 0 and self.kkt_tol > 0 and self.ftol > 0):
            raise InvalidDesign("tolerances must be positive")


@dataclass
class RefineResult:
    status: str
    pattern: PulsePattern | None
    energy: float | None
    max_violation: float
    kkt_residual: float | None
    iterations: int
    message: str = ""
    log: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"

    def log_json(self) -> str:
        return json.dumps(self.log, indent=1) + "\n"

    def to_dict(self) -> dict:
        return {"status": self.status, "energy": self.energy, "max_violation": self.max_violation,
                "kkt_residual": self.kkt_residual, "iterations": self.iterations, "message": self.message,
                "n": list(self.pattern.n) if self.pattern else None,
                "alpha": list(self.pattern.alpha) if self.pattern else None}


class _AngleProblem:
    """Energy, harmonic and interlocking functions of the free angles of a frozen level sequence."""

    def __init__(self, p0: PulsePattern, dev: DeviceSpec, des: DesignSpec, load: LoadModel | None):
        if any(abs(b - a) != 1 for a, b in zip(p0.n, p0.n[1:])):
            raise InvalidDesign("the seed must step one level at a time")
        if p0.k != des.k:
            raise InvalidDesign(f"seed has k={p0.k}, design expects k={des.k}")
        self.dev, self.des, self.load = dev, des, load
        self.levels = dev.levels
        self.sym = des.symmetry
        self.n_free, a0 = reduce_pattern(p0, self.sym)
        self.a0 = np.array(a0)
        self.d = free_angle_count(p0.k, self.sym)
        self.D = angle_jacobian(p0.k, self.sym)
        template = self.expand(self.a0)
        self.jumps = np.diff(self.levels.values(template.n))  # u^j - u^{j-1} at alpha^j
        self.n_full = template.n
        self.shift = np.array(template.alpha) - self.D @ self.a0
        self.eq, self.box = [], []
        for e in des.harmonics.entries:
            if self._vanishes(e):
                continue
            (self.eq if e.is_equality else self.box).append(e)
        self.G, self.h = self._interlocking()

    def _vanishes(self, e) -> bool:
        if self.sym is Symmetry.FW:
            return False
        return e.order % 2 == 0 or (self.sym is Symmetry.QW and e.kind == "cosine")

    def _interlocking(self):
        """Rows of ``G a >= h`` (with a tiny safety margin) on the free angles."""
        d, theta = self.d, self.dev.theta_lock + INTERLOCK_MARGIN
        rows, rhs = [], []

        def row(coefs, b):
            r = np.zeros(d)
            for j, c in coefs:
                r[j] += c
            rows.append(r)
            rhs.append(b)

        for j in range(1, d):
            row([(j, 1.0), (j - 1, -1.0)], theta)
        if self.sym is Symmetry.FW:
            row([(0, 1.0), (d - 1, -1.0)], theta - 2 * math.pi)
        elif self.sym is Symmetry.HW:
            row([(0, 1.0), (d - 1, -1.0)], theta - math.pi)
        else:
            row([(0, 1.0)], 0.5 * theta)
            row([(d - 1, -1.0)], 0.5 * theta - 0.5 * math.pi)
        if self.sym is not Symmetry.QW:
            row([(0, 1.0)], 0.0)
        return np.array(rows), np.array(rhs)

    def expand(self, a) -> PulsePattern:
        return expand_pattern(self.n_free, [float(v) for v in a], self.levels, self.sym)

    def full(self, a) -> np.ndarray:
        return self.D @ np.asarray(a) + self.shift

    def formal(self, a) -> PulsePattern:
        # iterates may leave the ordered region; the closed forms extend analytically
        return PulsePattern.unchecked(self.n_full, self.full(a))

    # -- objective
    def energy(self, a) -> float:
        return signal_energy(self.formal(a), self.levels, self.load)

    def energy_grad(self, a) -> np.ndarray:
        return self.D.T @ energy_gradient(self.formal(a), self.levels, self.load)

    # -- harmonics
    def harmonic(self, a, e) -> float:
        spec = fourier_coefficients(self.formal(a), self.levels, max(1, e.order))
        return spec.cosine(e.order) if e.kind == "cosine" else spec.sine(e.order)

    def harmonic_grad(self, a, e) -> np.ndarray:
        alpha = self.full(a)
        l = e.order
        if e.kind == "sine":
            g = -self.jumps * np.sin(l * alpha) / math.pi
        elif l == 0:
            g = -self.jumps / math.pi
        else:
            g = -self.jumps * np.cos(l * alpha) / math.pi
        return self.D.T @ g

    def eq_residual(self, a) -> np.ndarray:
        return np.array([self.harmonic(a, e) - e.lo for e in self.eq])

    def eq_jac(self, a) -> np.ndarray:
        return np.array([self.harmonic_grad(a, e) for e in self.eq]).reshape(len(self.eq), self.d)

    def ineq(self, a) -> np.ndarray:
        vals = [self.harmonic(a, e) for e in self.box]
        return np.concatenate([self.G @ a - self.h, [v - e.lo for v, e in zip(vals, self.box)],
                               [e.hi - v for v, e in zip(vals, self.box)]])

    def ineq_jac(self, a) -> np.ndarray:
        grads = [self.harmonic_grad(a, e) for e in self.box]
        return np.vstack([self.G] + [g[None] for g in grads] + [-g[None] for g in grads])

    def violation(self, a) -> float:
        eq = np.abs(self.eq_residual(a))
        ineq = np.maximum(-self.ineq(a), 0.0)
        ineq[: len(self.h)] = np.maximum(ineq[: len(self.h)] - INTERLOCK_MARGIN, 0.0)
        return float(max(eq.max(initial=0.0), ineq.max(initial=0.0)))

    def passes(self, a, tol: float) -> bool:
        try:
            p = self.expand(a)
        except InvalidDesign:
            return False
        return check_constraints(p, self.dev, self.des, eq_tol=tol).passed


def _sqp(prob: _AngleProblem, a0, cfg: RefineConfig, log: list, fun, jac, tag: str):
    cons = [{"type": "ineq", "fun": prob.ineq, "jac": prob.ineq_jac}]
    if prob.eq:
        cons.append({"type": "eq", "fun": prob.eq_residual, "jac": prob.eq_jac})
    count = [0]

    def record(a):
        count[0] += 1
        log.append({"stage": tag, "iteration": count[0], "energy": prob.energy(a),
                    "max_violation": prob.violation(a)})

    res = minimize(fun, np.asarray(a0, dtype=float), jac=jac, method="SLSQP", constraints=cons,
                   callback=record, options={"maxiter": cfg.max_iter, "ftol": cfg.ftol})
    return np.asarray(res.x), count[0], str(res.message)


def restore_feasibility(p0: PulsePattern, dev: DeviceSpec, des: DesignSpec,
                        cfg: RefineConfig | None = None, load: LoadModel | None = None) -> RefineResult:
    """Phase one: drive harmonic residuals and interlocking hinges below tolerance (energy ignored)."""
    cfg = cfg or RefineConfig()
    prob = _AngleProblem(p0, dev, des, load or LoadModel.from_tau(0.0))
    log: list = []
    a = prob.a0.copy()
    if prob.passes(a, cfg.feas_tol):
        return RefineResult("feasible", p0, None, prob.violation(a), None, 0, "seed already feasible", log)

    def resid(z):
        ineq = prob.ineq(z)
        return np.concatenate([prob.eq_residual(z), np.minimum(ineq, 0.0)])

    def resid_jac(z):
        ineq = prob.ineq(z)
        J = prob.ineq_jac(z) * (ineq < 0)[:, None]
        return np.vstack([prob.eq_jac(z), J])

    ls = least_squares(resid, a, jac=resid_jac, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=50 * cfg.max_iter)
    log.append({"stage": "violation", "iteration": int(ls.nfev), "energy": None,
                "max_violation": prob.violation(ls.x)})
    a = ls.x
    if not prob.passes(a, cfg.feas_tol):
        # closest feasible point to the least-squares iterate, with hard constraints
        dist = lambda z: 0.5 * float(np.sum((z - ls.x) ** 2))  # noqa: E731
        a, _, _ = _sqp(prob, a, cfg, log, dist, lambda z: z - ls.x, "projection")
    viol = prob.violation(a)
    if prob.passes(a, cfg.feas_tol):
        return RefineResult("feasible", prob.expand(a), None, viol, None, len(log), "restored", log)
    return RefineResult("infeasible", None, None, viol, None, len(log), "violation stalled above tolerance", log)


def _active_jacobian(prob: _AngleProblem, a, act_tol: float = 1e-8):
    parts = [prob.eq_jac(a)] if prob.eq else []
    ineq = prob.ineq(a)
    active = np.nonzero(ineq <= act_tol)[0]
    if len(active):
        parts.append(prob.ineq_jac(a)[active])
    J = np.vstack(parts) if parts else np.zeros((0, prob.d))
    return J, active, len(prob.eq)


def kkt_residual(prob: _AngleProblem, a) -> float:
    """Norm of the energy gradient after removing its least-squares fit by active constraint normals.

    Inequality multipliers of the wrong sign are dropped and refit, so a
    point pressed against an inequality from the wrong side is not called
    stationary.
    """
    g = prob.energy_grad(a)
    J, active, n_eq = _active_jacobian(prob, a)
    if J.shape[0] == 0:
        return float(np.linalg.norm(g))
    keep = np.ones(J.shape[0], dtype=bool)
    for _ in range(J.shape[0] + 1):
        lam, *_ = np.linalg.lstsq(J[keep].T, g, rcond=None)
        full = np.zeros(J.shape[0])
        full[keep] = lam
        wrong = (np.arange(J.shape[0]) >= n_eq) & keep & (full < -1e-12)
        if not wrong.any():
            break
        keep[np.argmin(np.where(wrong, full, np.inf))] = False
    return float(np.linalg.norm(g - J[keep].T @ lam))


def _polish(prob: _AngleProblem, a, cfg: RefineConfig, log: list):
    """Newton steps on the active-set KKT system with a finite-difference Hessian of the Lagrangian."""
    best, best_r = a, kkt_residual(prob, a)
    for step in range(cfg.polish_steps):
        if best_r < 1e-12:
            break
        _, active, _ = _active_jacobian(prob, best)

        def jac(z):
            parts = [prob.eq_jac(z)] if prob.eq else []
            if len(active):
                parts.append(prob.ineq_jac(z)[active])
            return np.vstack(parts) if parts else np.zeros((0, prob.d))

        J = jac(best)
        g = prob.energy_grad(best)
        lam = np.linalg.lstsq(J.T, g, rcond=None)[0] if J.shape[0] else np.zeros(0)

        def lag_grad(z):
            return prob.energy_grad(z) - jac(z).T @ lam

        h = 1e-6
        H = np.column_stack([(lag_grad(best + h * e) - lag_grad(best - h * e)) / (2 * h)
                             for e in np.eye(prob.d)])
        H = 0.5 * (H + H.T)
        c = np.concatenate([prob.eq_residual(best) if prob.eq else np.zeros(0), prob.ineq(best)[active]])
        m = J.shape[0]
        K = np.block([[H, -J.T], [J, np.zeros((m, m))]])
        rhs = -np.concatenate([g - J.T @ lam, c])
        delta = np.linalg.lstsq(K, rhs, rcond=None)[0][: prob.d]
        cand = best + delta
        r = kkt_residual(prob, cand)
        log.append({"stage": "polish", "iteration": step + 1, "energy": prob.energy(cand),
                    "max_violation": prob.violation(cand)})
        if r < best_r and prob.passes(cand, cfg.feas_tol) and prob.energy(cand) <= prob.energy(best) + 1e-13:
            best, best_r = cand, r
        else:
            break
    return best


def refine(p0: PulsePattern, dev: DeviceSpec, des: DesignSpec, load: LoadModel,
           cfg: RefineConfig | None = None) -> RefineResult:
    """Minimize the signal energy over the angles of ``p0`` with its levels frozen."""
    cfg = cfg or RefineConfig()
    prob = _AngleProblem(p0, dev, des, load)
    log: list = []
    seeds = [prob.a0]
    rng = np.random.default_rng(cfg.jitter_seed)
    for _ in range(cfg.starts - 1):
        seeds.append(prob.a0 + rng.uniform(-0.5, 0.5, prob.d) * dev.theta_lock)

    best = None
    iterations = 0
    for s, a_seed in enumerate(seeds):
        a = a_seed
        if not prob.passes(a, cfg.feas_tol):
            try:
                start = prob.expand(a)
            except InvalidDesign:
                continue
            phase1 = restore_feasibility(start, dev, des, cfg, load)
            log.extend(dict(r, start=s) for r in phase1.log)
            if not phase1.feasible:
                continue
            a = np.array(reduce_pattern(phase1.pattern, prob.sym)[1])
        feasible_seen = [(prob.energy(a), a)]
        sub: list = []
        x, its, msg = _sqp(prob, a, cfg, sub, prob.energy, prob.energy_grad, "sqp")
        iterations += its
        if prob.passes(x, cfg.feas_tol):
            feasible_seen.append((prob.energy(x), x))
        x = _polish(prob, min(feasible_seen, key=lambda t: t[0])[1], cfg, sub)
        if prob.passes(x, cfg.feas_tol):
            feasible_seen.append((prob.energy(x), x))
        log.extend(dict(r, start=s) for r in sub)
        e_best, a_best = min(feasible_seen, key=lambda t: t[0])
        if best is None or e_best < best[0]:
            best = (e_best, a_best, msg)

    if best is None:
        return RefineResult("infeasible", None, None, prob.violation(prob.a0), None, iterations,
                            "no feasible point found", log)
    e, a, msg = best
    return RefineResult("feasible", prob.expand(a), e, prob.violation(a), kkt_residual(prob, a),
                        iterations, msg, log)
