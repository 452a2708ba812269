"""Pseudomoments of a concrete pulse pattern, and dwell tables read back from a solution.

A feasible pattern induces genuine measures on every slot of the relaxation:
occupation measures integrate ``w(cos t, sin t, phi, I)`` along the
trajectory, and the boundary and edge slots are Dirac atoms.  Plugging these
moments into the assembled problem must satisfy every row to rounding error,
which makes this module the main oracle for the assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..converter import LoadModel, PulsePattern
from ..energy import current_trajectory, flow
from ..errors import GraphMismatch, SolverFailure
from ..graph import DwellTable, pattern_to_dwell
from .problem import SdpProblem

GAUSS_NODES = 64
USABLE_STATUS = ("constructed", "optimal", "feasible")


@dataclass
class PseudoMomentSolution:
    """Flat pseudomoment vector laid out as the slots of ``problem``."""

    problem: SdpProblem
    x: np.ndarray
    status: str = "constructed"
    primal_objective: float | None = None
    dual_objective: float | None = None

    @property
    def usable(self) -> bool:
        return self.status in USABLE_STATUS

    def slot_values(self, kind: str, key) -> dict:
        s = self.problem.slot(kind, key)
        basis = self.problem.basis(s)
        return dict(zip(basis, self.x[s.vars]))

    def mass(self, kind: str, key) -> float:
        s = self.problem.slot(kind, key)
        return float(self.x[s.offset])

    @property
    def objective(self) -> float:
        return self.problem.objective_value(self.x)

    def feasibility(self) -> dict:
        prob = self.problem
        eq = prob.eq_residual(self.x)
        box = prob.box_violation(self.x)
        eig = prob.min_eigenvalues(self.x)
        return {"max_equality_residual": float(np.max(np.abs(eq))) if eq.size else 0.0,
                "max_box_violation": float(np.max(box)) if box.size else 0.0,
                "min_eigenvalue": float(np.min(eig))}


def _powers(values: np.ndarray, basis, weights: np.ndarray | None = None) -> np.ndarray:
    """``sum_j weights_j prod_v values[j, v]^e_v`` for every exponent tuple in ``basis``."""
    values = np.atleast_2d(values)
    E = np.asarray(basis)
    cols = [values[:, v][:, None] ** E[None, :, v] for v in range(values.shape[1])]
    prod = np.prod(np.stack(cols), axis=0)
    if weights is None:
        return prod.sum(axis=0)
    return weights @ prod


def construct_moments_from_pattern(p: PulsePattern, prob: SdpProblem) -> PseudoMomentSolution:
    """Moments of the measures a full-period pattern induces on ``prob``'s slots."""
    g = prob.graph
    levels = prob.levels
    pattern_to_dwell(p, g)  # raises GraphMismatch on incompatible patterns
    K, P = g.k_eff, g.period
    traj = current_trajectory(p, levels, LoadModel.from_tau(prob.tau))
    phi_s, I_s = prob.phi_scale, prob.I_bound
    tau = prob.tau

    x = np.zeros(prob.n_vars)
    path = p.n[: K + 1]
    a = list(p.alpha[:K])
    edges_t = [0.0] + a + [P]
    phi0 = 2.0 * math.pi - p.alpha[-1]
    I_at = traj.current(np.array(edges_t))

    def put(kind, key, moments):
        try:
            s = prob.slot(kind, key)
        except KeyError:
            raise GraphMismatch(f"pattern uses a pruned slot {kind}{key}") from None
        x[s.vars] += moments

    basis2, basis4 = prob.bases[2], prob.bases[4]
    put("initial", (path[0],), _powers(np.array([[phi0 / phi_s, I_at[0] / I_s]]), basis2))

    gl_t, gl_w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    for i, n in enumerate(path):
        t0, t1 = edges_t[i], edges_t[i + 1]
        half = 0.5 * (t1 - t0)
        if half <= 0:
            continue
        t = t0 + half * (gl_t + 1.0)
        start_clock = phi0 if i == 0 else 0.0
        Ival = flow(I_at[i], levels.value(n), tau, t - t0)
        pts = np.column_stack([np.cos(t), np.sin(t), (start_clock + t - t0) / phi_s, Ival / I_s])
        put("occupation", (n, i), _powers(pts, basis4, half * gl_w))

    prev_clock = phi0
    for i in range(1, K + 1):
        clock = prev_clock + edges_t[i] - edges_t[i - 1]
        kind = "step_up" if path[i] > path[i - 1] else "step_down"
        pt = np.array([[math.cos(a[i - 1]), math.sin(a[i - 1]), clock / phi_s, I_at[i] / I_s]])
        put(kind, ((path[i - 1], i - 1), (path[i], i)), _powers(pt, basis4))
        prev_clock = 0.0

    if prob.slots_of("terminal"):
        end_clock = (phi0 if K == 0 else 0.0) + P - (a[-1] if a else 0.0)
        put("terminal", (path[-1],), _powers(np.array([[end_clock / phi_s, I_at[-1] / I_s]]), basis2))
    return PseudoMomentSolution(prob, x, primal_objective=prob.objective_value(x))


def dwell_from_solution(sol: PseudoMomentSolution) -> DwellTable:
    """Occupation masses ``y_{(n,i)}[1]`` as a dwell table, clipped at zero."""
    if not sol.usable:
        raise SolverFailure(f"solution status {sol.status!r} does not certify a feasible point")
    prob = sol.problem
    xi = {s.key: max(float(sol.x[s.offset]), 0.0) for s in prob.slots_of("occupation")}
    return DwellTable(prob.graph, xi)


def solution_from_vector(prob: SdpProblem, x, status: str = "unknown") -> PseudoMomentSolution:
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.n_vars,):
        raise ValueError(f"expected {prob.n_vars} pseudomoments, got {x.shape}")
    return PseudoMomentSolution(prob, x, status, prob.objective_value(x))
