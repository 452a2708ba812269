"""Moment relaxation of the optimal pulse pattern problem."""

from .construct import (PseudoMomentSolution, construct_moments_from_pattern, dwell_from_solution,
                        solution_from_vector)
from .polynomial import (basis_size, harmonic_poly, lie_derivative, moment_basis, monomials, psd_size,
                         reduce_monomial, reduce_poly, trig_moment)
from .problem import MeasureSlot, PsdBlock, SdpProblem, build_moment_problem, default_current_bound

__all__ = [
    "MeasureSlot", "PsdBlock", "PseudoMomentSolution", "SdpProblem", "basis_size", "build_moment_problem",
    "construct_moments_from_pattern", "default_current_bound", "dwell_from_solution", "harmonic_poly",
    "lie_derivative", "moment_basis", "monomials", "psd_size", "reduce_monomial", "reduce_poly",
    "solution_from_vector", "trig_moment",
]
