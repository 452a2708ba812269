"""Optimal pulse patterns for multilevel converters.

Energy and spectrum models of staircase waveforms, transition graphs with
dwell-table extraction, moment relaxations giving lower bounds on the load
current distortion, angle-level refinement and harmonic elimination.
"""

from .converter import (DesignSpec, DeviceSpec, HarmonicEntry, HarmonicsSpec, LevelSet, LoadModel,
                        PatternRecord, PulsePattern, Symmetry, check_constraints, fourier_coefficients)
from .energy import energy_breakdown, energy_gradient, signal_energy
from .graph import DwellTable, build_graph, extract_pattern, pattern_to_dwell

__version__ = "0.1.0"

__all__ = [
    "DesignSpec", "DeviceSpec", "DwellTable", "HarmonicEntry", "HarmonicsSpec", "LevelSet", "LoadModel",
    "PatternRecord", "PulsePattern", "Symmetry", "build_graph", "check_constraints", "energy_breakdown",
    "energy_gradient", "extract_pattern", "fourier_coefficients", "pattern_to_dwell", "signal_energy",
]
