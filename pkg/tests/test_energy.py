import math

import numpy as np
import pytest
from scipy import integrate
from hypothesis import given, settings, strategies as st

from helpers import LEVELS5, finite_difference_gradient, ode_energy, random_pattern
from oppbound.converter import LevelSet, LoadModel, PulsePattern, quarter_wave_pattern
from oppbound.energy import (current_trajectory, energy_breakdown, energy_gradient, energy_mixed,
                             energy_numeric_oracle, energy_pure_reactance, external_current,
                             periodic_initial_current, rollout, signal_energy)
from oppbound.errors import NoPeriodicSolution, WrongRegime

SQUARE = PulsePattern((2, 1, 2), (math.pi, 2 * math.pi))
LEVELS2 = LevelSet((-1.0, 1.0))


def test_node_recurrence():
    rng = np.random.default_rng(11)
    p = random_pattern(rng, 5, 8, "FW")
    u = p.segment_levels(LEVELS5)
    edges = p.extended_angles()
    for tau in (0.0, 0.7):
        nodes = rollout(p, LEVELS5, tau, 0.3)
        for i in range(1, p.k + 2):
            dt = edges[i] - edges[i - 1]
            if tau == 0:
                expected = nodes[i - 1] + u[i - 1] * dt
            else:
                expected = u[i - 1] / tau + (nodes[i - 1] - u[i - 1] / tau) * math.exp(-tau * dt)
            assert nodes[i] == pytest.approx(expected, abs=1e-13)


def test_periodic_initial_current():
    assert periodic_initial_current(PulsePattern.constant(3), LEVELS5, LoadModel.from_tau(1.0)) == 0.0
    assert periodic_initial_current(SQUARE, LEVELS2, LoadModel.from_tau(0.0)) == pytest.approx(-math.pi / 2)
    p = quarter_wave_pattern((3, 4, 5, 4, 5, 4, 5), (0.3302, 0.9898, 1.0951, 1.2351, 1.3797, 1.4910), LEVELS5)
    load = LoadModel.from_tau(0.5)
    I0 = periodic_initial_current(p, LEVELS5, load)
    assert abs(current_trajectory(p, LEVELS5, load, I0).nodes[-1] - I0) < 1e-10


def test_periodic_current_needs_zero_mean_when_lossless():
    with pytest.raises(NoPeriodicSolution):
        periodic_initial_current(PulsePattern((4, 5, 4), (1.0, 2.0)), LEVELS5, LoadModel.from_tau(0.0))


def test_trivial_energies():
    zero = PulsePattern.constant(3)
    assert signal_energy(zero, LEVELS5, LoadModel.from_tau(0.0), I0=0.0) == 0.0
    assert signal_energy(zero, LEVELS5, LoadModel.from_tau(1.0)) == 0.0
    parts = energy_breakdown(zero, LEVELS5, LoadModel.from_tau(0.0), I0=0.7)
    assert parts.E_p == pytest.approx(2 * math.pi * 0.49, rel=1e-15)


def test_square_wave_triangle_current():
    # zero-mean triangle of amplitude pi/2: integral of I^2 over 2pi is 2pi (pi/2)^2 / 3
    exact = math.pi ** 3 / 6
    load = LoadModel.from_tau(0.0)
    assert signal_energy(SQUARE, LEVELS2, load) == pytest.approx(exact, rel=1e-14)
    assert energy_numeric_oracle(SQUARE, LEVELS2, load) == pytest.approx(exact, rel=1e-12)


def test_regime_errors():
    p = random_pattern(np.random.default_rng(12), 5, 4, "HW")
    with pytest.raises(WrongRegime):
        energy_pure_reactance(current_trajectory(p, LEVELS5, LoadModel.from_tau(0.5)))
    with pytest.raises(WrongRegime):
        energy_mixed(current_trajectory(p, LEVELS5, LoadModel.from_tau(0.0)))


@pytest.mark.parametrize("tau,A,phi", [(0.0, 0.8, 0.3), (0.5, 0.0, 0.0), (1.0, 0.8, 1.1), (5.0, 0.8, -0.4)])
def test_closed_form_matches_ode_oracle(tau, A, phi):
    rng = np.random.default_rng(int(10 * tau) + 13)
    load = LoadModel.from_tau(tau, A, phi)
    for j in range(6):
        sym = ("FW", "HW", "QW")[j % 3]
        p = random_pattern(rng, 5, 8, sym, zero_mean=True)
        assert signal_energy(p, LEVELS5, load) == pytest.approx(ode_energy(p, LEVELS5, tau, A, phi), rel=1e-9)


def test_external_energy_closed_form():
    for tau in (0.0, 0.5, 3.0):
        load = LoadModel.from_tau(tau, 0.8, 0.4)
        parts = energy_breakdown(PulsePattern.constant(3), LEVELS5, load, I0=0.0 if tau == 0 else None)
        assert parts.E_ext == pytest.approx(math.pi * 0.64 / (tau ** 2 + 1), rel=1e-14)
        quad = integrate.quad(lambda t: float(external_current(t, 0.8, 0.4, tau)) ** 2, 0, 2 * math.pi)[0]
        assert parts.E_ext == pytest.approx(quad, rel=1e-12)


def test_regime_continuity():
    rng = np.random.default_rng(14)
    for _ in range(5):
        p = random_pattern(rng, 5, 8, "HW")
        lossless = signal_energy(p, LEVELS5, LoadModel.from_tau(0.0))
        tiny = signal_energy(p, LEVELS5, LoadModel.from_tau(1e-8))
        assert tiny == pytest.approx(lossless, rel=1e-4)


def test_level_scaling_quadruples_energy():
    rng = np.random.default_rng(15)
    p = random_pattern(rng, 5, 8, "HW")
    doubled = LevelSet(tuple(2 * v for v in LEVELS5.levels))
    load = LoadModel.from_tau(0.0)
    assert signal_energy(p, doubled, load) == pytest.approx(4 * signal_energy(p, LEVELS5, load), rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), tau=st.sampled_from([0.0, 0.5, 1.0, 5.0]),
       A=st.sampled_from([0.0, 0.8]), k=st.sampled_from([4, 8, 12]))
def test_closed_form_matches_segment_oracle(seed, tau, A, k):
    p = random_pattern(np.random.default_rng(seed), 5, k, "FW", zero_mean=True)
    load = LoadModel.from_tau(tau, A, 0.3)
    assert signal_energy(p, LEVELS5, load) == pytest.approx(energy_numeric_oracle(p, LEVELS5, load), rel=1e-8)


def test_breakdown_nonnegative():
    rng = np.random.default_rng(16)
    for tau in (0.0, 1.0):
        p = random_pattern(rng, 5, 8, "QW")
        parts = energy_breakdown(p, LEVELS5, LoadModel.from_tau(tau, 0.8, 0.2))
        assert parts.E_ext >= 0 and parts.E_p >= 0 and parts.total >= 0
        assert parts.total == pytest.approx(parts.E_ext + 2 * parts.E_mix + parts.E_p)


@pytest.mark.parametrize("tau,A", [(0.0, 0.0), (1.0, 0.0), (0.5, 0.8)])
def test_gradient_matches_finite_differences(tau, A):
    rng = np.random.default_rng(17 + int(tau * 10))
    load = LoadModel.from_tau(tau, A, 0.3)
    for _ in range(5):
        p = random_pattern(rng, 5, 8, "FW", zero_mean=True)
        fd = finite_difference_gradient(
            lambda a: signal_energy(PulsePattern.unchecked(p.n, a), LEVELS5, load), p.alpha)
        assert np.allclose(energy_gradient(p, LEVELS5, load), fd, rtol=1e-5, atol=1e-9)
