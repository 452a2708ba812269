import json
import math

import numpy as np
import pytest

from helpers import LEVELS5, THETA, finite_difference_gradient, random_pattern
from oppbound.converter import (DesignSpec, DeviceSpec, LoadModel, PulsePattern, check_constraints,
                                fourier_coefficients, quarter_wave_pattern)
from oppbound.energy import signal_energy
from oppbound.errors import InvalidDesign
from oppbound.localsearch import RefineConfig, refine, restore_feasibility

DEVICE = DeviceSpec(50.0, 1e-4, LEVELS5)
PRINTED_K24 = quarter_wave_pattern((3, 4, 5, 4, 5, 4, 5), (0.3302, 0.9898, 1.0951, 1.2351, 1.3797, 1.4910),
                                   LEVELS5)
DESIGN_K24 = DesignSpec.with_modulation(24, "QW", 0.8, True)
LOAD_K24 = LoadModel.from_tau(0.5)


def b1(p):
    return fourier_coefficients(p, LEVELS5, 1).sine(1)


@pytest.fixture(scope="module")
def refined_k24():
    return refine(PRINTED_K24, DEVICE, DESIGN_K24, LOAD_K24)


def test_printed_seed_is_repaired(refined_k24):
    r = refined_k24
    assert r.feasible
    assert abs(b1(r.pattern) - 0.8) <= 1e-9
    assert check_constraints(r.pattern, DEVICE, DESIGN_K24).passed
    assert r.pattern.n == PRINTED_K24.n
    # the printed angles carry four decimals, so the repaired optimum sits close to them
    assert np.max(np.abs(np.array(r.pattern.alpha) - PRINTED_K24.alpha)) < 2e-3
    assert r.kkt_residual < 1e-6
    assert r.energy == pytest.approx(1.6092, abs=5e-5)


def test_optimal_seed_stays_put(refined_k24):
    again = refine(refined_k24.pattern, DEVICE, DESIGN_K24, LOAD_K24)
    assert again.feasible
    assert np.max(np.abs(np.array(again.pattern.alpha) - refined_k24.pattern.alpha)) < 1e-4
    assert again.energy == pytest.approx(refined_k24.energy, abs=1e-6)


def test_refine_is_deterministic():
    a = refine(PRINTED_K24, DEVICE, DESIGN_K24, LOAD_K24)
    b = refine(PRINTED_K24, DEVICE, DESIGN_K24, LOAD_K24)
    assert a.pattern == b.pattern and a.energy == b.energy and a.log == b.log


def test_fundamental_offset_seed():
    # the seed overshoots the target fundamental by 0.02
    seed = refine(PRINTED_K24, DEVICE, DesignSpec.with_modulation(24, "QW", 0.82, True), LOAD_K24).pattern
    assert b1(seed) == pytest.approx(0.82, abs=1e-9)
    fixed = restore_feasibility(seed, DEVICE, DESIGN_K24)
    assert fixed.feasible and abs(b1(fixed.pattern) - 0.8) < 1e-9
    r = refine(seed, DEVICE, DESIGN_K24, LOAD_K24)
    assert r.feasible and abs(b1(r.pattern) - 0.8) <= 1e-9
    assert check_constraints(r.pattern, DEVICE, DESIGN_K24).passed


def test_feasible_seed_returned_unchanged():
    rng = np.random.default_rng(1)
    p = random_pattern(rng, 5, 12, "HW")
    des = DesignSpec.with_modulation(12, "HW", b1(p))
    out = restore_feasibility(p, DEVICE, des)
    assert out.feasible and out.pattern is p


def test_interlocking_violation_repaired(refined_k24):
    alpha = list(PRINTED_K24.alpha[:6])
    alpha[2] = alpha[1] + 0.4 * THETA
    seed = quarter_wave_pattern(PRINTED_K24.n[:7], alpha, LEVELS5)
    assert not check_constraints(seed, DEVICE, DESIGN_K24).passed
    fixed = restore_feasibility(seed, DEVICE, DESIGN_K24)
    assert fixed.feasible
    assert check_constraints(fixed.pattern, DEVICE, DESIGN_K24).passed
    r = refine(seed, DEVICE, DESIGN_K24, LOAD_K24)
    assert r.feasible and r.energy == pytest.approx(refined_k24.energy, abs=1e-6)


def test_unreachable_fundamental_is_infeasible():
    des = DesignSpec.with_modulation(24, "QW", 1.5, True)
    r = refine(PRINTED_K24, DEVICE, des, LOAD_K24)
    assert r.status == "infeasible" and r.pattern is None and r.energy is None
    assert r.max_violation > 1e-3


@pytest.mark.parametrize("sym", ["FW", "HW", "QW"])
def test_refine_never_worsens_feasible_seed(sym):
    rng = np.random.default_rng(7)
    tau = 0.7
    for _ in range(3):
        p = random_pattern(rng, 5, 12, sym, zero_mean=sym == "FW")
        des = DesignSpec.with_modulation(12, sym, b1(p))
        r = refine(p, DEVICE, des, LoadModel.from_tau(tau))
        assert r.feasible
        assert r.energy <= signal_energy(p, LEVELS5, LoadModel.from_tau(tau)) + 1e-12
        assert check_constraints(r.pattern, DEVICE, des).passed
        assert r.pattern.n == p.n


def test_log_energy_is_monotone_after_feasibility(refined_k24):
    sqp = [row for row in refined_k24.log if row["stage"] == "sqp" and row["max_violation"] <= 1e-9]
    energies = [row["energy"] for row in sqp]
    best = np.minimum.accumulate(energies)
    assert refined_k24.energy <= best[-1] + 1e-12
    json.loads(refined_k24.log_json())


def test_kkt_stationarity_by_finite_differences(refined_k24):
    # the energy cannot fall along any feasible direction of the free angles
    p = refined_k24.pattern
    a = np.array(p.alpha[:6])
    load = LOAD_K24

    def energy(z):
        return signal_energy(quarter_wave_pattern(p.n[:7], tuple(z), LEVELS5), LEVELS5, load)

    g = finite_difference_gradient(energy, a)
    du = np.diff(LEVELS5.values(p.n[:7]))
    normal = -4.0 / math.pi * np.sin(a) * du    # gradient of b1 over the free angles
    lam = g @ normal / (normal @ normal)
    assert np.linalg.norm(g - lam * normal) < 1e-5


def test_config_validation():
    with pytest.raises(InvalidDesign):
        RefineConfig(max_iter=0)
    with pytest.raises(InvalidDesign):
        RefineConfig(feas_tol=0)


def test_multistart_is_reproducible(refined_k24):
    cfg = RefineConfig(starts=3, jitter_seed=5)
    a = refine(PRINTED_K24, DEVICE, DESIGN_K24, LOAD_K24, cfg)
    b = refine(PRINTED_K24, DEVICE, DESIGN_K24, LOAD_K24, cfg)
    assert a.pattern == b.pattern
    assert a.energy <= refined_k24.energy + 1e-9


def test_result_record():
    r = refine(PulsePattern((3, 4, 3, 2, 3), (0.5, 2.0, 3.6, 5.2)), DEVICE,
               DesignSpec.with_modulation(4, "FW", 0.3), LoadModel.from_tau(1.0))
    d = r.to_dict()
    assert d["status"] == r.status
    if r.feasible:
        assert d["n"] == [3, 4, 3, 2, 3] and len(d["alpha"]) == 4
