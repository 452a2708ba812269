import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import THETA, brute_force_paths, random_pattern
from oppbound.converter import LevelSet, PulsePattern, Symmetry, half_wave_pattern
from oppbound.errors import ExtractionError, GraphMismatch, InvalidDesign
from oppbound.graph import (DwellTable, build_graph, count_paths, enumerate_paths, extract_pattern,
                            mix_dwell, pattern_to_dwell, pure_table_support_ok, validate_dwell)

# the three-level, four-switch example pattern
FIG_N = (2, 3, 2, 1, 2)
FIG_ALPHA = (0.9, 2.1, 3.6, 5.0)


@pytest.mark.parametrize("N", range(2, 8))
@pytest.mark.parametrize("k", range(2, 13, 2))
def test_full_wave_counts(N, k):
    g = build_graph(N, k)
    assert len(g.vertices) == N * (k + 1)
    assert len(g.edges) == 2 * (N - 1) * k
    assert len(g.up_edges) == len(g.down_edges) == (N - 1) * k
    for (n, i), (m, j) in g.edges:
        assert j == i + 1 and abs(m - n) == 1


def test_small_examples():
    g = build_graph(3, 4)
    assert (len(g.vertices), len(g.edges)) == (15, 16)
    g = build_graph(2, 2)
    assert (len(g.vertices), len(g.edges)) == (6, 4)
    assert enumerate_paths(g) == [(1, 2, 1), (2, 1, 2)]


def test_quarter_wave_unipolar_paths():
    g = build_graph(5, 24, "QW", unipolar=True)
    assert g.k_eff == 6
    paths = enumerate_paths(g)
    assert len(paths) == count_paths(g) == 16
    assert (3, 4, 5, 4, 5, 4, 5) in paths
    assert all(min(p) >= 3 for p in paths)
    admissible = enumerate_paths(g, admissible=True)
    assert all(p[0] == 3 for p in admissible)
    assert len(admissible) == count_paths(g, admissible=True) == 8


def test_quarter_wave_structure():
    g = build_graph(5, 12, "QW")
    for n, i in g.vertices:
        assert (n + i - 3) % 2 == 0
    assert build_graph(5, 12, "QW", unipolar=True).vertex_set <= g.vertex_set
    with pytest.raises(InvalidDesign):
        build_graph(4, 12, "QW")
    with pytest.raises(InvalidDesign):
        build_graph(5, 10, "QW")


def test_unipolar_removes_low_levels():
    g = build_graph(5, 8, "HW", unipolar=True)
    assert all(n >= 3 for n, _ in g.vertices)


@pytest.mark.parametrize("args", [(1, 4), (3, 3), (3, -2)])
def test_build_rejects(args):
    with pytest.raises(InvalidDesign):
        build_graph(*args)


def test_unipolar_full_wave_rejected():
    with pytest.raises(InvalidDesign):
        build_graph(5, 4, "FW", unipolar=True)


@pytest.mark.parametrize("N", [2, 3, 4])
@pytest.mark.parametrize("k", [2, 4, 6, 8])
def test_full_wave_paths_match_brute_force(N, k):
    expected = brute_force_paths(N, k, range(1, N + 1), lambda p: p[-1] == p[0])
    g = build_graph(N, k)
    assert enumerate_paths(g) == expected
    assert count_paths(g) == len(expected)


def test_half_wave_unipolar_paths_match_filter():
    g = build_graph(3, 4, "HW", unipolar=True)
    every = brute_force_paths(3, 2, range(1, 4), lambda p: p[-1] == 4 - p[0])
    assert enumerate_paths(g) == [p for p in every if min(p) >= 2]
    assert enumerate_paths(g) == [(2, 3, 2)]


def test_enumeration_cap():
    with pytest.raises(InvalidDesign):
        enumerate_paths(build_graph(7, 12), cap=10)


def test_fig_pattern_dwell():
    g = build_graph(3, 4)
    xi = pattern_to_dwell(PulsePattern(FIG_N, FIG_ALPHA), g)
    assert xi.support() == [(n, i) for i, n in enumerate(FIG_N)]
    edges = (0.0,) + FIG_ALPHA + (2 * math.pi,)
    for i, n in enumerate(FIG_N):
        assert xi[(n, i)] == edges[i + 1] - edges[i]
    assert xi.mass == pytest.approx(2 * math.pi, abs=1e-12)
    assert pure_table_support_ok(xi)
    p = extract_pattern(xi)
    assert p.n == FIG_N
    assert np.max(np.abs(np.array(p.alpha) - FIG_ALPHA)) <= 1e-15


def test_constant_pattern_dwell():
    g = build_graph(3, 0)
    xi = pattern_to_dwell(PulsePattern.constant(2), g)
    assert xi.xi == {(2, 0): 2 * math.pi}


def test_pattern_graph_mismatch():
    with pytest.raises(GraphMismatch):
        pattern_to_dwell(PulsePattern(FIG_N, FIG_ALPHA), build_graph(3, 6))
    with pytest.raises(GraphMismatch):
        pattern_to_dwell(PulsePattern(FIG_N, FIG_ALPHA), build_graph(2, 4))
    with pytest.raises(GraphMismatch):
        pattern_to_dwell(PulsePattern(FIG_N, FIG_ALPHA), build_graph(3, 4, "HW"))
    with pytest.raises(GraphMismatch):
        DwellTable(build_graph(3, 4), {(4, 0): 1.0})


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), sym=st.sampled_from(["FW", "HW", "QW"]),
       k=st.sampled_from([4, 8, 12, 16]), unipolar=st.booleans())
def test_pure_table_round_trip(seed, sym, k, unipolar):
    unipolar = unipolar and sym != "FW"
    p = random_pattern(np.random.default_rng(seed), 5, k, sym, unipolar=unipolar)
    g = build_graph(5, k, sym, unipolar=unipolar)
    xi = pattern_to_dwell(p, g)
    assert xi.mass == pytest.approx(g.period, abs=1e-12)
    assert pure_table_support_ok(xi)
    assert validate_dwell(xi, THETA).passed
    back = extract_pattern(xi)
    assert back.n == p.n
    assert np.max(np.abs(np.array(back.alpha) - p.alpha)) <= 1e-14


def test_mix_dwell():
    g = build_graph(3, 4)
    a = pattern_to_dwell(PulsePattern(FIG_N, FIG_ALPHA), g)
    b = pattern_to_dwell(PulsePattern((2, 1, 2, 3, 2), (1.2, 2.4, 3.3, 4.6)), g)
    mixed = mix_dwell([a, b], [0.6, 0.4])
    for v in g.vertices:
        assert mixed[v] == pytest.approx(0.6 * a[v] + 0.4 * b[v], abs=1e-15)
    assert mixed.mass == pytest.approx(2 * math.pi, abs=1e-12)
    assert mix_dwell([a, b], [1.0, 0.0]).xi == {v: x for v, x in a.xi.items()} | {
        v: 0.0 for v in b.xi if v not in a.xi}
    assert not pure_table_support_ok(mixed)
    assert validate_dwell(mixed, THETA).passed
    p = extract_pattern(mixed)
    assert all(abs(x - y) == 1 for x, y in zip(p.n, p.n[1:]))
    assert p.n[0] == p.n[-1]
    with pytest.raises(InvalidDesign):
        mix_dwell([a, b], [0.6, 0.5])
    with pytest.raises(InvalidDesign):
        mix_dwell([a, b], [1.2, -0.2])
    with pytest.raises(GraphMismatch):
        mix_dwell([a, pattern_to_dwell(PulsePattern.constant(2), build_graph(3, 0))], [0.5, 0.5])


def test_tie_breaks_to_lower_level():
    g = build_graph(3, 2)
    xi = DwellTable(g, {(1, 0): 1.0, (3, 0): 1.0, (2, 1): 2 * math.pi - 3.0, (1, 2): 0.5, (3, 2): 0.5})
    runs = {extract_pattern(xi).n for _ in range(5)}
    assert runs == {(1, 2, 1)}


def test_extraction_errors():
    g = build_graph(3, 4)
    with pytest.raises(ExtractionError):
        extract_pattern(DwellTable(g, {}))
    with pytest.raises(ExtractionError):
        extract_pattern(DwellTable(g, {(2, 0): 7.0, (1, 1): -1.0}))


def test_validate_dwell_flags_thin_stage():
    g = build_graph(3, 4)
    xi = pattern_to_dwell(PulsePattern(FIG_N, FIG_ALPHA), g)
    entries = dict(xi.xi)
    entries[(3, 1)] = THETA / 2
    entries[(2, 2)] += 1.2 - THETA / 2
    thin = DwellTable(g, entries)
    report = validate_dwell(thin, THETA)
    assert not report.passed
    bad = [c for c in report.items if not c.passed]
    assert [c.name for c in bad] == ["interlocking"]
    assert bad[0].violations[0][0] == 1


def test_validate_dwell_mass_and_sign():
    g = build_graph(3, 4)
    report = validate_dwell(DwellTable(g, {(2, 0): 7.0, (1, 1): -0.5}), THETA)
    failed = {c.name for c in report.items if not c.passed}
    assert {"nonnegative", "mass"} <= failed


def test_serialization_round_trip():
    g = build_graph(5, 8, "HW", unipolar=True)
    p = random_pattern(np.random.default_rng(3), 5, 8, "HW", unipolar=True)
    xi = pattern_to_dwell(p, g)
    again = DwellTable.from_dict(json.loads(xi.to_json()))
    assert again.graph == g and again.xi == xi.xi
    rows = xi.to_csv().splitlines()
    assert rows[0].split(",") == ["n"] + [str(i) for i in range(g.k_eff + 1)]
    assert [r.split(",")[0] for r in rows[1:]] == ["5", "4", "3", "2", "1"]
    d = g.to_dict()
    assert d["vertex_count"] == len(g.vertices) and d["edge_count"] == len(g.edges)


def test_half_wave_terminal_rule():
    g = build_graph(5, 8, "HW")
    for path in enumerate_paths(g):
        assert path[-1] == 6 - path[0]
    # a HW pattern round-trips through the mirrored terminal level
    p = half_wave_pattern((1, 2, 3, 4, 5), (0.3, 0.9, 1.6, 2.4), LevelSet.uniform(5))
    assert extract_pattern(pattern_to_dwell(p, g)).n == p.n


def test_extended_quarter_wave_graph():
    g = build_graph(5, 24, "QW", unipolar=True, extended=True)
    assert g.k_eff == 12 and g.C_sym == 2 and g.symmetry is Symmetry.QW
    p = random_pattern(np.random.default_rng(8), 5, 24, "QW", unipolar=True)
    xi = pattern_to_dwell(p, g)
    assert xi.mass == pytest.approx(math.pi, abs=1e-12)
    back = extract_pattern(xi)
    assert back.n == p.n
    assert np.max(np.abs(np.array(back.alpha) - p.alpha)) <= 1e-13
