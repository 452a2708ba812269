import importlib.util
import json
import math
import os
import shlex
import sys
from pathlib import Path

import pytest

from oppbound.converter import LevelSet, quarter_wave_pattern
from oppbound.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_SOLVER, SOLVER_ENV, main

GOLDEN = Path(__file__).parent / "golden"
TOOLS = Path(__file__).parents[1] / "tools"
UPDATE = os.environ.get("OPPBOUND_UPDATE_GOLDEN") == "1"

PRINTED_K24 = {"levels": [-1, -0.5, 0, 0.5, 1], "n": [3, 4, 5, 4, 5, 4, 5], "symmetry": "QW", "unipolar": True,
               "alpha": [0.3302, 0.9898, 1.0951, 1.2351, 1.3797, 1.4910]}
SQUARE = {"levels": [-1, 1], "n": [2, 1, 2], "alpha": [math.pi / 2, 3 * math.pi / 2]}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(path, data):
    path.write_text(json.dumps(data))
    return path


def expand_quarter(rec):
    """Full-period pattern record for a quarter listing."""
    levels = LevelSet(tuple(rec["levels"]))
    p = quarter_wave_pattern(rec["n"], rec["alpha"], levels)
    return dict(rec, n=list(p.n), alpha=list(p.alpha))


def close(a, b, path="$"):
    if isinstance(a, dict):
        assert isinstance(b, dict) and a.keys() == b.keys(), path
        for k in a:
            close(a[k], b[k], f"{path}.{k}")
    elif isinstance(a, list):
        assert isinstance(b, list) and len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            close(x, y, f"{path}[{i}]")
    elif isinstance(a, float) and isinstance(b, (int, float)) and not isinstance(b, bool):
        assert b == pytest.approx(a, rel=1e-12, abs=1e-14), path
    else:
        assert a == b, path


def check_golden(name, text, parse=json.loads):
    path = GOLDEN / name
    if UPDATE or not path.exists():
        GOLDEN.mkdir(exist_ok=True)
        path.write_text(text)
    if parse is None:
        assert text == path.read_text()
    else:
        close(parse(path.read_text()), parse(text))


# ---------------------------------------------------------------- golden outputs


def test_analyze_square_golden(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", write(tmp_path / "sq.json", SQUARE), "--N", 2, "--orders", 5,
                       "--lmax", 200)
    assert code == EXIT_OK
    check_golden("analyze_square.json", out)


def test_analyze_printed_golden(tmp_path, capsys):
    rec = write(tmp_path / "k24.json", expand_quarter(PRINTED_K24))
    code, out, _ = run(capsys, "analyze", rec, "--tau", 0.5, "--M", 0.8, "--orders", 13)
    # four-decimal angles miss the strict b1 equality
    assert code == EXIT_INFEASIBLE
    report = json.loads(out)
    failed = [c["name"] for c in report["constraints"]["checks"] if not c["passed"]]
    assert failed == ["harmonics"]
    assert report["energy"]["total"] == pytest.approx(1.6077893, abs=1e-7)
    assert report["tdd"]["relative_difference"] < 1e-4
    check_golden("analyze_k24.json", out)


def test_graph_golden(capsys):
    code, out, _ = run(capsys, "graph", "--N", 5, "--k", 24, "--symmetry", "QW", "--unipolar", "--paths")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["path_count"] == 16 and data["admissible_path_count"] == 8
    assert [3, 4, 5, 4, 5, 4, 5] in data["paths"]
    check_golden("graph_qw_k24.json", out)


def test_sweep_golden(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(SOLVER_ENV, raising=False)
    out_csv = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--symmetry", "QW", "--unipolar", "--k-grid", "8,12", "--beta-grid", "1:2:1",
                     "--tau-grid", 0.5, "--M-grid", 0.8, "--she", "--starts", 8, "--out", out_csv,
                     "--work-dir", tmp_path / "work")
    assert code == EXIT_OK
    text = out_csv.read_text()
    lines = text.splitlines()
    assert lines[0].startswith("# oppbound sweep format 1")
    assert [r.split(",")[:5] for r in lines[2:]] == [
        ["8", "1", "0.5", "0.8", "exported"], ["8", "2", "0.5", "0.8", "exported"],
        ["12", "1", "0.5", "0.8", "exported"], ["12", "2", "0.5", "0.8", "exported"]]
    assert (tmp_path / "sweep.timings.csv").exists()
    assert len(list((tmp_path / "work").glob("*.dat-s"))) == 4
    check_golden("sweep_qw.csv", text, parse=None)


def test_reruns_are_byte_identical(tmp_path, capsys):
    rec = write(tmp_path / "k24.json", expand_quarter(PRINTED_K24))
    outs = [run(capsys, "analyze", rec, "--tau", 0.5, "--M", 0.8)[1] for _ in range(2)]
    assert outs[0] == outs[1]
    files = []
    for name in ("a.dat-s", "b.dat-s"):
        code, _, _ = run(capsys, "bound", "--N", 5, "--k", 8, "--symmetry", "HW", "--M", 0.8, "--beta", 2,
                         "--out", tmp_path / name)
        assert code == EXIT_OK
        files.append((tmp_path / name).read_bytes())
    assert files[0] == files[1]


def test_sweep_jobs_keep_order(tmp_path, capsys):
    rows = []
    for jobs in (1, 2):
        out = tmp_path / f"s{jobs}.csv"
        run(capsys, "sweep", "--symmetry", "HW", "--k-grid", "4,8", "--beta-grid", 1, "--M-grid", "0.6,0.8",
            "--jobs", jobs, "--out", out, "--work-dir", tmp_path / f"w{jobs}")
        rows.append(out.read_text())
    assert rows[0] == rows[1]


# ---------------------------------------------------------------- exit codes


def test_exit_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "analyze", bad)[0] == EXIT_INPUT
    assert run(capsys, "analyze", tmp_path / "missing.json")[0] == EXIT_INPUT
    assert run(capsys, "graph", "--N", 4, "--k", 8, "--symmetry", "QW")[0] == EXIT_INPUT
    assert run(capsys, "graph", "--k", 7)[0] == EXIT_INPUT
    assert run(capsys, "nonsense")[0] == EXIT_INPUT
    assert run(capsys, "sweep", "--k-grid", "a:b")[0] == EXIT_INPUT


def test_exit_infeasible(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    rec = write(tmp_path / "k24.json", expand_quarter(PRINTED_K24))
    code, out, _ = run(capsys, "refine", rec, "--tau", 0.5, "--M", 1.5)
    assert code == EXIT_INFEASIBLE and json.loads(out)["status"] == "infeasible"
    code, _, _ = run(capsys, "she", "--k", 20, "--symmetry", "QW", "--unipolar", "--M", 0.8, "--starts", 8)
    assert code == EXIT_INFEASIBLE


def test_exit_solver_failure(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(SOLVER_ENV, raising=False)
    base = ["bound", "--N", 2, "--k", 2, "--M", 0.5]
    code, _, err = run(capsys, *base, "--solve")
    assert code == EXIT_SOLVER and SOLVER_ENV in err
    assert run(capsys, *base, "--solver", "no-such-solver-binary {in} {out}")[0] == EXIT_SOLVER
    assert run(capsys, *base, "--solver", "false {in} {out}")[0] == EXIT_SOLVER
    # succeeds but writes nothing
    assert run(capsys, *base, "--solver", "true {in} {out}")[0] == EXIT_SOLVER


def test_config_file(tmp_path, capsys):
    cfg = write(tmp_path / "cfg.json", {"N": 5, "k": 24, "symmetry": "QW", "unipolar": True})
    code, out, _ = run(capsys, "graph", "--config", cfg)
    assert code == EXIT_OK and json.loads(out)["path_count"] == 16
    # flags override the file
    code, out, _ = run(capsys, "graph", "--config", cfg, "--k", 12)
    assert json.loads(out)["k"] == 12
    bad = write(tmp_path / "bad.json", {"N": 5, "nope": 1})
    assert run(capsys, "graph", "--config", bad)[0] == EXIT_INPUT


def test_degrees_flag(tmp_path, capsys):
    rec = write(tmp_path / "sq.json", SQUARE)
    _, out, _ = run(capsys, "analyze", rec, "--N", 2, "--degrees", "--lmax", 50)
    assert json.loads(out)["pattern"]["alpha"] == pytest.approx([90.0, 270.0])


def test_she_writes_records(tmp_path, capsys):
    code, out, _ = run(capsys, "she", "--k", 28, "--symmetry", "QW", "--unipolar", "--M", 0.8, "--tau", 1,
                       "--quarter-levels", "3,4,3,4,5,4,5,4", "--starts", 32, "--out-dir", tmp_path)
    assert code == EXIT_OK
    data = json.loads(out)
    assert (tmp_path / "she_starts.csv").exists()
    assert list(tmp_path.glob("she_*_*.json"))
    text = json.dumps(data)
    assert "1.00595" in text


def test_refine_command(tmp_path, capsys):
    rec = write(tmp_path / "k24.json", expand_quarter(PRINTED_K24))
    code, out, _ = run(capsys, "refine", rec, "--tau", 0.5, "--M", 0.8, "--out", tmp_path / "r.json",
                       "--log", tmp_path / "log.json")
    assert code == EXIT_OK
    assert json.loads(out)["energy"] == pytest.approx(1.6092146, abs=1e-6)
    assert json.loads((tmp_path / "r.json").read_text())["k"] == 24
    json.loads((tmp_path / "log.json").read_text())


@pytest.mark.skipif(importlib.util.find_spec("clarabel") is None, reason="clarabel not installed")
def test_bound_and_extract_with_solver(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    solver = f"{shlex.quote(sys.executable)} {shlex.quote(str(TOOLS / 'solve_sdpa.py'))} {{in}} {{out}}"
    args = ["--N", 5, "--k", 8, "--symmetry", "HW", "--unipolar", "--M", 0.8, "--tau", 0.5, "--beta", 1]
    code, out, err = run(capsys, "bound", *args, "--solver", solver, "--out", "p.dat-s")
    assert code == EXIT_OK, err
    bound = json.loads(out)["bound"]
    assert f"p*_1 = {bound:.10g}" in err
    assert (tmp_path / "p.dwell.csv").exists()
    code, out, err = run(capsys, "extract", *args, "--solution", "p.sol", "--out", "x.json")
    assert code in (EXIT_OK, EXIT_INFEASIBLE), err
    data = json.loads(out)
    assert data["bound"] == bound
    assert data["extracted"]["energy"] >= bound - 1e-6
    if code == EXIT_OK:
        assert data["refined"]["energy"] >= bound - 1e-6
