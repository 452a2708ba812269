"""Command-line front end: ``oppbound analyze | bound | extract | refine | sweep | she | graph``.

Exit codes are 0 on success, 2 for input errors, 3 when the result is
infeasible and 4 when the external solver fails or is missing.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import shlex
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .converter import (DesignSpec, DeviceSpec, HarmonicEntry, HarmonicsSpec, LevelSet, LoadModel,
                        PatternRecord, PulsePattern, Symmetry, check_constraints, fourier_coefficients,
                        load_spectrum, tdd_from_spectrum, tdd_time_domain)
from .energy import energy_breakdown, signal_energy
from .errors import ExtractionError, InfeasiblePattern, OppError, SolverFailure
from .graph import build_graph, count_paths, enumerate_paths, extract_pattern
from .localsearch import RefineConfig, refine
from .moment import build_moment_problem, dwell_from_solution
from .moment.sdpa import export_interchange, import_solution, sidecar_path
from .she import SheSpec, solve_she

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4
SOLVER_ENV = "OPPBOUND_SOLVER"
SWEEP_FORMAT = 1
SWEEP_COLUMNS = ("k", "beta", "tau", "M", "status", "n_vars", "max_block", "bound",
                 "candidate_energy", "refined_energy", "gap", "she_energy", "she_gap")
TIMING_COLUMNS = ("k", "beta", "tau", "M", "export_s", "solve_s", "refine_s", "she_s")
INFEASIBLE_STATUS = ("infeasible",)


class InputError(OppError, ValueError):
    """Bad command-line or configuration input."""


class InfeasibleResult(OppError):
    def __init__(self, message: str, payload: dict | None = None):
        super().__init__(message)
        self.payload = payload


# ---------------------------------------------------------------- configuration


def _floats(value) -> tuple[float, ...]:
    """``"0,0.5,1"``, ``"0:5:0.5"`` (inclusive) or a list."""
    if value is None:
        return ()
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, str):
        out: list[float] = []
        for part in value.split(","):
            part = part.strip()
            if not part:
                continue
            if ":" in part:
                lo, hi, step = (float(v) for v in part.split(":"))
                if step <= 0:
                    raise InputError(f"range {part!r} needs a positive step")
                count = int(math.floor((hi - lo) / step + 1e-9)) + 1
                out.extend(round(lo + j * step, 12) for j in range(count))
            else:
                out.append(float(part))
        return tuple(out)
    return tuple(float(v) for v in value)


def _ints(value) -> tuple[int, ...]:
    vals = _floats(value)
    if any(v != int(v) for v in vals):
        raise InputError(f"expected integers, got {value!r}")
    return tuple(int(v) for v in vals)


def _harmonic(text) -> HarmonicEntry:
    """``kind:order:lo:hi`` or a 4-element list; ``kind`` is ``sine``/``cosine`` (or ``b``/``a``)."""
    parts = text.split(":") if isinstance(text, str) else list(text)
    if len(parts) != 4:
        raise InputError(f"harmonic box {text!r} must be kind:order:lo:hi")
    kind = {"a": "cosine", "b": "sine"}.get(str(parts[0]), str(parts[0]))
    try:
        return HarmonicEntry(kind, int(parts[1]), float(parts[2]), float(parts[3]))
    except ValueError as exc:
        raise InputError(f"harmonic box {text!r}: {exc}") from None


@dataclass
class RunConfig:
    """Validated settings of one command run."""

    command: str
    input: str | None = None
    output: str | None = None
    N: int = 5
    f1: float = 50.0
    Ts: float = 1e-4
    level_values: tuple[float, ...] = ()
    k: int = 24
    symmetry: str = "FW"
    unipolar: bool = False
    M: float | None = None
    harmonics: tuple[HarmonicEntry, ...] = ()
    tau: float = 0.0
    A: float = 0.0
    phi: float = 0.0
    beta: int = 1
    extended: bool = False
    I_bound: float | None = None
    solver: str | None = None
    solve: bool = False
    k_grid: tuple[int, ...] = ()
    beta_grid: tuple[int, ...] = ()
    tau_grid: tuple[float, ...] = ()
    M_grid: tuple[float, ...] = ()
    options: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        d = vars(ns)
        known = {f for f in cls.__dataclass_fields__} - {"command", "options", "harmonics", "level_values",
                                                          "k_grid", "beta_grid", "tau_grid", "M_grid"}
        kw = {key: d[key] for key in known if key in d and d[key] is not None}
        kw["harmonics"] = tuple(_harmonic(h) for h in (d.get("harmonic") or ()))
        kw["level_values"] = _floats(d.get("level_values"))
        for name, conv in (("k_grid", _ints), ("beta_grid", _ints), ("tau_grid", _floats), ("M_grid", _floats)):
            kw[name] = conv(d.get(name))
        skip = set(known) | {"harmonic", "level_values", "k_grid", "beta_grid", "tau_grid", "M_grid",
                             "command", "config", "func"}
        kw["options"] = {key: v for key, v in d.items() if key not in skip}
        cfg = cls(command=d["command"], **kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.N < 2:
            raise InputError("N must be at least 2")
        if self.level_values and len(self.level_values) != self.N:
            raise InputError(f"--level-values needs {self.N} entries")
        if self.beta < 1 or any(b < 1 for b in self.beta_grid):
            raise InputError("beta must be at least 1")
        if self.tau < 0 or any(t < 0 for t in self.tau_grid):
            raise InputError("tau must be nonnegative")
        if self.I_bound is not None and not self.I_bound > 0:
            raise InputError("--I-bound must be positive")
        Symmetry.parse(self.symmetry)
        self.device()

    # builders
    def levels(self) -> LevelSet:
        return LevelSet(self.level_values) if self.level_values else LevelSet.uniform(self.N)

    def device(self) -> DeviceSpec:
        return DeviceSpec(self.f1, self.Ts, self.levels())

    def load(self, tau: float | None = None) -> LoadModel:
        return LoadModel.from_tau(self.tau if tau is None else tau, self.A, self.phi)

    def design(self, k: int | None = None, M: float | None = None, symmetry=None,
               unipolar: bool | None = None) -> DesignSpec:
        k = self.k if k is None else k
        M = self.M if M is None else M
        sym = Symmetry.parse(self.symmetry if symmetry is None else symmetry)
        uni = self.unipolar if unipolar is None else unipolar
        if M is None:
            return DesignSpec(k, sym, uni, HarmonicsSpec(self.harmonics))
        return DesignSpec.with_modulation(k, sym, M, uni, self.harmonics)

    def graph(self, k: int | None = None, tau: float | None = None):
        sym = Symmetry.parse(self.symmetry)
        tau = self.tau if tau is None else tau
        extended = sym is Symmetry.QW and (self.extended or tau > 0)
        return build_graph(self.N, self.k if k is None else k, sym, self.unipolar, extended, self.levels())

    def solver_template(self) -> str | None:
        return self.solver or os.environ.get(SOLVER_ENV) or None


# ---------------------------------------------------------------- output helpers


def _clean(obj):
    """JSON-safe copy: tuples to lists, numpy scalars to floats, non-finite to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj) + 0.0
        return v if math.isfinite(v) else str(v)
    return obj


def _emit(payload: dict, out=None) -> None:
    text = json.dumps(_clean(payload), indent=1) + "\n"
    (out or sys.stdout).write(text)


def _angles(alpha, degrees: bool) -> list[float]:
    return [math.degrees(a) for a in alpha] if degrees else [float(a) for a in alpha]


def _pattern_dict(p: PulsePattern | None, degrees: bool) -> dict | None:
    if p is None:
        return None
    return {"n": list(p.n), "alpha": _angles(p.alpha, degrees), "k": p.k}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.10g" % v
    return str(v)


def _load_record(path) -> PatternRecord:
    if path is None:
        raise InputError("a pattern file is required")
    try:
        return PatternRecord.load(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- external solver


def run_solver(template: str | None, problem_path: Path, solution_path: Path) -> float:
    """Execute the solver command template; returns wall time.  Output of a failing solver is relayed verbatim."""
    if not template:
        raise SolverFailure(f"no SDP solver configured: pass --solver 'CMD {{in}} {{out}}' or set {SOLVER_ENV}, "
                            f"e.g. --solver 'python tools/solve_sdpa.py {{in}} {{out}}'")
    if "{in}" not in template or "{out}" not in template:
        raise InputError("the solver template needs both {in} and {out} placeholders")
    argv = [tok.replace("{in}", str(problem_path)).replace("{out}", str(solution_path))
            for tok in shlex.split(template)]
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except OSError as exc:
        raise SolverFailure(f"cannot start solver {argv[0]!r}: {exc.strerror}; check --solver or {SOLVER_ENV}") \
            from None
    if proc.returncode != 0:
        sys.stderr.write(proc.stdout)
        sys.stderr.write(proc.stderr)
        raise SolverFailure(f"solver exited with status {proc.returncode}")
    if not solution_path.exists():
        raise SolverFailure(f"solver did not write {solution_path}")
    return time.perf_counter() - t0


def _solution_status(path: Path) -> str | None:
    side = sidecar_path(path)
    if not side.exists():
        return None
    try:
        return str(json.loads(side.read_text()).get("status"))
    except (json.JSONDecodeError, AttributeError):
        return None


def _import_checked(path: Path, prob):
    status = _solution_status(path)
    if status in INFEASIBLE_STATUS:
        raise InfeasibleResult(f"the relaxation is {status}: no pulse pattern meets the design")
    sol = import_solution(path, prob)
    if not sol.usable:
        raise SolverFailure(f"solver returned status {sol.status!r}")
    return sol


# ---------------------------------------------------------------- pipeline pieces


def _refine_config(cfg: RunConfig) -> RefineConfig:
    o = cfg.options
    return RefineConfig(max_iter=int(o.get("max_iter") or 400), starts=int(o.get("starts_refine") or 1))


def _candidate(xi, g, cfg: RunConfig, des, load, do_refine: bool) -> dict:
    dev = cfg.device()
    p = extract_pattern(xi, g, dev.levels)
    out = {"extracted": p, "extracted_energy": signal_energy(p, dev.levels, load),
           "extracted_feasible": check_constraints(p, dev, des).passed, "refined": None}
    if do_refine:
        out["refined"] = refine(p, dev, des, load, _refine_config(cfg))
    return out


def _best_she(levels, g_quarter, M, load, theta, starts, seed):
    best = None
    for path in enumerate_paths(g_quarter, admissible=True):
        spec = SheSpec.lowest_orders(path, M)
        res = solve_she(spec, levels, starts=starts, theta_lock=theta, load=load, seed=seed)
        for s in res.feasible_solutions():
            if best is None or s.energy < best.energy:
                best = s
    return best


def bound_point(cfg: RunConfig, k: int, beta: int, tau: float, M: float | None, work: Path,
                do_she: bool = False, name: str = "point") -> tuple[dict, dict]:
    """Export, optionally solve, extract and refine one grid point."""
    row = {c: None for c in SWEEP_COLUMNS}
    row.update(k=k, beta=beta, tau=tau, M=M)
    times = {c: None for c in TIMING_COLUMNS}
    times.update(k=k, beta=beta, tau=tau, M=M)
    try:
        dev, load = cfg.device(), cfg.load(tau)
        des = cfg.design(k=k, M=M)
        g = cfg.graph(k=k, tau=tau)
        t0 = time.perf_counter()
        prob = build_moment_problem(g, dev, des, load, beta, cfg.I_bound)
        problem_path, sol_path = work / f"{name}.dat-s", work / f"{name}.sol"
        export_interchange(prob, problem_path)
        times["export_s"] = time.perf_counter() - t0
        row.update(n_vars=prob.n_vars, max_block=prob.max_block_size, status="exported")
        template = cfg.solver_template()
        if template:
            times["solve_s"] = run_solver(template, problem_path, sol_path)
            sol = _import_checked(sol_path, prob)
            row["bound"] = sol.primal_objective
            t0 = time.perf_counter()
            cand = _candidate(dwell_from_solution(sol), g, cfg, des, load, True)
            times["refine_s"] = time.perf_counter() - t0
            row["candidate_energy"] = cand["extracted_energy"]
            r = cand["refined"]
            row["status"] = "solved" if r.feasible else "refine_infeasible"
            if r.feasible:
                row["refined_energy"] = r.energy
                row["gap"] = r.energy - row["bound"]
        if do_she and des.symmetry is Symmetry.QW and M is not None:
            t0 = time.perf_counter()
            gq = build_graph(cfg.N, k, Symmetry.QW, cfg.unipolar, False, dev.levels)
            best = _best_she(dev.levels, gq, M, load, dev.theta_lock, int(cfg.options.get("starts") or 16),
                             int(cfg.options.get("seed") or 0))
            times["she_s"] = time.perf_counter() - t0
            if best is not None:
                row["she_energy"] = best.energy
                if row["bound"] is not None:
                    row["she_gap"] = best.energy - row["bound"]
    except InfeasibleResult:
        row["status"] = "infeasible"
    except SolverFailure:
        row["status"] = "solver_failure"
    except ExtractionError:
        row["status"] = "extraction_failed"
    except OppError as exc:
        row["status"] = f"error:{type(exc).__name__}"
    return row, times


def _sweep_worker(payload):
    cfg, index, point, work, do_she = payload
    return bound_point(cfg, *point, Path(work), do_she, f"point{index:04d}")


# ---------------------------------------------------------------- commands


def cmd_analyze(cfg: RunConfig) -> int:
    rec = _load_record(cfg.input)
    levels, p = rec.levels, rec.pattern
    o = cfg.options
    lmax = int(o.get("lmax") or 2000)
    orders = int(o.get("orders") or 25)
    dev = DeviceSpec(cfg.f1, cfg.Ts, levels)
    des = DesignSpec(p.k, rec.symmetry, rec.unipolar, cfg.design(k=p.k, symmetry=rec.symmetry,
                                                                 unipolar=rec.unipolar).harmonics)
    load = cfg.load()
    report = check_constraints(p, dev, des)
    spec = fourier_coefficients(p, levels, lmax)
    spec_load = load_spectrum(spec, load)
    parts = energy_breakdown(p, levels, load)
    C_p = load.C_p
    tdd_s = tdd_from_spectrum(spec_load, C_p)
    tdd_t = tdd_time_domain(parts.total, spec_load.a[0], spec_load.b[0], C_p)
    rel = abs(tdd_s - tdd_t) / max(abs(tdd_t), 1e-300) if tdd_t or tdd_s else 0.0
    payload = {
        "pattern": {"levels": list(levels.levels), "symmetry": Symmetry.parse(rec.symmetry).value,
                    "unipolar": rec.unipolar, **_pattern_dict(p, cfg.options.get("degrees", False))},
        "load": {"tau": load.tau, "A": load.A, "phi": load.phi, "C_p": C_p},
        "theta_lock": dev.theta_lock,
        "spectrum": {"lmax": lmax, "a0": spec.a0, "a": spec.a[:orders], "b": spec.b[:orders]},
        "tdd": {"spectrum": tdd_s, "time_domain": tdd_t, "relative_difference": rel},
        "energy": parts.to_dict(),
        "constraints": report.to_dict(),
    }
    _emit(payload)
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


def cmd_graph(cfg: RunConfig) -> int:
    g = cfg.graph()
    data = g.to_dict()
    data["path_count"] = count_paths(g)
    data["admissible_path_count"] = count_paths(g, admissible=True)
    if cfg.options.get("paths"):
        data["paths"] = [list(p) for p in enumerate_paths(g, admissible=True)]
    _emit(data)
    return EXIT_OK


def cmd_bound(cfg: RunConfig) -> int:
    dev, load, des, g = cfg.device(), cfg.load(), cfg.design(), cfg.graph()
    prob = build_moment_problem(g, dev, des, load, cfg.beta, cfg.I_bound)
    out = Path(cfg.output or "relaxation.dat-s")
    info = export_interchange(prob, out)
    payload = {"export": info, "sidecar": str(sidecar_path(out)), "problem": prob.summary()}
    template = cfg.solver_template() if (cfg.solve or cfg.solver) else None
    if cfg.solve or cfg.solver:
        sol_path = Path(cfg.options.get("solution_out") or out.with_suffix(".sol"))
        seconds = run_solver(template, out, sol_path)
        sol = _import_checked(sol_path, prob)
        xi = dwell_from_solution(sol)
        dwell_path = Path(cfg.options.get("dwell_out") or out.with_suffix(".dwell.csv"))
        dwell_path.write_text(xi.to_csv())
        payload.update(solution=str(sol_path), status=sol.status, bound=sol.primal_objective,
                       dual_objective=sol.dual_objective, feasibility=sol.feasibility(),
                       dwell_table=str(dwell_path), solve_seconds=seconds)
        print(f"p*_{cfg.beta} = {sol.primal_objective:.10g}", file=sys.stderr)
    _emit(payload)
    return EXIT_OK


def cmd_extract(cfg: RunConfig) -> int:
    sol_file = cfg.options.get("solution")
    if not sol_file:
        raise InputError("--solution is required")
    dev, load, des, g = cfg.device(), cfg.load(), cfg.design(), cfg.graph()
    prob = build_moment_problem(g, dev, des, load, cfg.beta, cfg.I_bound)
    sol = _import_checked(Path(sol_file), prob)
    xi = dwell_from_solution(sol)
    degrees = cfg.options.get("degrees", False)
    do_refine = not cfg.options.get("no_refine")
    try:
        cand = _candidate(xi, g, cfg, des, load, do_refine)
    except ExtractionError as exc:
        raise InfeasibleResult(f"extraction failed: {exc}") from None
    bound = sol.primal_objective
    p = cand["extracted"]
    payload = {"bound": bound, "solution_status": sol.status,
               "extracted": {**_pattern_dict(p, degrees), "energy": cand["extracted_energy"],
                             "feasible": cand["extracted_feasible"],
                             "gap": cand["extracted_energy"] - bound}}
    final, ok = p, cand["extracted_feasible"]
    r = cand["refined"]
    if r is not None:
        payload["refined"] = {"status": r.status, "energy": r.energy, "max_violation": r.max_violation,
                              "kkt_residual": r.kkt_residual, "iterations": r.iterations,
                              "gap": None if r.energy is None else r.energy - bound,
                              **(_pattern_dict(r.pattern, degrees) or {})}
        final, ok = r.pattern, r.feasible
    if cfg.output and final is not None:
        PatternRecord(dev.levels, final, des.symmetry, des.unipolar).save(cfg.output)
    if cfg.options.get("dwell_out"):
        Path(cfg.options["dwell_out"]).write_text(xi.to_csv())
    _emit(payload)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_refine(cfg: RunConfig) -> int:
    rec = _load_record(cfg.input)
    dev = DeviceSpec(cfg.f1, cfg.Ts, rec.levels)
    des = DesignSpec(rec.pattern.k, rec.symmetry, rec.unipolar,
                     cfg.design(k=rec.pattern.k, symmetry=rec.symmetry, unipolar=rec.unipolar).harmonics)
    load = cfg.load()
    r = refine(rec.pattern, dev, des, load, _refine_config(cfg))
    degrees = cfg.options.get("degrees", False)
    payload = {"initial_energy": signal_energy(rec.pattern, rec.levels, load), **r.to_dict()}
    payload["alpha"] = None if r.pattern is None else _angles(r.pattern.alpha, degrees)
    if cfg.output and r.feasible:
        PatternRecord(rec.levels, r.pattern, rec.symmetry, rec.unipolar).save(cfg.output)
    if cfg.options.get("log"):
        Path(cfg.options["log"]).write_text(r.log_json())
    _emit(payload)
    return EXIT_OK if r.feasible else EXIT_INFEASIBLE


def cmd_she(cfg: RunConfig) -> int:
    if cfg.M is None:
        raise InputError("--M is required for harmonic elimination")
    levels = cfg.levels()
    dev, load = cfg.device(), cfg.load()
    o = cfg.options
    if o.get("quarter_levels"):
        paths = [_ints(o["quarter_levels"])]
    else:
        paths = enumerate_paths(build_graph(cfg.N, cfg.k, Symmetry.QW, cfg.unipolar, False, levels),
                                admissible=True)
    eliminated = _ints(o.get("eliminate")) if o.get("eliminate") else None
    degrees = o.get("degrees", False)
    out_dir = Path(o["out_dir"]) if o.get("out_dir") else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows, results, best = [], [], None
    for j, path in enumerate(paths):
        spec = (SheSpec(path, cfg.M, eliminated, cfg.k) if eliminated is not None
                else SheSpec.lowest_orders(path, cfg.M))
        res = solve_she(spec, levels, starts=int(o.get("starts") or 64), theta_lock=dev.theta_lock,
                        load=load, seed=int(o.get("seed") or 0))
        sols = []
        for q, s in enumerate(res.solutions):
            sols.append({"alpha": _angles(s.alpha, degrees), "energy": s.energy, "residual": s.residual,
                         "min_gap": s.min_gap, "interlock_ok": s.interlock_ok, "rate": s.rate})
            if out_dir and s.interlock_ok:
                PatternRecord(levels, s.pattern, Symmetry.QW, cfg.unipolar).save(out_dir / f"she_{j}_{q}.json")
            if s.interlock_ok and (best is None or s.energy < best[1].energy):
                best = (j, s)
        results.append({"quarter_levels": list(path), "status": res.status, "solutions": sols})
        for line in res.to_csv().splitlines()[1:]:
            rows.append(f"{j},{line}")
    if out_dir:
        (out_dir / "she_starts.csv").write_text("path,start,converged,residual,energy,iterations\n"
                                                + "".join(r + "\n" for r in rows))
    payload = {"k": cfg.k, "M": cfg.M, "paths": results,
               "best": None if best is None else {"path": best[0], "energy": best[1].energy,
                                                  "alpha": _angles(best[1].alpha, degrees)}}
    _emit(payload)
    return EXIT_OK if best is not None else EXIT_INFEASIBLE


def _table(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def cmd_sweep(cfg: RunConfig) -> int:
    ks = cfg.k_grid or (cfg.k,)
    betas = cfg.beta_grid or (cfg.beta,)
    taus = cfg.tau_grid or (cfg.tau,)
    Ms = cfg.M_grid or (cfg.M,)
    points = list(product(ks, betas, taus, Ms))
    jobs = int(cfg.options.get("jobs") or 1)
    do_she = bool(cfg.options.get("she"))
    with tempfile.TemporaryDirectory(prefix="oppbound-") as tmp:
        work = Path(cfg.options.get("work_dir") or tmp)
        work.mkdir(parents=True, exist_ok=True)
        payloads = [(cfg, j, pt, str(work), do_she) for j, pt in enumerate(points)]
        if jobs > 1 and len(points) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_sweep_worker, payloads))
        else:
            results = [_sweep_worker(pl) for pl in payloads]
    header = (f"# oppbound sweep format {SWEEP_FORMAT}; N={cfg.N} symmetry={Symmetry.parse(cfg.symmetry).value} "
              f"unipolar={int(cfg.unipolar)} theta_lock={cfg.device().theta_lock:.10g} "
              f"harmonics={';'.join(f'{e.kind}:{e.order}:{e.lo:g}:{e.hi:g}' for e in cfg.harmonics) or '-'}\n")
    text = header + _table(SWEEP_COLUMNS, [r for r, _ in results])
    timing = f"# oppbound sweep timings format {SWEEP_FORMAT}\n" + _table(TIMING_COLUMNS, [t for _, t in results])
    if cfg.output:
        out = Path(cfg.output)
        out.write_text(text)
        Path(cfg.options.get("timings") or out.with_suffix(".timings.csv")).write_text(timing)
    else:
        sys.stdout.write(text)
        if cfg.options.get("timings"):
            Path(cfg.options["timings"]).write_text(timing)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "bound": cmd_bound, "extract": cmd_extract, "refine": cmd_refine,
            "sweep": cmd_sweep, "she": cmd_she, "graph": cmd_graph}


# ---------------------------------------------------------------- argument parsing


def _add_device(p):
    g = p.add_argument_group("device")
    g.add_argument("--N", type=int, help="number of levels (default 5)")
    g.add_argument("--level-values", help="comma-separated level values (default uniform on [-1, 1])")
    g.add_argument("--f1", type=float, help="fundamental frequency in Hz (default 50)")
    g.add_argument("--Ts", type=float, help="interlocking time in s (default 1e-4)")


def _add_design(p, with_k=True):
    g = p.add_argument_group("design")
    if with_k:
        g.add_argument("--k", type=int, help="switch count per period (default 24)")
        g.add_argument("--symmetry", choices=("FW", "HW", "QW"), help="waveform symmetry (default FW)")
        g.add_argument("--unipolar", action="store_true", default=None)
    g.add_argument("--M", type=float, help="target fundamental sine coefficient b1")
    g.add_argument("--harmonic", action="append", metavar="KIND:ORDER:LO:HI",
                   help="harmonic box, e.g. sine:3:-0.1:0.1; repeatable")


def _add_load(p):
    g = p.add_argument_group("load")
    g.add_argument("--tau", type=float, help="angle-domain damping R/(omega1 L) (default 0)")
    g.add_argument("--A", type=float, help="back-EMF amplitude (default 0)")
    g.add_argument("--phi", type=float, help="back-EMF phase in rad (default 0)")


def _add_relaxation(p):
    g = p.add_argument_group("relaxation")
    g.add_argument("--beta", type=int, help="relaxation degree (default 1)")
    g.add_argument("--extended", action="store_true", default=None,
                   help="use the half-period QW graph (implied for QW with tau > 0)")
    g.add_argument("--I-bound", dest="I_bound", type=float, help="current bound used for scaling")


def _add_solver(p):
    p.add_argument("--solver", help=f"solver command template with {{in}} and {{out}}; falls back to ${SOLVER_ENV}")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="oppbound", description="Optimal pulse pattern analysis and bounds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys mirror the long flags")
    common.add_argument("--degrees", action="store_true", default=None, help="print angles in degrees")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("analyze", parents=[common], help="spectrum, TDD, energy and constraint report")
    p.add_argument("input", nargs="?", metavar="PATTERN")
    _add_device(p)
    _add_design(p, with_k=False)
    _add_load(p)
    p.add_argument("--lmax", type=int, help="harmonics in the spectrum route (default 2000)")
    p.add_argument("--orders", type=int, help="coefficients printed (default 25)")
    subs["analyze"] = p

    p = sub.add_parser("graph", parents=[common], help="transition graph and path counts")
    _add_device(p)
    _add_design(p)
    p.add_argument("--extended", action="store_true", default=None)
    p.add_argument("--tau", type=float)
    p.add_argument("--paths", action="store_true", default=None, help="list admissible paths")
    subs["graph"] = p

    p = sub.add_parser("bound", parents=[common], help="export (and optionally solve) the moment relaxation")
    for add in (_add_device, _add_design, _add_load, _add_relaxation, _add_solver):
        add(p)
    p.add_argument("--out", dest="output", help="SDPA file (default relaxation.dat-s)")
    p.add_argument("--solve", action="store_true", default=None, help="invoke the configured solver")
    p.add_argument("--solution-out", help="solution file (default: the --out path with suffix .sol)")
    p.add_argument("--dwell-out", help="dwell table CSV (default: the --out path with suffix .dwell.csv)")
    subs["bound"] = p

    p = sub.add_parser("extract", parents=[common], help="pattern from a relaxation solution, then refine")
    for add in (_add_device, _add_design, _add_load, _add_relaxation):
        add(p)
    p.add_argument("--solution", help="CSDP-style or SDPA .out solution file")
    p.add_argument("--out", dest="output", help="write the final pattern record here")
    p.add_argument("--dwell-out", help="write the dwell table CSV here")
    p.add_argument("--no-refine", action="store_true", default=None)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--starts-refine", type=int, help="jittered refinement starts (default 1)")
    subs["extract"] = p

    p = sub.add_parser("refine", parents=[common], help="local search over the angles of a pattern")
    p.add_argument("input", nargs="?", metavar="PATTERN")
    _add_device(p)
    _add_design(p, with_k=False)
    _add_load(p)
    p.add_argument("--out", dest="output", help="write the refined pattern record here")
    p.add_argument("--log", help="write the iteration log (JSON) here")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--starts-refine", type=int)
    subs["refine"] = p

    p = sub.add_parser("sweep", parents=[common], help="grid of bounds and candidates as CSV")
    for add in (_add_device, _add_design, _add_load, _add_relaxation, _add_solver):
        add(p)
    for name, hint in (("k", "24,28"), ("beta", "1:3:1"), ("tau", "0:5:0.5"), ("M", "0.6,0.9")):
        p.add_argument(f"--{name}-grid", dest=f"{name}_grid", help=f"values, e.g. {hint}")
    p.add_argument("--she", action="store_true", default=None, help="add the best SHE energy (QW only)")
    p.add_argument("--starts", type=int, help="SHE starts per level path (default 16)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--out", dest="output", help="CSV file (default stdout)")
    p.add_argument("--timings", help="timing CSV (default: the --out path with suffix .timings.csv)")
    p.add_argument("--work-dir", help="keep exported problems and solutions here")
    p.add_argument("--max-iter", type=int)
    subs["sweep"] = p

    p = sub.add_parser("she", parents=[common], help="selective harmonic elimination on QW level paths")
    _add_device(p)
    _add_design(p)
    _add_load(p)
    p.add_argument("--quarter-levels", help="one quarter level path, e.g. 3,4,5,4,5,4,5 (default all)")
    p.add_argument("--eliminate", help="odd orders to zero (default 3, 5, ..)")
    p.add_argument("--starts", type=int, help="Newton starts per path (default 64)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", help="write interlock-feasible records and the start table here")
    subs["she"] = p
    return parser, subs


def parse_config(argv=None) -> RunConfig:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
        sub = subs[args.command]
        dests = {a.dest for a in sub._actions}
        mapped = {}
        for key, value in data.items():
            dest = {"out": "output", "pattern": "input"}.get(key, key.replace("-", "_"))
            if dest not in dests:
                raise InputError(f"config key {key!r} is not an option of {args.command}")
            mapped[dest] = value
        sub.set_defaults(**mapped)
        args = parser.parse_args(argv)
    ns = vars(args)
    ns["degrees"] = bool(ns.get("degrees"))
    return RunConfig.from_args(args)


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        return COMMANDS[cfg.command](cfg)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    except InfeasibleResult as exc:
        print(f"oppbound: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailure as exc:
        print(f"oppbound: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InfeasiblePattern, ExtractionError) as exc:
        print(f"oppbound: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OppError, ValueError) as exc:
        print(f"oppbound: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
