"""Benchmark protocol: lambda sweeps, accuracy and feasibility scoring, performance profiles."""

from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .diagnostics import AssumptionReport, assumption_report, check_licq
from .problem import BilevelProblem
from .problems import REGISTRY, get_problem
from .residual import residual
from .solver import SolverConfig, solve

LAMBDA_GRID = (100.0, 10.0, 1.0, 0.1, 0.01)
DEFAULT_TAU_GRID = tuple(np.arange(1.0, 10.0 + 1e-9, 0.25)) + (math.inf,)
FAILURE_THRESHOLD = 0.6
LL_ERROR_THRESHOLD = 0.2
UNDEFINED_LAMBDA_GAP = 100.0
FEASIBLE = ("convex+CQ", "ll-error-ok")

RECORD_COLUMNS = (
    "problem", "stepper", "lambda", "best_lambda_flag", "iterations", "residual_norm",
    "termination", "time_s", "F_A", "F_K", "upper_rel_err", "f_A", "f_K", "lower_rel_err",
    "feasibility", "strict_comp", "llicq", "ulicq", "pd_hessL", "lambda_minus_cmu",
)
PROFILE_COLUMNS = ("stepper", "tau", "rho")


class ExportError(OSError):
    """Writing or reading a report file failed."""


def relative_error(v_A: Optional[float], v_K: Optional[float]) -> Optional[float]:
    """Signed relative error ``(v_A - v_K) / (1 + |v_K|)``; ``None`` if either is unknown."""
    if v_A is None or v_K is None:
        return None
    return (v_A - v_K) / (1.0 + abs(v_K))


@dataclass
class ExperimentRecord:
    """One benchmark cell ``(problem, stepper, lambda)``.

    Columns of the exported schema are plain fields; ``detail`` (the stop
    reason), ``x``, ``y`` and ``assumptions`` are kept in memory only.
    """

    problem: str
    stepper: str
    lam: float
    best_lambda_flag: bool = False
    iterations: int = 0
    residual_norm: float = math.nan
    termination: str = ""
    time_s: float = 0.0
    F_A: Optional[float] = None
    F_K: Optional[float] = None
    upper_rel_err: Optional[float] = None
    f_A: Optional[float] = None
    f_K: Optional[float] = None
    lower_rel_err: Optional[float] = None
    feasibility: str = "unknown"
    strict_comp: Optional[bool] = None
    llicq: Optional[bool] = None
    ulicq: Optional[bool] = None
    pd_hessL: Optional[bool] = None
    lambda_minus_cmu: Optional[float] = None
    detail: str = field(default="", repr=False)
    x: Optional[np.ndarray] = field(default=None, repr=False)
    y: Optional[np.ndarray] = field(default=None, repr=False)
    assumptions: Optional[AssumptionReport] = field(default=None, repr=False)

    def row(self) -> dict:
        d = {c: getattr(self, "lam" if c == "lambda" else c) for c in RECORD_COLUMNS}
        return d

    @property
    def feasible(self) -> bool:
        return self.feasibility in FEASIBLE


def ll_convex(problem: BilevelProblem) -> bool:
    return problem.ll_objective_convex and problem.ll_constraints != "nonconvex"


def feasibility_verdict(problem: BilevelProblem, lam: float, z, eps: float, lower_rel_err: Optional[float]) -> str:
    """Lower-level feasibility class of a terminal point.

    A convex lower level with a constraint qualification, the lower-level
    stationarity rows and both ``(u, g)`` and ``(w, g)`` complementarity
    rows within ``eps`` is feasible by theory; otherwise the lower-level
    error decides.
    """
    if z is not None and ll_convex(problem):
        if problem.ll_constraints in ("linear", "none"):
            cq = True
        else:
            cq = check_licq(problem, z)[0]
        r = residual(problem, lam, z)
        n, m, p, q = problem.n, problem.m, problem.p, problem.q
        start = n + 2 * m
        rows = np.concatenate([r[n + m : start], r[start : start + p], r[start + p + q :]])
        if cq and np.all(np.isfinite(rows)) and np.all(np.abs(rows) <= eps):
            return "convex+CQ"
    if lower_rel_err is None or not math.isfinite(lower_rel_err):
        return "unknown"
    return "ll-error-ok" if abs(lower_rel_err) < LL_ERROR_THRESHOLD else "ll-error-bad"


def _finite_or_none(v) -> Optional[float]:
    v = float(v)
    return v if math.isfinite(v) else None


def run_cell(problem: BilevelProblem, config: SolverConfig) -> ExperimentRecord:
    """Solve one cell; failures are recorded in ``termination``, never raised."""
    ks = problem.known_solution
    rec = ExperimentRecord(problem=problem.name, stepper=config.stepper, lam=config.lam,
                           F_K=ks.F, f_K=ks.f)
    try:
        report = solve(problem, config)
    except Exception as exc:  # recorded, the sweep goes on
        rec.termination = f"error:{type(exc).__name__}"
        rec.detail = str(exc)
        rec.lambda_minus_cmu = UNDEFINED_LAMBDA_GAP
        return rec
    z = report.z
    rec.iterations = report.iterations
    rec.residual_norm = report.residual_norm
    rec.termination = report.termination.value
    rec.detail = report.detail
    rec.time_s = report.time_s
    rec.x, rec.y = z.x.copy(), z.y.copy()
    finite_point = bool(np.all(np.isfinite(z.stack())))
    if finite_point:
        rec.F_A = _finite_or_none(problem.F(z.x, z.y))
        rec.f_A = _finite_or_none(problem.f(z.x, z.y))
    rec.upper_rel_err = relative_error(rec.F_A, rec.F_K)
    rec.lower_rel_err = relative_error(rec.f_A, rec.f_K)
    rec.feasibility = feasibility_verdict(problem, config.lam, z if finite_point else None,
                                          config.eps, rec.lower_rel_err)
    mu = report.trace[-1].mu
    mu = mu if mu > 0 else config.mu_policy.mu0 if config.mu_policy.mu0 > 0 else 1e-11
    rec.lambda_minus_cmu = UNDEFINED_LAMBDA_GAP
    if finite_point:
        try:
            a = assumption_report(problem, config.lam, z, mu=mu)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            a = None
        if a is not None:
            rec.assumptions = a
            rec.strict_comp = a.strict_complementarity
            rec.llicq, rec.ulicq = a.llicq_rank_ok, a.ulicq_rank_ok
            rec.pd_hessL = a.hess_L_positive_definite
            if a.lambda_bound is not None and math.isfinite(a.lambda_bound):
                rec.lambda_minus_cmu = config.lam - a.lambda_bound
    return rec


def _run_named_cell(args: tuple[str, SolverConfig]) -> ExperimentRecord:
    name, config = args
    return run_cell(get_problem(name), config)


def _best_key(rec: ExperimentRecord):
    err = rec.upper_rel_err
    err = math.inf if err is None or not math.isfinite(err) else err
    res = rec.residual_norm if math.isfinite(rec.residual_norm) else math.inf
    return (not rec.feasible, err, res, rec.lam)


def mark_best(records: list[ExperimentRecord]) -> list[ExperimentRecord]:
    """Flag the best-lambda record of every ``(problem, stepper)`` group.

    Feasible records rank first, then lower upper-level error, smaller
    residual and smaller lambda.
    """
    groups: dict[tuple[str, str], list[ExperimentRecord]] = {}
    for r in records:
        r.best_lambda_flag = False
        groups.setdefault((r.problem, r.stepper), []).append(r)
    for group in groups.values():
        min(group, key=_best_key).best_lambda_flag = True
    return records


def run_experiment(
    problems: Sequence,
    steppers: Sequence[str],
    lambda_grid: Sequence[float] = LAMBDA_GRID,
    config: Optional[SolverConfig] = None,
    workers: int = 1,
) -> list[ExperimentRecord]:
    """Run every ``(problem, stepper, lambda)`` cell and flag the best lambda.

    ``problems`` holds problem instances or registry names. With
    ``workers > 1`` registry problems are solved in worker processes;
    records always come back in ``(problem, stepper, lambda)`` order.
    """
    if not problems or not steppers:
        raise ValueError("need at least one problem and one stepper")
    if not lambda_grid:
        raise ValueError("lambda grid must not be empty")
    base = config or SolverConfig()
    probs = [get_problem(p) if isinstance(p, str) else p for p in problems]
    cells = [(p, replace(base, lam=float(lam), stepper=s)) for p in probs for s in steppers for lam in lambda_grid]
    named = all(REGISTRY.get(p.name) is p for p in probs)
    if workers > 1 and named:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_named_cell, [(p.name, c) for p, c in cells], chunksize=4))
    else:
        records = [run_cell(p, c) for p, c in cells]
    return mark_best(records)


def best_records(records: Iterable[ExperimentRecord]) -> list[ExperimentRecord]:
    return [r for r in records if r.best_lambda_flag]


@dataclass(frozen=True)
class ProfileCurve:
    stepper: str
    tau: np.ndarray
    rho: np.ndarray


def profile_times(
    records: Iterable[ExperimentRecord], failure_threshold: float = FAILURE_THRESHOLD
) -> tuple[list[str], list[str], np.ndarray]:
    """Time matrix ``t[p, s]`` over best-lambda records with known solutions.

    Unsolved cells (upper-level error above the threshold or undefined)
    get ``inf``.
    """
    best = [r for r in records if r.best_lambda_flag and r.F_K is not None]
    steppers = sorted({r.stepper for r in best})
    problems = sorted({r.problem for r in best})
    if len(steppers) < 2:
        raise ValueError("performance profiles need at least two steppers")
    cell = {(r.problem, r.stepper): r for r in best}
    t = np.full((len(problems), len(steppers)), math.inf)
    for i, p in enumerate(problems):
        for j, s in enumerate(steppers):
            r = cell.get((p, s))
            if r is None:
                raise ValueError(f"no best-lambda record for problem {p!r} and stepper {s!r}")
            err = r.upper_rel_err
            if err is not None and math.isfinite(err) and err <= failure_threshold:
                t[i, j] = r.time_s
    return problems, steppers, t


def performance_ratios(t: np.ndarray) -> np.ndarray:
    best = np.min(t, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(np.isfinite(t), t / best, math.inf)
    # a zero best time makes every finite ratio 1 or undefined
    r = np.where(np.isfinite(t) & (best == 0), np.where(t == 0, 1.0, math.inf), r)
    return r


def performance_profile(
    records: Iterable[ExperimentRecord],
    failure_threshold: float = FAILURE_THRESHOLD,
    tau_grid: Sequence[float] = DEFAULT_TAU_GRID,
) -> list[ProfileCurve]:
    """``rho_s(tau)``: share of problems solved within ``tau`` times the fastest time."""
    problems, steppers, t = profile_times(records, failure_threshold)
    tau = np.asarray(sorted(tau_grid), dtype=float)
    if tau.size == 0 or tau[0] < 1:
        raise ValueError("tau grid must be nonempty with values >= 1")
    r = performance_ratios(t)
    n_p = len(problems)
    # unsolved cells never count, not even at the infinite grid point
    solved = np.isfinite(r)
    return [
        ProfileCurve(s, tau.copy(), np.array([np.sum(solved[:, j] & (r[:, j] <= x)) / n_p for x in tau]))
        for j, s in enumerate(steppers)
    ]


def convexity_class(problem: BilevelProblem) -> tuple[str, str]:
    f = "Convex" if problem.ll_objective_convex else "Nonconvex"
    g = {
        "linear": "Convex (linear)",
        "nonlinear-convex": "Convex (nonlinear)",
        "none": "No constraints",
        "nonconvex": "Nonconvex",
    }[problem.ll_constraints]
    return f, g


@dataclass(frozen=True)
class FeasibilityReport:
    """Lower-level convexity table of the suite and feasibility counts per stepper."""

    convexity_table: dict[tuple[str, str], int]
    verdicts: dict[str, dict[str, int]]
    feasible_rate: dict[str, float]


def feasibility_report(records: Iterable[ExperimentRecord]) -> FeasibilityReport:
    records = list(records)
    names = sorted({r.problem for r in records})
    table = Counter(convexity_class(get_problem(n)) for n in names if n in REGISTRY)
    verdicts: dict[str, Counter] = {}
    for r in records:
        verdicts.setdefault(r.stepper, Counter())[r.feasibility] += 1
    rate = {s: sum(c[v] for v in FEASIBLE) / sum(c.values()) for s, c in verdicts.items()}
    return FeasibilityReport(dict(table), {s: dict(c) for s, c in verdicts.items()}, rate)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def export(records: Sequence[ExperimentRecord], curves: Sequence[ProfileCurve], fmt: str, path) -> tuple[str, str]:
    """Write ``records.<fmt>`` and ``profiles.<fmt>`` into directory ``path``.

    Unknown values become empty cells (CSV) or ``null`` (JSON).
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown export format {fmt!r}")
    path = os.fspath(path)
    rec_path = os.path.join(path, f"records.{fmt}")
    prof_path = os.path.join(path, f"profiles.{fmt}")
    rows = [r.row() for r in records]
    prof = [(c.stepper, float(t), float(h)) for c in curves for t, h in zip(c.tau, c.rho)]
    try:
        os.makedirs(path, exist_ok=True)
        if fmt == "csv":
            with open(rec_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(RECORD_COLUMNS)
                for row in rows:
                    w.writerow([_cell(row[c]) for c in RECORD_COLUMNS])
            with open(prof_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(PROFILE_COLUMNS)
                for s, t, h in prof:
                    w.writerow([s, _cell(t), _cell(h)])
        else:
            with open(rec_path, "w") as fh:
                json.dump([{k: _jsonable(v) for k, v in row.items()} for row in rows], fh, indent=1)
            with open(prof_path, "w") as fh:
                json.dump([dict(zip(PROFILE_COLUMNS, (s, _jsonable(t), h))) for s, t, h in prof], fh, indent=1)
    except OSError as exc:
        raise ExportError(f"cannot write report to {path!r}: {exc}") from exc
    return rec_path, prof_path


_INT_COLS = {"iterations"}
_BOOL_COLS = {"best_lambda_flag", "strict_comp", "llicq", "ulicq", "pd_hessL"}
_STR_COLS = {"problem", "stepper", "termination", "feasibility"}


def _parse(col: str, v):
    if v is None or v == "":
        return None
    if col in _STR_COLS:
        return v
    if col in _BOOL_COLS:
        return v if isinstance(v, bool) else v == "true"
    if col in _INT_COLS:
        return int(v)
    return float(v)


def read_records(path) -> list[dict]:
    """Parse a records file written by :func:`export` back into column dicts."""
    path = os.fspath(path)
    try:
        with open(path, newline="") as fh:
            if path.endswith(".json"):
                raw = json.load(fh)
            else:
                raw = list(csv.DictReader(fh))
    except OSError as exc:
        raise ExportError(f"cannot read report {path!r}: {exc}") from exc
    return [{c: _parse(c, row.get(c)) for c in RECORD_COLUMNS} for row in raw]
