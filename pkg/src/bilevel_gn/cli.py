"""Command-line front end: ``list``, ``solve``, ``sweep`` and ``diagnose``.

Exit codes: 0 converged (or success), 1 usage error, 2 no convergence,
3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import bench
from .diagnostics import assumption_report, lambda_bound
from .jacobian import DegeneratePairError
from .problems import REGISTRY, UnknownProblemError, get_problem
from .solver import STEPPERS, MuPolicy, SolverConfig, initialize, solve

EXIT_OK, EXIT_USAGE, EXIT_NO_CONVERGENCE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonnegative(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    mu = p.add_mutually_exclusive_group()
    mu.add_argument("--mu", type=_nonnegative, default=1e-11, help="constant smoothing parameter (0 = exact)")
    mu.add_argument("--mu-schedule", type=_positive, metavar="MU0", help="power schedule mu_{k+1} = mu_k^(k+1)")
    p.add_argument("--eps", type=_positive, default=1e-5, help="residual tolerance")
    p.add_argument("--max-iters", type=int, default=1000, help="iteration budget K")
    p.add_argument("--smoothed-rhs", action="store_true", help="use the smoothed residual as right-hand side")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bilevel-gn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("list", help="list registered problems")

    s = sub.add_parser("solve", help="solve one problem")
    s.add_argument("--problem", required=True)
    s.add_argument("--stepper", choices=STEPPERS, default="gauss_newton")
    s.add_argument("--lambda", dest="lam", type=_positive, default=1.0)
    _add_solver_flags(s)

    w = sub.add_parser("sweep", help="run the lambda-grid experiment")
    w.add_argument("--suite", default="all", help="'all' or comma-separated problem names")
    w.add_argument("--steppers", default=",".join(STEPPERS))
    w.add_argument("--lambdas", default=",".join(str(v) for v in bench.LAMBDA_GRID))
    w.add_argument("--out", required=True, help="output directory")
    w.add_argument("--format", choices=("csv", "json"), default="csv")
    w.add_argument("--workers", type=int, default=1)
    _add_solver_flags(w)

    d = sub.add_parser("diagnose", help="check the regularity assumptions")
    d.add_argument("--problem", required=True)
    d.add_argument("--stepper", choices=STEPPERS, default="gauss_newton")
    d.add_argument("--lambda", dest="lam", type=_positive, default=1.0)
    d.add_argument("--at-solution", action="store_true",
                   help="evaluate at the solver's terminal iterate (default: the start point)")
    _add_solver_flags(d)
    return parser


def _config(args, lam: float = 1.0, stepper: str = "gauss_newton") -> SolverConfig:
    if args.max_iters < 1:
        raise UsageError("--max-iters must be at least 1")
    try:
        if args.mu_schedule is not None:
            policy = MuPolicy.power(args.mu_schedule)
        elif args.mu == 0:
            policy = MuPolicy.exact()
        else:
            policy = MuPolicy.constant(args.mu)
        return SolverConfig(lam=lam, eps=args.eps, max_iter=args.max_iters, mu_policy=policy,
                            stepper=stepper, smoothed_rhs=args.smoothed_rhs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _problem(name: str):
    try:
        return get_problem(name)
    except UnknownProblemError as exc:
        raise UsageError(str(exc)) from exc


def _fmt(v: Optional[float]) -> str:
    return "undefined" if v is None else f"{v:.6g}"


def _cmd_list(args, out) -> int:
    print(f"{'name':24s} {'n':>3s} {'m':>3s} {'p':>3s} {'q':>3s}  lower level", file=out)
    for name, p in REGISTRY.items():
        print(f"{name:24s} {p.n:3d} {p.m:3d} {p.p:3d} {p.q:3d}  {p.ll_constraints}", file=out)
    return EXIT_OK


def _cmd_solve(args, out) -> int:
    problem = _problem(args.problem)
    config = _config(args, args.lam, args.stepper)
    rep = solve(problem, config)
    mu = rep.trace[-1].mu or 1e-11
    gap = None
    if problem.p and np.all(np.isfinite(rep.z.stack())):
        c = lambda_bound(problem, rep.z, mu)
        gap = None if c is None else args.lam - c
    print(
        f"{problem.name} {config.stepper} lambda={config.lam:g}: "
        f"termination={rep.termination.value} iterations={rep.iterations} "
        f"residual={rep.residual_norm:.3e} lambda-c_mu={_fmt(gap)}",
        file=out,
    )
    print(f"  x = {np.array2string(rep.z.x, precision=6)}", file=out)
    print(f"  y = {np.array2string(rep.z.y, precision=6)}", file=out)
    if np.all(np.isfinite(rep.z.stack())):
        print(f"  F = {problem.F(rep.z.x, rep.z.y):.6g}  f = {problem.f(rep.z.x, rep.z.y):.6g}", file=out)
    print(f"  {rep.detail}", file=out)
    return EXIT_OK if rep.converged else EXIT_NO_CONVERGENCE


def _csv_list(text: str, kind) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise UsageError("empty list argument")
    try:
        return [kind(t) for t in items]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _cmd_sweep(args, out) -> int:
    names = list(REGISTRY) if args.suite == "all" else _csv_list(args.suite, str)
    for n in names:
        _problem(n)
    steppers = _csv_list(args.steppers, str)
    bad = [s for s in steppers if s not in STEPPERS]
    if bad:
        raise UsageError(f"unknown stepper(s) {', '.join(bad)}; choose from {', '.join(STEPPERS)}")
    lambdas = _csv_list(args.lambdas, float)
    if any(not v > 0 for v in lambdas):
        raise UsageError("lambda values must be positive")
    config = _config(args)
    records = bench.run_experiment(names, steppers, lambdas, config, workers=args.workers)
    curves = bench.performance_profile(records) if len(steppers) >= 2 else []
    rec_path, prof_path = bench.export(records, curves, args.format, args.out)
    best = bench.best_records(records)
    for s in steppers:
        rows = [r for r in best if r.stepper == s]
        known = [r for r in rows if r.upper_rel_err is not None]
        ok = sum(1 for r in known if r.upper_rel_err < 0.2)
        conv = sum(1 for r in rows if r.termination == "converged")
        print(f"{s:20s} best-lambda converged {conv}/{len(rows)}, upper error < 0.2 on {ok}/{len(known)}", file=out)
    print(f"wrote {rec_path}", file=out)
    if curves:
        print(f"wrote {prof_path}", file=out)
    return EXIT_OK


def _cmd_diagnose(args, out) -> int:
    problem = _problem(args.problem)
    config = _config(args, args.lam, args.stepper)
    if args.at_solution:
        rep = solve(problem, config)
        z = rep.z
        print(f"terminal iterate after {rep.iterations} iterations ({rep.termination.value}), "
              f"residual {rep.residual_norm:.3e}", file=out)
        status = EXIT_OK if rep.converged else EXIT_NO_CONVERGENCE
    else:
        z = initialize(problem, config)
        status = EXIT_OK
    mu = config.mu_policy.initial or 1e-11
    report = assumption_report(problem, args.lam, z, mu=mu)
    for key, val in report.as_dict().items():
        print(f"  {key:26s} {val}", file=out)
    return status


_COMMANDS = {"list": _cmd_list, "solve": _cmd_solve, "sweep": _cmd_sweep, "diagnose": _cmd_diagnose}


def run_cli(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except bench.ExportError as exc:
        print(f"bilevel-gn: {exc}", file=sys.stderr)
        return EXIT_IO
    except DegeneratePairError as exc:
        # exact smoothing hit a (0, 0) pair; the run did not converge
        print(f"bilevel-gn: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
