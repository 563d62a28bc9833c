import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bilevel_gn import SolverConfig, get_problem
from bilevel_gn.bench import (
    DEFAULT_TAU_GRID,
    RECORD_COLUMNS,
    ExperimentRecord,
    ExportError,
    best_records,
    export,
    feasibility_report,
    feasibility_verdict,
    mark_best,
    performance_profile,
    read_records,
    relative_error,
    run_cell,
    run_experiment,
)

Z_BAR_3_1 = np.array([1, 3, 2, 0, 0, 0, 0, 4, 0, 0], dtype=float)


def rec(problem, stepper, time_s, err=0.0, lam=1.0, best=True, **kw):
    return ExperimentRecord(problem=problem, stepper=stepper, lam=lam, time_s=time_s, upper_rel_err=err,
                            F_K=kw.pop("F_K", 0.0), best_lambda_flag=best, feasibility=kw.pop("feasibility", "convex+CQ"), **kw)


def rho_at(curves, stepper, tau):
    c = next(c for c in curves if c.stepper == stepper)
    return float(c.rho[list(c.tau).index(tau)])


class TestRelativeError:
    @pytest.mark.parametrize("a, k, expected", [(5, 5, 0.0), (3, 0, 3.0), (0, -1, 0.5), (-2, 0, -2.0)])
    def test_examples(self, a, k, expected):
        assert relative_error(a, k) == expected

    def test_unknown(self):
        assert relative_error(1.0, None) is None and relative_error(None, 1.0) is None

    @given(a=st.floats(-1e6, 1e6), k=st.floats(-1e6, 1e6))
    def test_sign_convention(self, a, k):
        e = relative_error(a, k)
        assert (e < 0) == (a < k)


class TestPerformanceProfile:
    def test_two_problems_swapped_times(self):
        records = [rec("p1", "s1", 1.0), rec("p1", "s2", 2.0), rec("p2", "s1", 2.0), rec("p2", "s2", 1.0)]
        curves = performance_profile(records, tau_grid=[1.0, 2.0])
        for s in ("s1", "s2"):
            assert rho_at(curves, s, 1.0) == 0.5
            assert rho_at(curves, s, 2.0) == 1.0

    def test_failure_plateaus(self):
        records = [rec("p1", "s1", 1.0, err=0.9), rec("p1", "s2", 2.0), rec("p2", "s1", 1.0), rec("p2", "s2", 1.0)]
        curves = performance_profile(records)
        s1 = next(c for c in curves if c.stepper == "s1")
        assert s1.rho[-1] == 0.5
        assert rho_at(curves, "s2", 1.0) == 1.0

    def test_single_problem_equal_times(self):
        curves = performance_profile([rec("p", "a", 0.3), rec("p", "b", 0.3)], tau_grid=[1.0])
        assert [c.rho[0] for c in curves] == [1.0, 1.0]

    def test_unknown_solution_excluded(self):
        records = [rec("p1", "a", 1.0), rec("p1", "b", 2.0), rec("q", "a", 5.0, F_K=None, err=None), rec("q", "b", 1.0, F_K=None, err=None)]
        curves = performance_profile(records, tau_grid=[1.0])
        assert rho_at(curves, "a", 1.0) == 1.0 and rho_at(curves, "b", 1.0) == 0.0

    def test_only_best_lambda_records_count(self):
        records = [rec("p", "a", 1.0), rec("p", "b", 2.0), rec("p", "b", 0.1, best=False)]
        curves = performance_profile(records, tau_grid=[1.0])
        assert rho_at(curves, "a", 1.0) == 1.0

    def test_needs_two_steppers(self):
        with pytest.raises(ValueError):
            performance_profile([rec("p", "a", 1.0)])

    def test_bad_tau_grid(self):
        with pytest.raises(ValueError):
            performance_profile([rec("p", "a", 1.0), rec("p", "b", 1.0)], tau_grid=[0.5, 1.0])

    def test_default_grid(self):
        assert DEFAULT_TAU_GRID[0] == 1.0 and DEFAULT_TAU_GRID[-2] == 10.0 and math.isinf(DEFAULT_TAU_GRID[-1])
        assert np.allclose(np.diff(DEFAULT_TAU_GRID[:-1]), 0.25)

    @given(
        times=st.lists(st.tuples(st.floats(1e-4, 10), st.floats(1e-4, 10), st.floats(1e-4, 10)), min_size=1, max_size=8),
        fails=st.lists(st.integers(0, 7), max_size=10),
    )
    def test_monotone_bounded_and_recount(self, times, fails):
        records = []
        for i, row in enumerate(times):
            for s, t in zip("abc", row):
                records.append(rec(f"p{i}", s, t, err=0.9 if (i * 3 + "abc".index(s)) % 8 in fails else 0.0))
        curves = performance_profile(records)
        for c in curves:
            assert np.all(np.diff(c.rho) >= 0) and np.all(c.rho <= 1) and np.all(c.rho >= 0)
        # rho_s(1) * n_p counts problems where s ties the fastest solving time
        n_p = len(times)
        for c in curves:
            count = 0
            for i, row in enumerate(times):
                solved = {s: t for s, t in zip("abc", row) if (i * 3 + "abc".index(s)) % 8 not in fails}
                if c.stepper in solved and solved[c.stepper] == min(solved.values()):
                    count += 1
            assert c.rho[0] * n_p == pytest.approx(count)


class TestMarkBest:
    def test_feasible_error_residual_lambda_order(self):
        group = [
            rec("p", "s", 1.0, err=-0.5, lam=100.0, feasibility="ll-error-bad"),
            rec("p", "s", 1.0, err=0.1, lam=10.0, residual_norm=1e-3),
            rec("p", "s", 1.0, err=0.1, lam=1.0, residual_norm=1e-6),
            rec("p", "s", 1.0, err=0.1, lam=0.1, residual_norm=1e-6),
        ]
        mark_best(group)
        assert [r.best_lambda_flag for r in group] == [False, False, False, True]

    def test_unknown_error_ranks_last(self):
        group = [rec("p", "s", 1.0, err=None, lam=1.0), rec("p", "s", 1.0, err=0.4, lam=10.0)]
        mark_best(group)
        assert best_records(group)[0].lam == 10.0


class TestFeasibility:
    def test_example_3_1_at_solution(self):
        assert feasibility_verdict(get_problem("example_3_1"), 1.0, Z_BAR_3_1, 1e-5, 0.0) == "convex+CQ"

    @pytest.mark.parametrize("err, expected", [(0.05, "ll-error-ok"), (-0.1, "ll-error-ok"), (0.5, "ll-error-bad"), (None, "unknown")])
    def test_error_classes_for_nonconvex(self, err, expected):
        P = replace(get_problem("example_3_1"), ll_constraints="nonconvex")
        # even at the stationary point a nonconvex lower level falls back to the error rule
        assert feasibility_verdict(P, 1.0, Z_BAR_3_1, 1e-5, err) == expected

    def test_convex_but_far_from_stationary(self):
        z = Z_BAR_3_1 + 1.0
        assert feasibility_verdict(get_problem("example_3_1"), 1.0, z, 1e-5, 0.5) == "ll-error-bad"

    def test_report_counts(self):
        records = run_experiment(["example_3_1", "example_4_2"], ["pseudo_newton"], [1.0, 10.0])
        fr = feasibility_report(records)
        assert sum(fr.verdicts["pseudo_newton"].values()) == 4
        assert 0.0 <= fr.feasible_rate["pseudo_newton"] <= 1.0
        assert fr.convexity_table == {("Convex", "Convex (linear)"): 1, ("Convex", "Convex (nonlinear)"): 1}


class TestRunExperiment:
    def test_example_4_2_grid(self):
        records = run_experiment(["example_4_2"], ["pseudo_newton"], [0.6, 0.7, 0.8])
        assert len(records) == 3
        for r in records:
            assert r.termination == "converged"
            assert abs(r.x[0] - 1) <= 1e-3 and abs(r.y[0]) <= 1e-3

    def test_small_lambda_does_not_crash(self):
        r = run_experiment(["example_3_1"], ["gauss_newton"], [0.01])[0]
        assert r.termination and not r.termination.startswith("error:")
        assert r.best_lambda_flag

    def test_empty_inputs(self):
        with pytest.raises(ValueError):
            run_experiment(["example_3_1"], ["gauss_newton"], [])
        with pytest.raises(ValueError):
            run_experiment([], ["gauss_newton"])

    def test_order_and_one_best_per_group(self):
        records = run_experiment(["example_4_2", "example_3_1"], ["gauss_newton", "pseudo_newton"], [1.0, 10.0])
        keys = [(r.problem, r.stepper, r.lam) for r in records]
        assert keys == [(p, s, l) for p in ("example_4_2", "example_3_1") for s in ("gauss_newton", "pseudo_newton") for l in (1.0, 10.0)]
        assert len(best_records(records)) == 4

    def test_parallel_matches_serial(self):
        args = (["example_3_1", "Bard1988Ex1"], ["gauss_newton", "levenberg_marquardt"], [1.0, 0.1])
        a = run_experiment(*args)
        b = run_experiment(*args, workers=2)
        strip = lambda rs: [{k: v for k, v in r.row().items() if k != "time_s"} for r in rs]
        assert strip(a) == strip(b)

    def test_solver_exception_is_recorded(self):
        def broken(x, y):
            raise ZeroDivisionError("oracle failure")

        P = replace(get_problem("example_3_1"), grad_F=broken)
        r = run_cell(P, SolverConfig(lam=1.0))
        assert r.termination == "error:ZeroDivisionError"
        assert r.lambda_minus_cmu == 100.0

    def test_no_lower_constraints_gap_is_100(self):
        r = run_experiment(["MacalHurter1997"], ["pseudo_newton"], [1.0])[0]
        assert r.lambda_minus_cmu == 100.0


class TestExport:
    def _records(self):
        records = run_experiment(["example_3_1", "MacalHurter1997", "example_4_2"], ["gauss_newton", "pseudo_newton"], [1.0, 10.0])
        return records, performance_profile(records)

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip(self, tmp_path, fmt):
        records, curves = self._records()
        rp, pp = export(records, curves, fmt, tmp_path)
        back = read_records(rp)
        assert len(back) == len(records)
        for r, row in zip(records, back):
            for c, v in r.row().items():
                if isinstance(v, float) and math.isfinite(v):
                    assert row[c] == pytest.approx(v, rel=1e-12, abs=1e-300)
                elif isinstance(v, float):
                    assert math.isnan(v) and math.isnan(row[c]) or row[c] == v
                else:
                    assert row[c] == v

    def test_csv_schema(self, tmp_path):
        records, curves = self._records()
        rp, pp = export(records, curves, "csv", tmp_path)
        with open(rp) as fh:
            assert tuple(next(csv.reader(fh))) == RECORD_COLUMNS
        with open(pp) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["stepper", "tau", "rho"]
        assert len(rows) == 1 + 2 * len(DEFAULT_TAU_GRID)

    def test_empty_records_header_only(self, tmp_path):
        rp, _ = export([], [], "csv", tmp_path)
        with open(rp) as fh:
            assert fh.read().strip() == ",".join(RECORD_COLUMNS)

    def test_unknown_values_are_blank_not_zero(self, tmp_path):
        r = ExperimentRecord(problem="p", stepper="s", lam=1.0)
        rp, _ = export([r], [], "csv", tmp_path)
        with open(rp) as fh:
            row = list(csv.DictReader(fh))[0]
        assert row["F_K"] == "" and row["upper_rel_err"] == ""
        jp, _ = export([r], [], "json", tmp_path)
        with open(jp) as fh:
            assert json.load(fh)[0]["F_K"] is None

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            export([], [], "xml", tmp_path)

    def test_io_failure_names_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ExportError, match="file"):
            export([], [], "csv", blocker / "sub")
        with pytest.raises(ExportError):
            read_records(tmp_path / "missing.csv")
