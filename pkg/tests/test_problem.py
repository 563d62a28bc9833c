import dataclasses

import numpy as np
import pytest

from bilevel_gn import (
    DimensionError,
    derivatives,
    evaluate,
    finite_difference_check,
    get_problem,
    problem_names,
)
from bilevel_gn.problem import BilevelProblem
from bilevel_gn.problems import REGISTRY, UnknownProblemError

from conftest import ALL_PROBLEMS


class TestEvaluate:
    def test_example_3_1_values(self):
        F, f, G, g = evaluate(get_problem("example_3_1"), [1.0], [3.0])
        assert F == 5.0 and f == 4.0
        np.testing.assert_array_equal(G, [-7.0, -1.0])
        np.testing.assert_array_equal(g, [0.0, -7.0, -7.0])

    def test_example_4_2_values(self):
        F, f, G, g = evaluate(get_problem("example_4_2"), [1.0], [0.0])
        assert (F, f) == (0.0, 0.0)
        assert G.shape == (0,)
        np.testing.assert_array_equal(g, [0.0])

    def test_empty_lower_block(self):
        P = get_problem("MacalHurter1997")
        assert P.p == 0
        _, _, _, g = evaluate(P, [1.0], [1.0])
        assert g.shape == (0,)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            evaluate(get_problem("example_3_1"), [1.0, 2.0], [3.0])


class TestDerivatives:
    def test_example_3_1(self):
        d = derivatives(get_problem("example_3_1"), [1.0], [3.0])
        np.testing.assert_array_equal(d.grad_F, [-4.0, 2.0])
        np.testing.assert_array_equal(d.grad_f_y, [-4.0])
        np.testing.assert_array_equal(d.jac_g, [[-2, 1], [1, -2], [1, 2]])

    def test_example_4_2(self):
        d = derivatives(get_problem("example_4_2"), [1.0], [0.0])
        np.testing.assert_array_equal(d.grad_f_y, [1.0])
        np.testing.assert_array_equal(d.hess_f, [[0.0, 2.0], [2.0, 0.0]])

    def test_linear_constraints_have_zero_hessians(self):
        d = derivatives(get_problem("LiuHart1994"), [2.0], [1.0])
        assert d.hess_g.shape == (4, 2, 2)
        assert not np.any(d.hess_g)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            derivatives(get_problem("example_4_1"), [1.0], [1.0])


class TestFiniteDifferenceCheck:
    def test_example_3_1(self):
        assert finite_difference_check(get_problem("example_3_1"), [1.0], [3.0], h=1e-6) <= 1e-6

    def test_affine_constraints_exact(self):
        # dyadic point and step keep the differences free of rounding
        P = get_problem("Bard1998Ex511")
        assert finite_difference_check(P, [2.25], [1.5], h=2.0**-20) <= 1e-10

    def test_detects_corrupted_gradient(self):
        P = get_problem("example_3_1")
        bad = dataclasses.replace(P, grad_f=lambda x, y: P.grad_f(x, y) + np.array([1.0, 0.0]))
        assert finite_difference_check(bad, [1.0], [3.0]) >= 0.5

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            finite_difference_check(get_problem("example_3_1"), [1.0], [3.0], h=0.0)

    @pytest.mark.parametrize("name", ALL_PROBLEMS)
    def test_registry_oracles_random_points(self, name, rng):
        P = get_problem(name)
        x0, y0 = P.start_point()
        worst = 0.0
        for _ in range(100):
            x = x0 + rng.uniform(-1, 1, P.n)
            y = y0 + rng.uniform(-1, 1, P.m)
            worst = max(worst, finite_difference_check(P, x, y, h=1e-6))
        assert worst <= 1e-5


class TestRegistry:
    @pytest.mark.parametrize(
        "name, dims",
        [("example_3_1", (1, 1, 3, 2)), ("example_4_1", (1, 2, 3, 1)), ("example_4_2", (1, 1, 1, 0))],
    )
    def test_worked_examples(self, name, dims):
        P = get_problem(name)
        assert (P.n, P.m, P.p, P.q) == dims

    def test_suite_size_and_known_solutions(self):
        assert len(problem_names()) >= 10
        others = [n for n in problem_names() if not n.startswith("example_")]
        assert len(others) >= 7
        for n in others:
            ks = get_problem(n).known_solution
            assert ks.F is not None and ks.f is not None

    def test_unknown_name_lists_available(self):
        with pytest.raises(UnknownProblemError) as err:
            get_problem("no_such")
        assert "example_3_1" in str(err.value)
        assert isinstance(err.value, KeyError)

    @pytest.mark.parametrize("name", ALL_PROBLEMS)
    def test_shapes_and_symmetry(self, name, rng):
        P = get_problem(name)
        x0, y0 = P.start_point()
        x = x0 + rng.normal(size=P.n)
        y = y0 + rng.normal(size=P.m)
        nm = P.n + P.m
        d = derivatives(P, x, y)
        assert d.grad_F.shape == (nm,) and d.jac_g.shape == (P.p, nm) and d.jac_G.shape == (P.q, nm)
        for H in [d.hess_F, d.hess_f, *d.hess_g, *d.hess_G]:
            assert np.max(np.abs(H - H.T)) <= 1e-12 * max(1.0, np.max(np.abs(H)))

    @pytest.mark.parametrize("name", ALL_PROBLEMS)
    def test_pure_oracles(self, name):
        P = get_problem(name)
        x, y = P.start_point()
        a, b = evaluate(P, x, y), evaluate(P, x, y)
        assert a[:2] == b[:2]
        np.testing.assert_array_equal(a[2], b[2])
        d1, d2 = derivatives(P, x, y), derivatives(P, x, y)
        for f in dataclasses.fields(d1):
            np.testing.assert_array_equal(getattr(d1, f.name), getattr(d2, f.name))

    @pytest.mark.parametrize("name", ALL_PROBLEMS)
    def test_start_point_is_feasible(self, name):
        P = get_problem(name)
        _, _, G, g = evaluate(P, *P.start_point())
        assert np.all(G <= 0) and np.all(g <= 0)

    def test_known_solutions_satisfy_constraints(self):
        for P in REGISTRY.values():
            ks = P.known_solution
            F, f, G, g = evaluate(P, ks.x, ks.y)
            assert np.all(G <= 1e-12) and np.all(g <= 1e-12)
            assert F == pytest.approx(ks.F, abs=1e-9)
            assert f == pytest.approx(ks.f, abs=1e-9)

    def test_incomplete_oracles_rejected(self):
        P = get_problem("example_3_1")
        with pytest.raises(ValueError):
            dataclasses.replace(P, hess_g=None)

    def test_missing_block_filled(self):
        P = BilevelProblem(
            name="tiny", n=1, m=1, p=0, q=0,
            F=lambda x, y: 0.0, f=lambda x, y: 0.0,
            grad_F=lambda x, y: np.zeros(2), grad_f=lambda x, y: np.zeros(2),
            hess_F=lambda x, y: np.zeros((2, 2)), hess_f=lambda x, y: np.zeros((2, 2)),
        )
        assert P.jac_g(np.ones(1), np.ones(1)).shape == (0, 2)
        assert P.N == 2 and P.n_rows == 3
