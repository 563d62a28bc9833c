"""Embedded suite of small bilevel test problems.

Each entry is a classic instance from the bilevel literature (collected in
BOLIB) with hand-coded derivatives. Problems whose all-ones start violates a
constraint carry a feasible ``default_start``.
"""

from __future__ import annotations

import numpy as np

from .problem import BilevelProblem, KnownSolution


class UnknownProblemError(KeyError):
    """Raised by :func:`get_problem` for names that are not registered."""

    def __str__(self):
        return self.args[0]


def _affine(A, b):
    """Oracles for ``c(x, y) = A @ (x, y) + b``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    k, nm = A.shape

    def val(x, y):
        return A @ np.concatenate([x, y]) + b

    def jac(x, y):
        return A.copy()

    def hess(x, y):
        return np.zeros((k, nm, nm))

    return val, jac, hess


def _const(M):
    M = np.asarray(M, dtype=float)
    return lambda x, y: M.copy()


def _example_3_1() -> BilevelProblem:
    g, jac_g, hess_g = _affine([[-2, 1], [1, -2], [1, 2]], [-1, -2, -14])
    G, jac_G, hess_G = _affine([[1, 0], [-1, 0]], [-8, 0])
    return BilevelProblem(
        name="example_3_1",
        n=1, m=1, p=3, q=2,
        F=lambda x, y: (x[0] - 3) ** 2 + (y[0] - 2) ** 2,
        f=lambda x, y: (y[0] - 5) ** 2,
        grad_F=lambda x, y: np.array([2 * (x[0] - 3), 2 * (y[0] - 2)]),
        grad_f=lambda x, y: np.array([0.0, 2 * (y[0] - 5)]),
        hess_F=_const(2 * np.eye(2)),
        hess_f=_const([[0, 0], [0, 2]]),
        g=g, jac_g=jac_g, hess_g=hess_g,
        G=G, jac_G=jac_G, hess_G=hess_G,
        known_solution=KnownSolution(np.array([1.0]), np.array([3.0]), 5.0, 4.0),
        ll_constraints="linear",
        source="ClarkWesterberg1990a",
    )


def _example_4_1() -> BilevelProblem:
    g, jac_g, hess_g = _affine([[-1, -1, -1], [0, -1, 0], [0, 0, -1]], [1, 0, 0])
    G, jac_G, hess_G = _affine([[-1, 0, 0]], [0.5])

    def grad_F(x, y):
        s = 2 * (y[0] + y[1])
        return np.array([2 * x[0], s, s])

    return BilevelProblem(
        name="example_4_1",
        n=1, m=2, p=3, q=1,
        F=lambda x, y: x[0] ** 2 + (y[0] + y[1]) ** 2,
        f=lambda x, y: y[0],
        grad_F=grad_F,
        grad_f=lambda x, y: np.array([0.0, 1.0, 0.0]),
        hess_F=_const([[2, 0, 0], [0, 2, 2], [0, 2, 2]]),
        hess_f=_const(np.zeros((3, 3))),
        g=g, jac_g=jac_g, hess_g=hess_g,
        G=G, jac_G=jac_G, hess_G=hess_G,
        known_solution=KnownSolution(np.array([0.5]), np.array([0.0, 0.5]), 0.5, 0.0),
        ll_constraints="linear",
        source="BOLIB instance used for the smoothing analysis",
    )


def _example_4_2() -> BilevelProblem:
    return BilevelProblem(
        name="example_4_2",
        n=1, m=1, p=1, q=0,
        F=lambda x, y: (x[0] - 1) ** 2 + y[0] ** 2,
        f=lambda x, y: x[0] ** 2 * y[0],
        grad_F=lambda x, y: np.array([2 * (x[0] - 1), 2 * y[0]]),
        grad_f=lambda x, y: np.array([2 * x[0] * y[0], x[0] ** 2]),
        hess_F=_const(2 * np.eye(2)),
        hess_f=lambda x, y: np.array([[2 * y[0], 2 * x[0]], [2 * x[0], 0.0]]),
        g=lambda x, y: np.array([y[0] ** 2]),
        jac_g=lambda x, y: np.array([[0.0, 2 * y[0]]]),
        hess_g=_const([[[0, 0], [0, 2]]]),
        known_solution=KnownSolution(np.array([1.0]), np.array([0.0]), 0.0, 0.0),
        # y = 0 is the only feasible lower-level point
        default_start=(np.array([0.5]), np.array([0.0])),
        ll_constraints="nonlinear-convex",
        source="MitsosBarton2006Ex38",
    )


def _shimizu_aiyoshi_1981_ex1() -> BilevelProblem:
    g, jac_g, hess_g = _affine([[1, 1], [0, -1], [0, 1]], [-20, 0, -20])
    G, jac_G, hess_G = _affine([[-1, 1], [-1, 0], [1, 0]], [0, 0, -15])

    def grad_f(x, y):
        r = x[0] + 2 * y[0] - 30
        return np.array([2 * r, 4 * r])

    return BilevelProblem(
        name="ShimizuAiyoshi1981Ex1",
        n=1, m=1, p=3, q=3,
        F=lambda x, y: x[0] ** 2 + (y[0] - 10) ** 2,
        f=lambda x, y: (x[0] + 2 * y[0] - 30) ** 2,
        grad_F=lambda x, y: np.array([2 * x[0], 2 * (y[0] - 10)]),
        grad_f=grad_f,
        hess_F=_const(2 * np.eye(2)),
        hess_f=_const([[2, 4], [4, 8]]),
        g=g, jac_g=jac_g, hess_g=hess_g,
        G=G, jac_G=jac_G, hess_G=hess_G,
        known_solution=KnownSolution(np.array([10.0]), np.array([10.0]), 100.0, 0.0),
        ll_constraints="linear",
        source="Shimizu & Aiyoshi (1981), example 1",
    )


def _bard_1988_ex1() -> BilevelProblem:
    g, jac_g, hess_g = _affine([[-3, 1], [1, -0.5], [1, 1], [0, -1]], [3, -4, -7, 0])
    G, jac_G, hess_G = _affine([[-1, 0]], [0])
    return BilevelProblem(
        name="Bard1988Ex1",
        n=1, m=1, p=4, q=1,
        F=lambda x, y: (x[0] - 5) ** 2 + (2 * y[0] + 1) ** 2,
        f=lambda x, y: (y[0] - 1) ** 2 - 1.5 * x[0] * y[0],
        grad_F=lambda x, y: np.array([2 * (x[0] - 5), 4 * (2 * y[0] + 1)]),
        grad_f=lambda x, y: np.array([-1.5 * y[0], 2 * (y[0] - 1) - 1.5 * x[0]]),
        hess_F=_const([[2, 0], [0, 8]]),
        hess_f=_const([[0, -1.5], [-1.5, 2]]),
        g=g, jac_g=jac_g, hess_g=hess_g,
        G=G, jac_G=jac_G, hess_G=hess_G,
        known_solution=KnownSolution(np.array([1.0]), np.array([0.0]), 17.0, 1.0),
        # (1, 1) violates -3x + y + 3 <= 0
        default_start=(np.array([2.0]), np.array([1.0])),
        ll_constraints="linear",
        source="Bard (1988), example 1",
    )


def _shimizu_aiyoshi_1981_ex2() -> BilevelProblem:
    g, jac_g, hess_g = _affine(
        [[0, 0, -1, 0], [0, 0, 0, -1], [0, 0, 1, 0], [0, 0, 0, 1]], [0, 0, -10, -10]
    )
    G, jac_G, hess_G = _affine([[-1, -2, 0, 0], [1, 1, 0, 0], [0, 1, 0, 0]], [30, -25, -15])

    def F(x, y):
        return (x[0] - 30) ** 2 + (x[1] - 20) ** 2 - 20 * y[0] + 20 * y[1]

    def grad_f(x, y):
        d = 2 * (x - y)
        return np.concatenate([d, -d])

    return BilevelProblem(
        name="ShimizuAiyoshi1981Ex2",
        n=2, m=2, p=4, q=3,
        F=F,
        f=lambda x, y: float(np.sum((x - y) ** 2)),
        grad_F=lambda x, y: np.array([2 * (x[0] - 30), 2 * (x[1] - 20), -20.0, 20.0]),
        grad_f=grad_f,
        hess_F=_const(np.diag([2.0, 2.0, 0.0, 0.0])),
        hess_f=_const(np.block([[2 * np.eye(2), -2 * np.eye(2)], [-2 * np.eye(2), 2 * np.eye(2)]])),
        g=g, jac_g=jac_g, hess_g=hess_g,
        G=G, jac_G=jac_G, hess_G=hess_G,
        known_solution=KnownSolution(np.array([20.0, 5.0]), np.array([10.0, 5.0]), 225.0, 100.0),
        # (1, 1) violates x1 + 2 x2 >= 30
        default_start=(np.array([15.0, 8.0]), np.array([1.0, 1.0])),
        ll_constraints="linear",
        source="Shimizu & Aiyoshi (1981), example 2",
    )


def _desilva_1978() -> BilevelProblem:
    g, jac_g, hess_g = _affine(
        [[0, 0, -1, 0], [0, 0, 0, -1], [0, 0, 1, 0], [0, 0, 0, 1]], [0.5, 0.5, -1.5, -1.5]
    )

    def grad_f(x, y):
        d = 2 * (y - x)
        return np.concatenate([-d, d])

    return BilevelProblem(
        name="DeSilva1978",
        n=2, m=2, p=4, q=0,
        F=lambda x, y: float(x[0] ** 2 - 2 * x[0] + x[1] ** 2 - 2 * x[1] + y @ y),
        f=lambda x, y: float(np.sum((y - x) ** 2)),
        grad_F=lambda x, y: np.concatenate([2 * x - 2, 2 * y]),
        grad_f=grad_f,
        hess_F=_const(2 * np.eye(4)),
        hess_f=_const(np.block([[2 * np.eye(2), -2 * np.eye(2)], [-2 * np.eye(2), 2 * np.eye(2)]])),
        g=g, jac_g=jac_g, hess_g=hess_g,
        known_solution=KnownSolution(np.array([0.5, 0.5]), np.array([0.5, 0.5]), -1.0, 0.0),
        ll_constraints="linear",
        source="De Silva (1978)",
    )


def _macal_hurter_1997() -> BilevelProblem:
    # lower level is unconstrained: y(x) = 50x - 500
    x_star = 50102.0 / 5002.0
    y_star = 50 * x_star - 500
    F_star = (x_star - 1) ** 2 + (y_star - 1) ** 2
    f_star = 0.5 * y_star**2 + 500 * y_star - 50 * x_star * y_star
    return BilevelProblem(
        name="MacalHurter1997",
        n=1, m=1, p=0, q=0,
        F=lambda x, y: (x[0] - 1) ** 2 + (y[0] - 1) ** 2,
        f=lambda x, y: 0.5 * y[0] ** 2 + 500 * y[0] - 50 * x[0] * y[0],
        grad_F=lambda x, y: np.array([2 * (x[0] - 1), 2 * (y[0] - 1)]),
        grad_f=lambda x, y: np.array([-50 * y[0], y[0] + 500 - 50 * x[0]]),
        hess_F=_const(2 * np.eye(2)),
        hess_f=_const([[0, -50], [-50, 1]]),
        known_solution=KnownSolution(np.array([x_star]), np.array([y_star]), F_star, f_star),
        ll_constraints="none",
        source="Macal & Hurter (1997)",
    )


def _gumus_floudas_2001_ex1() -> BilevelProblem:
    g, jac_g, hess_g = _affine([[4, 1], [0, -1]], [-50, 0])
    G, jac_G, hess_G = _affine([[-4, 1], [-1, 0]], [0, 0])

    def grad_f(x, y):
        c = 4 * (x[0] + y[0] - 20) ** 3
        return np.array([c, c])

    def hess_f(x, y):
        c = 12 * (x[0] + y[0] - 20) ** 2
        return np.full((2, 2), c)

    return BilevelProblem(
        name="GumusFloudas2001Ex1",
        n=1, m=1, p=2, q=2,
        F=lambda x, y: 16 * x[0] ** 2 + 9 * y[0] ** 2,
        f=lambda x, y: (x[0] + y[0] - 20) ** 4,
        grad_F=lambda x, y: np.array([32 * x[0], 18 * y[0]]),
        grad_f=grad_f,
        hess_F=_const([[32, 0], [0, 18]]),
        hess_f=hess_f,
        g=g, jac_g=jac_g, hess_g=hess_g,
        G=G, jac_G=jac_G, hess_G=hess_G,
        known_solution=KnownSolution(np.array([11.25]), np.array([5.0]), 2250.0, 3.75**4),
        ll_constraints="linear",
        source="Gumus & Floudas (2001), example 1",
    )


def _liu_hart_1994() -> BilevelProblem:
    g, jac_g, hess_g = _affine([[-1, 1], [1, 2], [4, -1], [0, -1]], [-3, -12, -12, 0])
    G, jac_G, hess_G = _affine([[-1, 0]], [0])
    return BilevelProblem(
        name="LiuHart1994",
        n=1, m=1, p=4, q=1,
        F=lambda x, y: -x[0] - 3 * y[0],
        f=lambda x, y: y[0],
        grad_F=_const([-1.0, -3.0]),
        grad_f=_const([0.0, 1.0]),
        hess_F=_const(np.zeros((2, 2))),
        hess_f=_const(np.zeros((2, 2))),
        g=g, jac_g=jac_g, hess_g=hess_g,
        G=G, jac_G=jac_G, hess_G=hess_G,
        known_solution=KnownSolution(np.array([4.0]), np.array([4.0]), -16.0, 4.0),
        ll_constraints="linear",
        source="Liu & Hart (1994)",
    )


def _bard_1998_linear() -> BilevelProblem:
    g, jac_g, hess_g = _affine([[-1, -1], [-2, 1], [2, 1], [3, -2], [0, -1]], [3, 0, -12, -4, 0])
    G, jac_G, hess_G = _affine([[-1, 0]], [0])
    return BilevelProblem(
        name="Bard1998Ex511",
        n=1, m=1, p=5, q=1,
        F=lambda x, y: x[0] - 4 * y[0],
        f=lambda x, y: y[0],
        grad_F=_const([1.0, -4.0]),
        grad_f=_const([0.0, 1.0]),
        hess_F=_const(np.zeros((2, 2))),
        hess_f=_const(np.zeros((2, 2))),
        g=g, jac_g=jac_g, hess_g=hess_g,
        G=G, jac_G=jac_G, hess_G=hess_G,
        known_solution=KnownSolution(np.array([4.0]), np.array([4.0]), -12.0, 4.0),
        # (1, 1) violates -x - y + 3 <= 0
        default_start=(np.array([2.0]), np.array([1.5])),
        ll_constraints="linear",
        source="Bard (1998), linear example 5.1.1",
    )


_FACTORIES = (
    _example_3_1,
    _example_4_1,
    _example_4_2,
    _shimizu_aiyoshi_1981_ex1,
    _shimizu_aiyoshi_1981_ex2,
    _bard_1988_ex1,
    _desilva_1978,
    _macal_hurter_1997,
    _gumus_floudas_2001_ex1,
    _liu_hart_1994,
    _bard_1998_linear,
)

REGISTRY: dict[str, BilevelProblem] = {p.name: p for p in (f() for f in _FACTORIES)}


def problem_names() -> list[str]:
    return list(REGISTRY)


def get_problem(name: str) -> BilevelProblem:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownProblemError(
            f"unknown problem {name!r}; available: {', '.join(REGISTRY)}"
        ) from None
