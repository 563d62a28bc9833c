"""Bilevel problem instances and their derivative oracles.

A problem is the tuple (F, f, G, g) of upper/lower objectives and
upper/lower inequality constraints ``G(x, y) <= 0``, ``g(x, y) <= 0``,
together with hand-written first and second derivatives. All gradients and
Jacobians are taken with respect to the stacked variable ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Scalar = Callable[[np.ndarray, np.ndarray], float]
Vector = Callable[[np.ndarray, np.ndarray], np.ndarray]

LL_CONSTRAINT_KINDS = ("linear", "nonlinear-convex", "nonconvex", "none")


class DimensionError(ValueError):
    """Raised when an input vector does not match the problem dimensions."""


@dataclass(frozen=True)
class KnownSolution:
    """Best known solution from the literature; any field may be unknown."""

    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    F: Optional[float] = None
    f: Optional[float] = None


@dataclass(frozen=True)
class DerivativeBundle:
    """All derivative information of a problem at a fixed ``(x, y)``.

    ``hess_g`` and ``hess_G`` are stacked per constraint, with shapes
    ``(p, n+m, n+m)`` and ``(q, n+m, n+m)``.
    """

    grad_F: np.ndarray
    grad_f: np.ndarray
    jac_g: np.ndarray
    jac_G: np.ndarray
    hess_F: np.ndarray
    hess_f: np.ndarray
    hess_g: np.ndarray
    hess_G: np.ndarray
    n: int

    @property
    def grad_F_x(self) -> np.ndarray:
        return self.grad_F[: self.n]

    @property
    def grad_F_y(self) -> np.ndarray:
        return self.grad_F[self.n :]

    @property
    def grad_f_y(self) -> np.ndarray:
        return self.grad_f[self.n :]


@dataclass(frozen=True)
class BilevelProblem:
    """A continuous bilevel program with analytic derivative oracles.

    Constraint blocks that are absent (``q == 0`` or ``p == 0``) may be
    left as ``None``; empty oracles of the right shape are filled in.

    Attributes:
        ll_objective_convex: whether ``f(x, .)`` is convex in ``y``.
        ll_constraints: one of ``linear``, ``nonlinear-convex``,
            ``nonconvex`` or ``none`` (convexity in ``y``).
        default_start: ``(x0, y0)`` replacing the all-ones start.
    """

    name: str
    n: int
    m: int
    p: int
    q: int
    F: Scalar
    f: Scalar
    grad_F: Vector
    grad_f: Vector
    hess_F: Vector
    hess_f: Vector
    g: Optional[Vector] = None
    jac_g: Optional[Vector] = None
    hess_g: Optional[Vector] = None
    G: Optional[Vector] = None
    jac_G: Optional[Vector] = None
    hess_G: Optional[Vector] = None
    known_solution: KnownSolution = field(default_factory=KnownSolution)
    default_start: Optional[tuple[np.ndarray, np.ndarray]] = None
    ll_objective_convex: bool = True
    ll_constraints: str = "linear"
    source: str = ""

    def __post_init__(self):
        for dim in (self.n, self.m, self.p, self.q):
            if dim < 0:
                raise ValueError(f"{self.name}: negative dimension")
        if self.ll_constraints not in LL_CONSTRAINT_KINDS:
            raise ValueError(f"{self.name}: unknown ll_constraints {self.ll_constraints!r}")
        nm = self.n + self.m
        for count, names in ((self.p, ("g", "jac_g", "hess_g")), (self.q, ("G", "jac_G", "hess_G"))):
            oracles = [getattr(self, k) for k in names]
            if all(o is None for o in oracles):
                if count:
                    raise ValueError(f"{self.name}: {names[0]} oracles missing for {count} constraints")
                object.__setattr__(self, names[0], lambda x, y: np.zeros(0))
                object.__setattr__(self, names[1], lambda x, y: np.zeros((0, nm)))
                object.__setattr__(self, names[2], lambda x, y: np.zeros((0, nm, nm)))
            elif any(o is None for o in oracles):
                raise ValueError(f"{self.name}: incomplete {names[0]} oracles")

    @property
    def N(self) -> int:
        """Number of unknowns ``n + m + 2p + q``."""
        return self.n + self.m + 2 * self.p + self.q

    @property
    def n_rows(self) -> int:
        """Number of residual equations ``n + 2m + 2p + q``."""
        return self.N + self.m

    def start_point(self) -> tuple[np.ndarray, np.ndarray]:
        if self.default_start is not None:
            x0, y0 = self.default_start
            return np.array(x0, dtype=float), np.array(y0, dtype=float)
        return np.ones(self.n), np.ones(self.m)


def _check_xy(problem: BilevelProblem, x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != problem.n or y.size != problem.m:
        raise DimensionError(
            f"{problem.name}: expected x in R^{problem.n}, y in R^{problem.m}, "
            f"got sizes {x.size} and {y.size}"
        )
    return x, y


def evaluate(problem: BilevelProblem, x, y) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Return ``(F, f, G, g)`` at ``(x, y)``."""
    x, y = _check_xy(problem, x, y)
    return (
        float(problem.F(x, y)),
        float(problem.f(x, y)),
        np.asarray(problem.G(x, y), dtype=float).reshape(problem.q),
        np.asarray(problem.g(x, y), dtype=float).reshape(problem.p),
    )


def derivatives(problem: BilevelProblem, x, y) -> DerivativeBundle:
    """Evaluate every first and second derivative oracle at ``(x, y)``."""
    x, y = _check_xy(problem, x, y)
    nm = problem.n + problem.m
    p, q = problem.p, problem.q
    return DerivativeBundle(
        grad_F=np.asarray(problem.grad_F(x, y), dtype=float).reshape(nm),
        grad_f=np.asarray(problem.grad_f(x, y), dtype=float).reshape(nm),
        jac_g=np.asarray(problem.jac_g(x, y), dtype=float).reshape(p, nm),
        jac_G=np.asarray(problem.jac_G(x, y), dtype=float).reshape(q, nm),
        hess_F=np.asarray(problem.hess_F(x, y), dtype=float).reshape(nm, nm),
        hess_f=np.asarray(problem.hess_f(x, y), dtype=float).reshape(nm, nm),
        hess_g=np.asarray(problem.hess_g(x, y), dtype=float).reshape(p, nm, nm),
        hess_G=np.asarray(problem.hess_G(x, y), dtype=float).reshape(q, nm, nm),
        n=problem.n,
    )


def _central_jacobian(fun, xy: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobian of ``fun: R^k -> R^r`` as an ``(r, k)`` array."""
    cols = []
    for k in range(xy.size):
        e = np.zeros_like(xy)
        e[k] = h
        cols.append((np.atleast_1d(fun(xy + e)) - np.atleast_1d(fun(xy - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def finite_difference_check(problem: BilevelProblem, x, y, h: float = 1e-6) -> float:
    """Worst relative deviation of the analytic derivatives from central differences.

    Gradients and constraint Jacobians are compared against differences of
    the value oracles, Hessians against differences of the gradient oracles.
    Entries are scaled by ``max(1, |numeric|)``.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    x, y = _check_xy(problem, x, y)
    n = problem.n
    xy = np.concatenate([x, y])

    def split(fun):
        return lambda v: np.asarray(fun(v[:n], v[n:]), dtype=float)

    d = derivatives(problem, x, y)
    checks = [
        (d.grad_F, _central_jacobian(split(problem.F), xy, h).reshape(-1)),
        (d.grad_f, _central_jacobian(split(problem.f), xy, h).reshape(-1)),
        (d.jac_g, _central_jacobian(split(problem.g), xy, h)),
        (d.jac_G, _central_jacobian(split(problem.G), xy, h)),
        (d.hess_F, _central_jacobian(split(problem.grad_F), xy, h)),
        (d.hess_f, _central_jacobian(split(problem.grad_f), xy, h)),
        (d.hess_g, _central_jacobian(split(problem.jac_g), xy, h)),
        (d.hess_G, _central_jacobian(split(problem.jac_G), xy, h)),
    ]
    return max(_rel_err(a, b.reshape(a.shape)) for a, b in checks)
