"""Exact and smoothed Fischer-Burmeister optimality residuals.

Rows are stacked as ``[x-stat (n) | y-stat (m) | lower-stat (m) |
FB(u, g) (p) | FB(v, G) (q) | FB(w, g) (p)]``. Complementarity rows use the
orientation ``sqrt(m^2 + c^2) - m + c`` for multiplier ``m`` and
constraint value ``c``, i.e. ``fb(m, -c)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import BilevelProblem, DimensionError, derivatives, evaluate


@dataclass(frozen=True)
class IterateZ:
    """Stacked unknown ``z = (x, y, u, v, w)``; signs are not enforced."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, self.u, self.v, self.w])

    @classmethod
    def from_vector(cls, problem: BilevelProblem, z) -> "IterateZ":
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != problem.N:
            raise DimensionError(f"{problem.name}: iterate length {z.size}, expected {problem.N}")
        n, m, p, q = problem.n, problem.m, problem.p, problem.q
        cuts = np.cumsum([n, m, p, q])
        x, y, u, v, w = np.split(z.copy(), cuts)
        return cls(x, y, u, v, w)

    def check(self, problem: BilevelProblem) -> None:
        sizes = (self.x.size, self.y.size, self.u.size, self.v.size, self.w.size)
        want = (problem.n, problem.m, problem.p, problem.q, problem.p)
        if sizes != want:
            raise DimensionError(f"{problem.name}: iterate block sizes {sizes}, expected {want}")


def as_iterate(problem: BilevelProblem, z) -> IterateZ:
    """Accept either an :class:`IterateZ` or a flat vector."""
    if isinstance(z, IterateZ):
        z.check(problem)
        return z
    return IterateZ.from_vector(problem, z)


def fb(a, b):
    """Fischer-Burmeister function ``sqrt(a^2 + b^2) - a - b``."""
    return np.hypot(a, b) - a - b


def fb_smoothed(a, b, mu: float):
    """Smoothed variant ``sqrt(a^2 + b^2 + 2 mu) - a - b``; ``mu = 0`` gives :func:`fb`."""
    if mu < 0:
        raise ValueError(f"smoothing parameter must be nonnegative, got {mu}")
    if mu == 0:
        return fb(a, b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.sqrt(a * a + b * b + 2.0 * mu) - a - b


def _stationarity_rows(problem: BilevelProblem, lam: float, z: IterateZ) -> np.ndarray:
    d = derivatives(problem, z.x, z.y)
    n = problem.n
    upper = d.grad_F + d.jac_g.T @ (z.u - lam * z.w) + d.jac_G.T @ z.v
    lower = d.grad_f_y + d.jac_g[:, n:].T @ z.w
    return np.concatenate([upper, lower])


def residual_smoothed(problem: BilevelProblem, lam: float, mu: float, z) -> np.ndarray:
    """Smoothed residual of length ``N + m``; equals :func:`residual` at ``mu = 0``."""
    if lam <= 0:
        raise ValueError(f"penalty parameter must be positive, got {lam}")
    if mu < 0:
        raise ValueError(f"smoothing parameter must be nonnegative, got {mu}")
    z = as_iterate(problem, z)
    _, _, G, g = evaluate(problem, z.x, z.y)
    return np.concatenate([
        _stationarity_rows(problem, lam, z),
        fb_smoothed(z.u, -g, mu),
        fb_smoothed(z.v, -G, mu),
        fb_smoothed(z.w, -g, mu),
    ])


def residual(problem: BilevelProblem, lam: float, z) -> np.ndarray:
    """Exact optimality residual of length ``N + m``."""
    return residual_smoothed(problem, lam, 0.0, z)


def merit(problem: BilevelProblem, lam: float, z) -> float:
    """Least-squares merit: sum of squared residual entries."""
    r = residual(problem, lam, z)
    return float(r @ r)
