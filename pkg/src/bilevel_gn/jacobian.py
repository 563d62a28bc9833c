"""Complementarity coefficients and the compact residual Jacobian.

The Jacobian has ``N + m`` rows and ``N`` columns laid out as::

    [ hess_L          jac_g^T   jac_G^T   -lam jac_g^T ]
    [ cross_L         0         0          jac_g_y^T   ]
    [ diag(tau) jac_g diag(gam) 0          0           ]
    [ diag(alp) jac_G 0         diag(bet)  0           ]
    [ diag(the) jac_g 0         0          diag(kap)   ]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import BilevelProblem, derivatives, evaluate
from .residual import IterateZ, as_iterate

DEGENERACY_TOL = 1e-12


class DegeneratePairError(ArithmeticError):
    """Exact coefficients requested at a pair with both entries zero."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


def complementarity_coefficients(c: float, mlt: float, mu: float = 0.0) -> tuple[float, float]:
    """Return ``(tau, gamma)`` for constraint value ``c`` and multiplier ``mlt``.

    ``tau = c / s + 1`` and ``gamma = mlt / s - 1`` with
    ``s = sqrt(c^2 + mlt^2 + 2 mu)``.
    """
    tau, gam = _coefficient_arrays(np.array([c], dtype=float), np.array([mlt], dtype=float), mu, "pair")
    return float(tau[0]), float(gam[0])


def _coefficient_arrays(c: np.ndarray, mlt: np.ndarray, mu: float, label: str) -> tuple[np.ndarray, np.ndarray]:
    if mu < 0:
        raise ValueError(f"smoothing parameter must be nonnegative, got {mu}")
    if mu == 0:
        bad = np.flatnonzero(np.maximum(np.abs(c), np.abs(mlt)) <= DEGENERACY_TOL)
        if bad.size:
            j = int(bad[0])
            raise DegeneratePairError(
                f"degenerate complementarity pair in {label} row {j}: "
                f"constraint and multiplier are both zero (strict complementarity fails)",
                row=j,
            )
    s = np.sqrt(c * c + mlt * mlt + 2.0 * mu)
    # cancellation-free forms for c/s + 1 with c < 0 and mlt/s - 1 with mlt > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(c < 0, (mlt * mlt + 2.0 * mu) / (s * (s - c)), c / s + 1.0)
        gam = np.where(mlt > 0, -(c * c + 2.0 * mu) / (s * (s + mlt)), mlt / s - 1.0)
    return tau, gam


@dataclass(frozen=True)
class FBCoefficients:
    """Coefficients of the three complementarity blocks.

    ``(tau, gamma)`` belong to ``(g, u)``, ``(alpha, beta)`` to ``(G, v)``
    and ``(theta, kappa)`` to ``(g, w)``.
    """

    tau: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    mu: float


def fb_coefficients(problem: BilevelProblem, z, mu: float = 0.0, limiting: bool = False) -> FBCoefficients:
    """All coefficient pairs at ``z``.

    With ``limiting=True`` and ``mu = 0``, degenerate pairs receive the
    ``mu -> 0`` limit ``(1, -1)`` instead of raising.
    """
    z = as_iterate(problem, z)
    _, _, G, g = evaluate(problem, z.x, z.y)
    out = []
    for c, mlt, label in ((g, z.u, "FB(u,g)"), (G, z.v, "FB(v,G)"), (g, z.w, "FB(w,g)")):
        if limiting and mu == 0:
            deg = np.maximum(np.abs(c), np.abs(mlt)) <= DEGENERACY_TOL
            tau, gam = _coefficient_arrays(np.where(deg, -1.0, c), np.where(deg, 0.0, mlt), 0.0, label)
            tau = np.where(deg, 1.0, tau)
            gam = np.where(deg, -1.0, gam)
        else:
            tau, gam = _coefficient_arrays(c, mlt, mu, label)
        out.extend([tau, gam])
    return FBCoefficients(*out, mu=mu)


@dataclass(frozen=True)
class LagrangianBlocks:
    """Second-order blocks: ``hess_L`` is ``(n+m, n+m)``, ``cross_L`` is ``(m, n+m)``."""

    hess_L: np.ndarray
    cross_L: np.ndarray


def lagrangian_blocks(problem: BilevelProblem, lam: float, z) -> LagrangianBlocks:
    if lam <= 0:
        raise ValueError(f"penalty parameter must be positive, got {lam}")
    z = as_iterate(problem, z)
    d = derivatives(problem, z.x, z.y)
    hess_L = (
        d.hess_F
        + np.tensordot(z.u - lam * z.w, d.hess_g, axes=1)
        + np.tensordot(z.v, d.hess_G, axes=1)
    )
    lower = d.hess_f + np.tensordot(z.w, d.hess_g, axes=1)
    return LagrangianBlocks(hess_L=hess_L, cross_L=lower[problem.n :, :].copy())


def _assemble(problem: BilevelProblem, lam: float, z: IterateZ, coef: FBCoefficients) -> np.ndarray:
    n, m, p, q = problem.n, problem.m, problem.p, problem.q
    nm = n + m
    d = derivatives(problem, z.x, z.y)
    blocks = lagrangian_blocks(problem, lam, z)
    J = np.zeros((problem.n_rows, problem.N))
    cu, cv, cw = nm, nm + p, nm + p + q  # column offsets of u, v, w

    J[:nm, :nm] = blocks.hess_L
    J[:nm, cu:cv] = d.jac_g.T
    J[:nm, cv:cw] = d.jac_G.T
    J[:nm, cw:] = -lam * d.jac_g.T

    r = nm
    J[r : r + m, :nm] = blocks.cross_L
    J[r : r + m, cw:] = d.jac_g[:, n:].T

    r += m
    J[r : r + p, :nm] = coef.tau[:, None] * d.jac_g
    J[r : r + p, cu:cv] = np.diag(coef.gamma)
    r += p
    J[r : r + q, :nm] = coef.alpha[:, None] * d.jac_G
    J[r : r + q, cv:cw] = np.diag(coef.beta)
    r += q
    J[r : r + p, :nm] = coef.theta[:, None] * d.jac_g
    J[r : r + p, cw:] = np.diag(coef.kappa)
    return J


def assemble_jacobian(problem: BilevelProblem, lam: float, mu: float, z) -> np.ndarray:
    """Jacobian of the smoothed residual (exact residual when ``mu = 0``).

    Raises:
        DegeneratePairError: ``mu = 0`` and some pair is ``(0, 0)``.
    """
    z = as_iterate(problem, z)
    return _assemble(problem, lam, z, fb_coefficients(problem, z, mu))


def limiting_jacobian(problem: BilevelProblem, lam: float, z) -> np.ndarray:
    """Element of the C-subdifferential obtained as ``mu -> 0``.

    Nondegenerate rows use the exact coefficients; degenerate rows use
    ``(tau, gamma) = (1, -1)``.
    """
    z = as_iterate(problem, z)
    return _assemble(problem, lam, z, fb_coefficients(problem, z, 0.0, limiting=True))
