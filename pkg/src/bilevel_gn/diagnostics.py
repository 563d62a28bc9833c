"""Pointwise checks of the regularity assumptions behind the convergence theory."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .jacobian import (
    DEGENERACY_TOL,
    assemble_jacobian,
    fb_coefficients,
    lagrangian_blocks,
    limiting_jacobian,
)
from .linalg import svd
from .problem import BilevelProblem, derivatives, evaluate
from .residual import as_iterate, residual

P1, P2, P3, DEGENERATE = "P1", "P2", "P3", "degenerate"


@dataclass(frozen=True)
class PairClassification:
    """Class of every complementarity row.

    ``ug``, ``vG`` and ``wg`` hold one label per row of the ``(u, g)``,
    ``(v, G)`` and ``(w, g)`` blocks: ``P1`` (both coefficients nonzero),
    ``P2`` (``tau = 0``, inactive constraint), ``P3`` (``gamma = 0``,
    zero-slack constraint with nonzero multiplier) or ``degenerate``.
    ``active_g`` and ``active_G`` are zero-based active index sets.
    """

    ug: tuple[str, ...]
    vG: tuple[str, ...]
    wg: tuple[str, ...]
    active_g: tuple[int, ...]
    active_G: tuple[int, ...]

    def degenerate_rows(self) -> dict[str, tuple[int, ...]]:
        return {
            name: tuple(i for i, c in enumerate(labels) if c == DEGENERATE)
            for name, labels in (("ug", self.ug), ("vG", self.vG), ("wg", self.wg))
        }

    @property
    def strict_complementarity(self) -> bool:
        return not any(self.degenerate_rows().values())


def _classify(c: np.ndarray, mlt: np.ndarray, tol: float) -> tuple[str, ...]:
    deg = np.maximum(np.abs(c), np.abs(mlt)) <= tol
    # exact coefficients on the safe rows; degenerate rows get a dummy pair
    s = np.hypot(np.where(deg, 1.0, c), np.where(deg, 0.0, mlt))
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(c < 0, mlt * mlt / (s * (s - c)), c / s + 1.0)
        gam = np.where(mlt > 0, -c * c / (s * (s + mlt)), mlt / s - 1.0)
    labels = []
    for j in range(c.size):
        if deg[j]:
            labels.append(DEGENERATE)
        elif abs(tau[j]) <= tol:
            labels.append(P2)
        elif abs(gam[j]) <= tol:
            labels.append(P3)
        else:
            labels.append(P1)
    return tuple(labels)


def classify_pairs(problem: BilevelProblem, z, tol: float = 1e-9, active_tol: float = 1e-6) -> PairClassification:
    """Partition the complementarity rows at ``z`` by their exact coefficients."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    z = as_iterate(problem, z)
    _, _, G, g = evaluate(problem, z.x, z.y)
    return PairClassification(
        ug=_classify(g, z.u, tol),
        vG=_classify(G, z.v, tol),
        wg=_classify(g, z.w, tol),
        active_g=tuple(int(i) for i in np.flatnonzero(np.abs(g) <= active_tol)),
        active_G=tuple(int(i) for i in np.flatnonzero(np.abs(G) <= active_tol)),
    )


def _full_row_rank(M: np.ndarray, tol: float) -> bool:
    if M.shape[0] == 0:
        return True
    if M.shape[0] > M.shape[1]:
        return False
    s = svd(M).singular_values
    if s[0] == 0:
        return False
    return int(np.sum(s > tol * s[0])) == M.shape[0]


def check_licq(problem: BilevelProblem, z, tol: float = 1e-9, active_tol: float = 1e-6) -> tuple[bool, bool]:
    """Return ``(llicq, ulicq)``: independence of active constraint gradients.

    LLICQ uses the y-gradients of the active lower constraints, ULICQ the
    full gradients of all active lower and upper constraints.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    z = as_iterate(problem, z)
    _, _, G, g = evaluate(problem, z.x, z.y)
    d = derivatives(problem, z.x, z.y)
    Ig = np.abs(g) <= active_tol
    IG = np.abs(G) <= active_tol
    ll = _full_row_rank(d.jac_g[Ig, problem.n :], tol)
    ul = _full_row_rank(np.vstack([d.jac_g[Ig], d.jac_G[IG]]), tol)
    return ll, ul


def check_positive_definite(H, tol: float = 1e-9) -> bool:
    """True when an LDL^T factorization has all pivots above ``tol * max(1, max|H|)``.

    Raises:
        ValueError: ``H`` is not square and symmetric.
    """
    H = np.array(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if np.max(np.abs(H - H.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    n = H.shape[0]
    thresh = tol * scale
    for k in range(n):
        pivot = H[k, k]
        if not pivot > thresh:
            return False
        col = H[k + 1 :, k] / pivot
        H[k + 1 :, k + 1 :] -= np.outer(col, H[k, k + 1 :])
    return True


def lambda_bound(problem: BilevelProblem, z, mu: float) -> Optional[float]:
    """``min_j (kappa_j / theta_j) (tau_j / gamma_j)`` with smoothed coefficients.

    Returns ``None`` when ``p = 0``, where the bound is vacuous.
    """
    if not mu > 0:
        raise ValueError(f"lambda bound needs mu > 0, got {mu}")
    if problem.p == 0:
        return None
    coef = fb_coefficients(problem, z, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = (coef.kappa / coef.theta) * (coef.tau / coef.gamma)
    return float(np.min(ratios))


def check_diag_dominance(M) -> bool:
    """Strict row diagonal dominance with a positive diagonal."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    diag = np.diag(M)
    off = np.sum(np.abs(M), axis=1) - np.abs(diag)
    return bool(np.all(diag > off))


def rows_nonzero(problem: BilevelProblem, lam: float, z, tol: float = 0.0) -> bool:
    """Every row of ``[hess_L | cross_L^T | jac_g^T | jac_G^T]`` has a nonzero entry."""
    z = as_iterate(problem, z)
    blocks = lagrangian_blocks(problem, lam, z)
    d = derivatives(problem, z.x, z.y)
    M = np.hstack([blocks.hess_L, blocks.cross_L.T, d.jac_g.T, d.jac_G.T])
    return bool(np.all(np.max(np.abs(M), axis=1) > tol))


def curvature_matrix(problem: BilevelProblem, lam: float, z, h: float = 1e-6, mu: float = 0.0) -> np.ndarray:
    """Second-order term ``sum_i r_i hess(r_i)`` by central differences of the Jacobian.

    Raises:
        DegeneratePairError: ``mu = 0`` and ``z`` (or a neighbour) is degenerate.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    zv = as_iterate(problem, z).stack()
    r = residual(problem, lam, zv)
    N = problem.N
    T = np.empty((N, N))
    for k in range(N):
        e = np.zeros(N)
        e[k] = h
        dJ = assemble_jacobian(problem, lam, mu, zv + e) - assemble_jacobian(problem, lam, mu, zv - e)
        T[:, k] = dJ.T @ r / (2 * h)
    return T


def curvature_term(problem: BilevelProblem, lam: float, z, h: float = 1e-6, mu: float = 0.0) -> float:
    """Spectral norm of :func:`curvature_matrix`."""
    T = curvature_matrix(problem, lam, z, h, mu)
    return float(np.linalg.norm(T, 2)) if T.size else 0.0


def jacobian_consistency_gap(problem: BilevelProblem, lam: float, z, mu_ladder: Sequence[float]) -> list[float]:
    """Max-norm distance from each smoothed Jacobian to the limiting element."""
    ladder = [float(m) for m in mu_ladder]
    if not ladder or any(m <= 0 for m in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("mu ladder must be nonempty, positive and strictly decreasing")
    limit = limiting_jacobian(problem, lam, z)
    return [float(np.max(np.abs(assemble_jacobian(problem, lam, m, z) - limit), initial=0.0)) for m in ladder]


@dataclass(frozen=True)
class AssumptionReport:
    strict_complementarity: bool
    llicq_rank_ok: bool
    ulicq_rank_ok: bool
    hess_L_positive_definite: bool
    lambda_bound: Optional[float]
    lambda_ok: Optional[bool]
    diag_dominant: bool
    rows_nonzero: bool
    tol: float
    active_tol: float
    mu: float

    def as_dict(self) -> dict:
        return asdict(self)


def assumption_report(
    problem: BilevelProblem,
    lam: float,
    z,
    mu: float = 1e-11,
    tol: float = 1e-9,
    active_tol: float = 1e-6,
) -> AssumptionReport:
    """Evaluate every pointwise assumption at ``z``.

    Diagonal dominance is tested on ``J^T J`` of the smoothed Jacobian;
    the lambda bound uses the same ``mu``.
    """
    if not mu > 0:
        raise ValueError("assumption report needs mu > 0")
    z = as_iterate(problem, z)
    pairs = classify_pairs(problem, z, max(tol, DEGENERACY_TOL), active_tol)
    ll, ul = check_licq(problem, z, tol, active_tol)
    H = lagrangian_blocks(problem, lam, z).hess_L
    H = 0.5 * (H + H.T)
    J = assemble_jacobian(problem, lam, mu, z)
    cmu = lambda_bound(problem, z, mu)
    return AssumptionReport(
        strict_complementarity=pairs.strict_complementarity,
        llicq_rank_ok=ll,
        ulicq_rank_ok=ul,
        hess_L_positive_definite=check_positive_definite(H, tol),
        lambda_bound=cmu,
        lambda_ok=None if cmu is None else bool(lam < cmu),
        diag_dominant=check_diag_dominance(J.T @ J),
        rows_nonzero=rows_nonzero(problem, lam, z),
        tol=tol,
        active_tol=active_tol,
        mu=mu,
    )
