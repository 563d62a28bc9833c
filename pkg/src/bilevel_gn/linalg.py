"""Dense kernels: Gaussian elimination, SVD, pseudo-inverse and step solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-14
EPS = 2.2e-16


class SingularMatrixError(np.linalg.LinAlgError):
    """A pivot vanished during Gaussian elimination."""


class SingularNormalMatrixError(SingularMatrixError):
    """The Gauss-Newton normal matrix ``J^T J`` is numerically singular."""


class SvdConvergenceError(np.linalg.LinAlgError):
    """The singular value decomposition did not converge."""


def equilibrate(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row and column scale factors giving every row and column unit max-norm.

    Returns ``(r, c)`` such that ``diag(r) A diag(c)`` has entries bounded
    by one with a unit entry in every row and column. Zero rows or columns
    get scale one.
    """
    absA = np.abs(A)
    rmax = np.max(absA, axis=1) if A.size else np.zeros(A.shape[0])
    r = np.where(rmax > 0, 1.0 / np.where(rmax > 0, rmax, 1.0), 1.0)
    cmax = np.max(absA * r[:, None], axis=0) if A.size else np.zeros(A.shape[1])
    c = np.where(cmax > 0, 1.0 / np.where(cmax > 0, cmax, 1.0), 1.0)
    return r, c


def solve_gaussian(A, b) -> np.ndarray:
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    The matrix is first row- and column-equilibrated; a pivot of the scaled
    matrix with magnitude at most ``1e-14`` is treated as zero.

    Raises:
        ValueError: ``A`` is not square or ``b`` has the wrong length.
        SingularMatrixError: elimination hit a vanishing pivot.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    n = A.shape[0]
    if b.size != n:
        raise ValueError(f"right-hand side has length {b.size}, expected {n}")
    if n == 0:
        return np.zeros(0)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("matrix and right-hand side must be finite")
    rs, cs = equilibrate(A)
    A = A * rs[:, None] * cs[None, :]
    b = b * rs
    for k in range(n):
        piv = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[piv, k]) <= PIVOT_TOL:
            raise SingularMatrixError(
                f"zero pivot in column {k} (scaled pivot {abs(A[piv, k]):.3g} <= {PIVOT_TOL:g})"
            )
        if piv != k:
            A[[k, piv]] = A[[piv, k]]
            b[[k, piv]] = b[[piv, k]]
        factors = A[k + 1 :, k] / A[k, k]
        A[k + 1 :, k:] -= np.outer(factors, A[k, k:])
        b[k + 1 :] -= factors * b[k]
    x = np.empty(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1 :] @ x[k + 1 :]) / A[k, k]
    return x * cs


@dataclass(frozen=True)
class SvdFactors:
    """Full SVD ``A = U diag(s) V^T`` with descending singular values."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray
    rank_tol: float

    @property
    def rank(self) -> int:
        return int(np.sum(self.singular_values > self.rank_tol))


def default_rank_tol(shape: tuple[int, int], sigma_max: float) -> float:
    return max(shape) * sigma_max * EPS


def svd(A, rank_tol: float | None = None) -> SvdFactors:
    """Full singular value decomposition backed by LAPACK."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {A.shape}")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        norm = float(np.max(np.abs(A))) if A.size else 0.0
        raise SvdConvergenceError(f"SVD failed to converge (max|A| = {norm:.3g}): {exc}") from exc
    sigma_max = float(s[0]) if s.size else 0.0
    tol = default_rank_tol(A.shape, sigma_max) if rank_tol is None else float(rank_tol)
    return SvdFactors(U=U, singular_values=s, V=Vt.T, rank_tol=tol)


def pinv(A, rank_tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse ``V diag(1/s_i for s_i > tol) U^T``."""
    A = np.asarray(A, dtype=float)
    if rank_tol is not None and rank_tol < 0:
        raise ValueError("rank tolerance must be nonnegative")
    f = svd(A, rank_tol)
    s = f.singular_values
    k = s.size
    inv = np.zeros(k)
    keep = s > f.rank_tol
    inv[keep] = 1.0 / s[keep]
    return (f.V[:, :k] * inv) @ f.U[:, :k].T


def normal_equations_step(J, r) -> np.ndarray:
    """Gauss-Newton direction solving ``(J^T J) d = -J^T r``.

    Raises:
        SingularNormalMatrixError: ``J^T J`` is numerically singular.
    """
    J = np.asarray(J, dtype=float)
    r = np.asarray(r, dtype=float)
    try:
        return solve_gaussian(J.T @ J, -(J.T @ r))
    except SingularMatrixError as exc:
        raise SingularNormalMatrixError(f"singular normal matrix: {exc}") from exc


def pseudo_step(J, r, rank_tol: float | None = None) -> np.ndarray:
    """Pseudo-Newton direction ``-pinv(J) r``; always defined."""
    return -(pinv(J, rank_tol) @ np.asarray(r, dtype=float))


def lm_step(J, r, damping: float) -> np.ndarray:
    """Levenberg-Marquardt direction solving ``(J^T J + delta I) d = -J^T r``."""
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    J = np.asarray(J, dtype=float)
    A = J.T @ J + damping * np.eye(J.shape[1])
    return solve_gaussian(A, -(J.T @ np.asarray(r, dtype=float)))
