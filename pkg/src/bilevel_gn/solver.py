"""Gauss-Newton, Pseudo-Newton and Levenberg-Marquardt iterations on the residual."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .jacobian import assemble_jacobian
from .linalg import SingularMatrixError, lm_step, normal_equations_step, pseudo_step
from .problem import BilevelProblem, evaluate
from .residual import IterateZ, as_iterate, residual, residual_smoothed

STEPPERS = ("gauss_newton", "pseudo_newton", "levenberg_marquardt")
MU_KINDS = ("exact", "constant", "power")
LM_DAMPING_MAX = 1e20


@dataclass(frozen=True)
class MuPolicy:
    """Smoothing schedule: ``exact`` (mu = 0), ``constant`` or ``power``.

    The power schedule updates ``mu_{k+1} = mu_k ** (k + 1)``.
    """

    kind: str = "constant"
    mu0: float = 1e-11

    def __post_init__(self):
        if self.kind not in MU_KINDS:
            raise ValueError(f"unknown mu policy {self.kind!r}; choose from {MU_KINDS}")
        if self.kind == "constant" and not self.mu0 >= 0:
            raise ValueError("constant mu must be nonnegative")
        if self.kind == "power" and not 0 < self.mu0 < 1:
            raise ValueError("power schedule needs mu0 in (0, 1)")

    @classmethod
    def exact(cls) -> "MuPolicy":
        return cls("exact", 0.0)

    @classmethod
    def constant(cls, mu0: float = 1e-11) -> "MuPolicy":
        return cls("constant", mu0)

    @classmethod
    def power(cls, mu0: float) -> "MuPolicy":
        return cls("power", mu0)

    @property
    def initial(self) -> float:
        return 0.0 if self.kind == "exact" else float(self.mu0)


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    Attributes:
        lam: penalty parameter of the value-function term.
        eps: tolerance on the unsmoothed residual norm.
        max_iter: iteration budget ``K``.
        stall_tol: relative merit change below which a step counts as stalled.
        smoothed_rhs: use the smoothed residual on the right-hand side of
            the step equation instead of the exact one.
    """

    lam: float = 1.0
    eps: float = 1e-5
    max_iter: int = 1000
    mu_policy: MuPolicy = field(default_factory=MuPolicy)
    stepper: str = "gauss_newton"
    stall_tol: float = 1e-12
    lm_damping_init: float = 1e-3
    smoothed_rhs: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.stepper not in STEPPERS:
            raise ValueError(f"unknown stepper {self.stepper!r}; choose from {STEPPERS}")
        if self.stall_tol < 0 or self.lm_damping_init <= 0:
            raise ValueError("stall_tol must be >= 0 and lm_damping_init > 0")


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    STALLED = "stalled"
    SINGULAR_NORMAL_MATRIX = "singular_normal_matrix"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class TraceEntry:
    """State after ``k`` iterations; ``step_norm`` is that of the step taken to reach it."""

    k: int
    residual_norm: float
    step_norm: float
    mu: float
    z: np.ndarray


@dataclass(frozen=True)
class SolveReport:
    z: IterateZ
    residual_norm: float
    iterations: int
    termination: Termination
    trace: list[TraceEntry]
    time_s: float
    config: SolverConfig
    detail: str = ""

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED


def initialize(problem: BilevelProblem, config: SolverConfig | None = None) -> IterateZ:
    """Starting point: ``u0 = max(0.01, -g)``, ``v0 = max(0.01, -G)``, ``w0 = u0``."""
    x0, y0 = problem.start_point()
    _, _, G, g = evaluate(problem, x0, y0)
    u0 = np.maximum(0.01, -g)
    v0 = np.maximum(0.01, -G)
    return IterateZ(x0, y0, u0, v0, u0.copy())


def mu_next(mu: float, k: int) -> float:
    """Power schedule ``mu ** (k + 1)``, floored at the smallest normal float."""
    return max(float(mu) ** (k + 1), np.finfo(float).tiny)


def solve(problem: BilevelProblem, config: SolverConfig, z0=None) -> SolveReport:
    """Run the selected stepper with full steps until the exact residual is below ``eps``.

    Raises:
        DegeneratePairError: the exact policy met a ``(0, 0)`` pair.
    """
    start = time.perf_counter()
    lam, policy = config.lam, config.mu_policy
    z = (initialize(problem, config) if z0 is None else as_iterate(problem, z0)).stack()
    mu = policy.initial
    r = residual(problem, lam, z)
    phi = float(r @ r)
    trace = [TraceEntry(0, float(np.sqrt(phi)), float("nan"), mu, z.copy())]
    damping = config.lm_damping_init
    termination = Termination.MAX_ITERATIONS
    detail = f"iteration budget {config.max_iter} exhausted"
    k = 0

    while True:
        if not np.isfinite(phi):
            termination = Termination.DIVERGED
            detail = "non-finite residual"
            break
        if np.sqrt(phi) < config.eps:
            termination = Termination.CONVERGED
            detail = f"residual norm {np.sqrt(phi):.3e} < {config.eps:g}"
            break
        if k >= config.max_iter:
            break
        J = assemble_jacobian(problem, lam, mu, z)
        rhs = residual_smoothed(problem, lam, mu, z) if config.smoothed_rhs else r
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(rhs))):
            termination = Termination.DIVERGED
            detail = "non-finite Jacobian or right-hand side"
            break
        try:
            if config.stepper == "gauss_newton":
                d = normal_equations_step(J, rhs)
            elif config.stepper == "pseudo_newton":
                d = pseudo_step(J, rhs)
            else:
                d = lm_step(J, rhs, damping)
        except SingularMatrixError as exc:
            if config.stepper == "gauss_newton":
                termination = Termination.SINGULAR_NORMAL_MATRIX
                detail = str(exc)
                break
            # damping too small for the damped matrix to be numerically regular
            d = None

        k += 1
        if d is None:
            damping *= 2.0
            trace.append(TraceEntry(k, float(np.sqrt(phi)), 0.0, mu, z.copy()))
            if damping > LM_DAMPING_MAX:
                termination = Termination.STALLED
                detail = f"damping exceeded {LM_DAMPING_MAX:g}"
                break
            continue

        z_new = z + d
        if not np.all(np.isfinite(z_new)):
            trace.append(TraceEntry(k, float("nan"), float(np.linalg.norm(d)), mu, z_new))
            termination = Termination.DIVERGED
            detail = "non-finite iterate"
            z = z_new
            phi = float("nan")
            break
        r_new = residual(problem, lam, z_new)
        phi_new = float(r_new @ r_new)

        stalled = ""
        change = abs(phi_new - phi)
        if config.stepper == "levenberg_marquardt" and not phi_new < phi:
            damping *= 2.0
            if damping > LM_DAMPING_MAX:
                stalled = f"damping exceeded {LM_DAMPING_MAX:g}"
        else:
            if np.isfinite(phi_new) and change <= config.stall_tol * phi:
                stalled = f"relative merit change {change / phi:.3e} <= {config.stall_tol:g}"
            z, r, phi = z_new, r_new, phi_new
            if config.stepper == "levenberg_marquardt":
                damping *= 0.5

        if policy.kind == "power":
            mu = mu_next(mu, k - 1)
        trace.append(TraceEntry(k, float(np.sqrt(phi)), float(np.linalg.norm(d)), mu, z.copy()))
        if stalled and not np.sqrt(phi) < config.eps:
            termination = Termination.STALLED
            detail = stalled
            break

    return SolveReport(
        z=IterateZ.from_vector(problem, z),
        residual_norm=float(np.sqrt(phi)) if np.isfinite(phi) else float("nan"),
        iterations=k,
        termination=termination,
        trace=trace,
        time_s=time.perf_counter() - start,
        config=config,
        detail=detail,
    )
